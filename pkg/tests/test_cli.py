"""Configuration loading, claim catalog, report emission, command line."""

import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from symlax.cli import (
    CONFIG_DIR_ENV,
    DEFAULT_CONFIG_NAME,
    build_report,
    emit_report,
    hierarchy_claims,
    lax_claims,
    load_config,
    main,
    numeric_claims,
    resolve_config_path,
    run_claims,
    symbolic_claims,
    write_atomic,
)
from symlax.errors import ConfigInvalid, IoFailure


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def test_defaults_per_equation():
    c = load_config()
    assert c.equation == "chiral"
    assert c.counts == (65, 129, 257)
    assert c.family == "exponential-product"
    s = load_config(equation="sdym")
    assert s.counts == (9, 17, 33)
    assert s.family == "lifted-chiral"
    assert s.extent == 0.5


def test_config_file_parsing(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text(
        "[run]\nequation = chiral\nseed = left-action\nwindow = -1 1\n"
        "lambdas = 0.5 2\n"
        "[grid]\ncounts = 9 17 33\nextent = 2.0\n"
        "[tolerances]\nmin_order = 1.5\n"
        "[matrices]\nM = 0 2; 0 0\n")
    c = load_config(str(p))
    assert c.seed == "left-action"
    assert c.window == (-1, 1)
    assert c.lambdas == (0.5, 2.0)
    assert c.counts == (9, 17, 33)
    assert c.extent == 2.0
    assert c.min_order == 1.5
    assert np.array_equal(c.matrices["M"], [[0.0, 2.0], [0.0, 0.0]])
    # untouched defaults survive
    assert np.array_equal(c.matrices["B"], [[0.0, 0.0], [1.0, 0.0]])


def test_overrides_beat_file(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[grid]\ncounts = 9 17 33\n")
    c = load_config(str(p), counts=(17, 33, 65))
    assert c.counts == (17, 33, 65)


@pytest.mark.parametrize("kw", [
    dict(lambdas=(0.0, 1.0)),
    dict(window=(1, 2)),
    dict(counts=(9, 18, 33)),
    dict(counts=(9, 17)),
    dict(base_margin=5, counts=(9, 17, 33)),
    dict(equation="sdym", family="perturbed-offshell"),
])
def test_invalid_configs_rejected(kw):
    with pytest.raises(ConfigInvalid):
        load_config(**kw)


def test_sdym_requires_traceless_matrices():
    mats = {"A": [[0.0, 1.0], [0.0, 0.0]], "B": [[0.0, 0.0], [1.0, 0.0]],
            "M": [[1.0, 0.0], [0.0, 1.0]], "L": [[0.0, 0.0], [1.0, 0.0]]}
    with pytest.raises(ConfigInvalid):
        load_config(equation="sdym", matrices=mats)


def test_bad_matrix_literal(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[matrices]\nM = 0 x; 0 0\n")
    with pytest.raises(ConfigInvalid):
        load_config(str(p))
    p.write_text("[matrices]\nM = 0 1 2; 0 0\n")
    with pytest.raises(ConfigInvalid):
        load_config(str(p))


def test_unknown_equation():
    with pytest.raises(ConfigInvalid):
        load_config(equation="heat")


def test_config_dir_resolution(tmp_path, monkeypatch):
    d = tmp_path / "cfgs"
    d.mkdir()
    (d / DEFAULT_CONFIG_NAME).write_text("[run]\nseed = left-action\n")
    (d / "other.ini").write_text("[run]\n")
    monkeypatch.setenv(CONFIG_DIR_ENV, str(d))
    assert resolve_config_path(None) == str(d / DEFAULT_CONFIG_NAME)
    assert resolve_config_path("other.ini") == str(d / "other.ini")
    # explicit paths win over the directory
    explicit = tmp_path / "mine.ini"
    explicit.write_text("[run]\n")
    assert resolve_config_path(str(explicit)) == str(explicit)
    monkeypatch.delenv(CONFIG_DIR_ENV)
    assert resolve_config_path(None) is None


# ---------------------------------------------------------------------------
# Claim catalog
# ---------------------------------------------------------------------------

def _ids(claims):
    return [c.id for c in claims]

def test_symbolic_catalog_contents():
    ids = _ids(symbolic_claims(load_config()))
    for expected in ("sym.zero-curvature", "sym.operator-identity",
                     "sym.linearization-routes-agree", "sym.lax-on-shell",
                     "sym.characteristic.right-action",
                     "sym.characteristic.left-action"):
        assert expected in ids
    sdym_ids = _ids(symbolic_claims(load_config(equation="sdym")))
    assert "sym.characteristic.potential-translation" in sdym_ids


def test_hierarchy_catalog_contents():
    ids = _ids(hierarchy_claims(load_config()))
    assert "hier.levels-verified" in ids
    for n in (-2, -1, 0, 1):
        assert f"hier.level.{n}" in ids
    assert "hier.truncation-boundary" in ids


def test_numeric_and_lax_catalogs_build():
    cfg = load_config(counts=(9, 17, 33))
    ids = _ids(numeric_claims(cfg))
    assert "num.field-equation" in ids
    assert "num.conservation.right-action" in ids
    assert "num.potential-defining-relations" in ids
    lx = _ids(lax_claims(cfg))
    assert any(i.startswith("lax.path-independence.") for i in lx)
    assert any(i.startswith("lax.wavefunction-symmetry.") for i in lx)


def test_negative_controls_marked_expected_fail():
    cfg = load_config(family="perturbed-offshell", counts=(9, 17, 33))
    claims = numeric_claims(cfg)
    ids = _ids(claims)
    assert "neg.conservation-ratio" in ids
    assert "neg.residual-nonconvergence" in ids
    assert any(c.expected_fail for c in claims)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _symbolic_report(cfg=None):
    cfg = cfg or load_config()
    return build_report(cfg, run_claims(symbolic_claims(cfg)))


def test_report_deterministic():
    a = emit_report(_symbolic_report())
    b = emit_report(_symbolic_report())
    assert a == b
    json.loads(a)  # well-formed


def test_report_summary_counts():
    rep = _symbolic_report()
    s = rep["summary"]
    assert s["total"] == len(rep["claims"])
    assert s["passed"] == s["total"] and s["overall_pass"]
    assert s["failed"] == 0


def test_failed_claim_flips_overall():
    rep = _symbolic_report()
    records = rep["claims"] + [{
        "id": "made.up", "anchor": "x", "kind": "symbolic",
        "expected_fail": False, "passed": False, "detail": "boom"}]
    rep2 = build_report(load_config(), records)
    assert not rep2["summary"]["overall_pass"]
    assert rep2["summary"]["failed"] == 1
    # expected failures do not flip the verdict
    records[-1]["expected_fail"] = True
    rep3 = build_report(load_config(), records)
    assert rep3["summary"]["overall_pass"]


def test_text_format_renders_same_data():
    rep = _symbolic_report()
    text = emit_report(rep, "text")
    assert "overall PASS" in text
    for r in rep["claims"]:
        assert r["id"] in text
    with pytest.raises(IoFailure):
        emit_report(rep, "yaml")


def test_write_atomic(tmp_path):
    p = tmp_path / "out" / "r.json"
    p.parent.mkdir()
    write_atomic(str(p), "hello\n")
    assert p.read_text() == "hello\n"
    write_atomic(str(p), "world\n")
    assert p.read_text() == "world\n"
    assert [f for f in os.listdir(p.parent)] == ["r.json"]


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------

def test_cli_verify_symbolic():
    r = CliRunner().invoke(main, ["verify-symbolic"])
    assert r.exit_code == 0, r.output
    rep = json.loads(r.output)
    assert rep["summary"]["overall_pass"]


def test_cli_gen_hierarchy_attaches_levels():
    r = CliRunner().invoke(main, ["gen-hierarchy", "--window", "-1", "1"])
    assert r.exit_code == 0, r.output
    rep = json.loads(r.output)
    levels = rep["hierarchy"]["levels"]
    assert set(levels) == {"-1", "0", "1"}
    assert all(l["form"] == "closed" for l in levels.values())


def test_cli_output_file(tmp_path):
    dest = tmp_path / "report.json"
    r = CliRunner().invoke(main, ["verify-symbolic", "--output", str(dest)])
    assert r.exit_code == 0, r.output
    assert json.loads(dest.read_text())["summary"]["overall_pass"]


def test_cli_bad_config_is_an_error(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[run]\nlambdas = 0\n")
    r = CliRunner().invoke(main, ["verify-symbolic", "--config", str(p)])
    assert r.exit_code != 0


def test_cli_exit_nonzero_on_failed_claim(tmp_path):
    # an unattainable order threshold makes the numeric order claims fail
    p = tmp_path / "strict.ini"
    p.write_text("[grid]\ncounts = 9 17 33\n"
                 "[tolerances]\nmin_order = 10\n")
    r = CliRunner().invoke(main, ["verify-numeric", "--config", str(p)])
    assert r.exit_code == 1
    rep = json.loads(r.output)
    assert not rep["summary"]["overall_pass"]
