"""Batch verification front-end.

Reads a plain-text config, runs the symbolic identity suite, hierarchy
generation, the numeric residual suite and the Lax-integration checks, and
emits deterministic machine-readable reports.  The claim catalog is data:
each claim record binds an id and a descriptive anchor to a symbolic and/or
numeric check, so reports are traceable line by line.

Config format (INI; all keys optional, defaults per equation)::

    [run]
    equation = chiral            ; chiral | sdym
    seed     = right-action      ; seed provenance name
    window   = -2 1              ; hierarchy window, must contain 0
    family   = exponential-product
    lambdas  = 0.25 0.5 1 2     ; spectral values, nonzero
    output   = report.json

    [grid]
    origin      = 0.0
    extent      = 1.0            ; per-axis physical length
    counts      = 65 129 257     ; refinement ladder n, 2n-1, 4n-3, ...
    base_margin = 3              ; interior trim on the coarsest grid

    [tolerances]
    min_order       = 1.8        ; required convergence order
    zero_floor      = 1e-9       ; below this a residual ladder counts as exact
    offshell_factor = 1000       ; required off-shell/on-shell residual ratio
    trace_tol       = 1e-8       ; SDYM trace-constraint bound at finest h
    eps             = 0.1        ; off-shell perturbation amplitude

    [matrices]                   ; row-major, rows separated by ';'
    A = 0 1 ; 0 0
    B = 0 0 ; 1 0
    M = 0 1 ; 0 0
    L = 0 0 ; 1 0

The environment variable SYMLAX_CONFIG_DIR names the directory searched for
a config given by bare name (and for ``symlax.ini`` when no config is
given).  Reports are written atomically; the structured (JSON) form is
byte-identical across runs of the same config.
"""

from __future__ import annotations

import json
import os
import sys
import tempfile
from configparser import ConfigParser, Error as ConfigParserError
from dataclasses import dataclass, field as dc_field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import click
import numpy as np

from . import sexpr
from .calculus import (
    covariant_derivative,
    frechet_derivative,
    reduce_mod_field_equation,
    total_derivative,
)
from .equations import (
    Characteristic,
    ClosedForm,
    EquationDef,
    ImplicitSystem,
    catalog_characteristics,
    equation_names,
    field_equation_residual,
    get_equation,
    seed_characteristics,
    symmetry_condition,
    symmetry_condition_covariant,
    verify_symmetry,
)
from .errors import ConfigInvalid, IoFailure, NonMonotone, SymlaxError
from .expr import comm
from .numerics import (
    Grid,
    GridField,
    ResidualStats,
    SolutionFamily,
    compute_potential,
    conservation_residual,
    convergence_order,
    eval_characteristic,
    fd_residual_field_equation,
    integrate_lax,
    sample_solution,
    scaled_margins,
    symmetry_residual,
)
from .recursion import (
    generate_hierarchy,
    lax_pair,
    lax_truncation_residues,
)

CONFIG_DIR_ENV = "SYMLAX_CONFIG_DIR"
DEFAULT_CONFIG_NAME = "symlax.ini"

_DEFAULT_MATRICES = {
    "A": [[0.0, 1.0], [0.0, 0.0]],
    "B": [[0.0, 0.0], [1.0, 0.0]],
    "M": [[0.0, 1.0], [0.0, 0.0]],
    "L": [[0.0, 0.0], [1.0, 0.0]],
}

_EQ_DEFAULTS = {
    "chiral": dict(family="exponential-product", extent=1.0,
                   counts=(65, 129, 257), seed="right-action"),
    "sdym": dict(family="lifted-chiral", extent=0.5,
                 counts=(9, 17, 33), seed="right-action"),
}


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    equation: str = "chiral"
    seed: str = "right-action"
    window: Tuple[int, int] = (-2, 1)
    family: str = "exponential-product"
    lambdas: Tuple[float, ...] = (0.25, 0.5, 1.0, 2.0)
    origin: float = 0.0
    extent: float = 1.0
    counts: Tuple[int, ...] = (65, 129, 257)
    base_margin: int = 3
    min_order: float = 1.8
    zero_floor: float = 1e-9
    offshell_factor: float = 1000.0
    trace_tol: float = 1e-8
    eps: float = 0.1
    matrices: Dict[str, np.ndarray] = dc_field(default_factory=dict)
    output: Optional[str] = None

    def validate(self) -> "RunConfig":
        if self.equation not in equation_names():
            raise ConfigInvalid(f"unknown equation {self.equation!r}")
        if not (self.window[0] <= 0 <= self.window[1]):
            raise ConfigInvalid("hierarchy window must contain 0")
        if any(l == 0 for l in self.lambdas):
            raise ConfigInvalid("spectral values must be nonzero")
        if len(self.counts) < 3:
            raise ConfigInvalid("need at least 3 grid counts for a ladder")
        n0 = self.counts[0]
        for a, b in zip(self.counts, self.counts[1:]):
            if b != 2 * a - 1:
                raise ConfigInvalid(
                    f"grid counts must halve the spacing each step "
                    f"(n -> 2n-1); got {a} -> {b}")
        if n0 <= 2 * self.base_margin:
            raise ConfigInvalid("base margin leaves no interior points")
        for name, m in self.matrices.items():
            m = np.asarray(m)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ConfigInvalid(f"matrix {name!r} is not square")
        dims = {np.asarray(m).shape[0] for m in self.matrices.values()}
        if len(dims) > 1:
            raise ConfigInvalid("parameter matrices must share one dimension")
        if self.equation == "sdym":
            if self.family == "perturbed-offshell":
                raise ConfigInvalid(
                    "the off-shell control family is two-dimensional; "
                    "use equation = chiral with it")
            for name in ("A", "B", "M", "L"):
                m = np.asarray(self.matrices[name])
                if abs(np.trace(m)) > 1e-12:
                    raise ConfigInvalid(
                        f"matrix {name!r} must be traceless for sdym")
        return self

    def grids(self) -> List[Grid]:
        eq = get_equation(self.equation)
        out = []
        for n in self.counts:
            h = self.extent / (n - 1)
            out.append(Grid.regular(eq.vs.names, self.origin, h, n))
        return out

    def margins(self) -> List[int]:
        return scaled_margins(self.counts, self.base_margin)

    def family_obj(self) -> SolutionFamily:
        eps = self.eps if self.family == "perturbed-offshell" else 0.0
        return SolutionFamily(self.family, self.matrices["A"],
                              self.matrices["B"], eps)

    def params(self) -> Dict[str, np.ndarray]:
        return {k: np.asarray(v, dtype=complex)
                for k, v in self.matrices.items() if k in ("M", "L")}

    def echo(self) -> dict:
        return {
            "equation": self.equation,
            "seed": self.seed,
            "window": list(self.window),
            "family": self.family,
            "lambdas": [_fmt(l) for l in self.lambdas],
            "origin": _fmt(self.origin),
            "extent": _fmt(self.extent),
            "counts": list(self.counts),
            "base_margin": self.base_margin,
            "min_order": _fmt(self.min_order),
            "zero_floor": _fmt(self.zero_floor),
            "offshell_factor": _fmt(self.offshell_factor),
            "trace_tol": _fmt(self.trace_tol),
            "eps": _fmt(self.eps),
            "matrices": {k: [[_fmt(float(x)) for x in row]
                             for row in np.asarray(v, dtype=float).tolist()]
                         for k, v in sorted(self.matrices.items())},
        }


def _parse_matrix(text: str) -> np.ndarray:
    try:
        rows = [[float(x) for x in row.split()]
                for row in text.split(";") if row.strip()]
    except ValueError:
        raise ConfigInvalid(f"bad matrix literal {text!r}")
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise ConfigInvalid(f"ragged matrix literal {text!r}")
    return np.asarray(rows)


def resolve_config_path(name: Optional[str]) -> Optional[str]:
    """Resolve a config argument: explicit paths win; bare names (and the
    default name) are searched in $SYMLAX_CONFIG_DIR."""
    cfg_dir = os.environ.get(CONFIG_DIR_ENV)
    if name is None:
        if cfg_dir:
            cand = os.path.join(cfg_dir, DEFAULT_CONFIG_NAME)
            if os.path.exists(cand):
                return cand
        return None
    if os.path.sep in name or os.path.exists(name):
        return name
    if cfg_dir:
        cand = os.path.join(cfg_dir, name)
        if os.path.exists(cand):
            return cand
    return name


def load_config(path: Optional[str] = None, **overrides) -> RunConfig:
    """Build a RunConfig from an INI file plus keyword overrides."""
    cp = ConfigParser()
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigInvalid(f"cannot read config {path!r}: {exc}")
        except ConfigParserError as exc:
            raise ConfigInvalid(f"malformed config {path!r}: {exc}")

    def get(section, key, default=None):
        if cp.has_option(section, key):
            return cp.get(section, key)
        return default

    equation = overrides.pop("equation", None) or get("run", "equation", "chiral")
    if equation not in _EQ_DEFAULTS:
        raise ConfigInvalid(f"unknown equation {equation!r}")
    eqd = _EQ_DEFAULTS[equation]

    try:
        cfg = RunConfig(
            equation=equation,
            seed=get("run", "seed", eqd["seed"]),
            window=tuple(int(x) for x in get("run", "window", "-2 1").split()),
            family=get("run", "family", eqd["family"]),
            lambdas=tuple(float(x) for x in
                          get("run", "lambdas", "0.25 0.5 1 2").split()),
            origin=float(get("grid", "origin", "0.0")),
            extent=float(get("grid", "extent", str(eqd["extent"]))),
            counts=tuple(int(x) for x in
                         get("grid", "counts",
                             " ".join(map(str, eqd["counts"]))).split()),
            base_margin=int(get("grid", "base_margin", "3")),
            min_order=float(get("tolerances", "min_order", "1.8")),
            zero_floor=float(get("tolerances", "zero_floor", "1e-9")),
            offshell_factor=float(get("tolerances", "offshell_factor", "1000")),
            trace_tol=float(get("tolerances", "trace_tol", "1e-8")),
            eps=float(get("tolerances", "eps", "0.1")),
            output=get("run", "output"),
        )
    except ValueError as exc:
        raise ConfigInvalid(f"bad config value: {exc}")
    if len(cfg.window) != 2:
        raise ConfigInvalid("window must be two integers")

    matrices = {k: np.asarray(v, dtype=float)
                for k, v in _DEFAULT_MATRICES.items()}
    if cp.has_section("matrices"):
        for key, val in cp.items("matrices"):
            matrices[key.upper()] = _parse_matrix(val)
    cfg.matrices = matrices

    for key, val in overrides.items():
        if val is not None:
            setattr(cfg, key, val)
    return cfg.validate()


# ---------------------------------------------------------------------------
# Claims and results
# ---------------------------------------------------------------------------

@dataclass
class ClaimResult:
    passed: bool
    symbolic: Optional[str] = None
    residuals: Optional[List[dict]] = None
    order: Optional[str] = None
    detail: str = ""


@dataclass
class Claim:
    id: str
    anchor: str
    kind: str                       # symbolic | hierarchy | numeric | lax
    run: Callable[[], ClaimResult]
    expected_fail: bool = False


def _fmt(x: float) -> str:
    return f"{float(x):.12e}"


def _stats_dict(r: ResidualStats) -> dict:
    return {"max": _fmt(r.max), "l2": _fmt(r.l2),
            "margin": r.margin, "h": _fmt(r.h)}


def _sym_result(e) -> ClaimResult:
    if e.is_zero:
        return ClaimResult(True, symbolic="zero")
    return ClaimResult(False, symbolic="nonzero",
                       detail=f"surviving residue: {e!r}")


def _order_result(residuals: Sequence[ResidualStats], hs: Sequence[float],
                  cfg: RunConfig, norm: str = "max") -> ClaimResult:
    vals = [getattr(r, norm) for r in residuals]
    stats = [_stats_dict(r) for r in residuals]
    try:
        est = convergence_order(vals, hs, zero_floor=cfg.zero_floor)
    except NonMonotone as exc:
        return ClaimResult(False, residuals=stats, order="non-monotone",
                           detail=str(exc))
    if est.exact:
        return ClaimResult(True, residuals=stats, order="exact")
    ok = est.order >= cfg.min_order
    return ClaimResult(ok, residuals=stats, order=_fmt(est.order),
                       detail="" if ok else
                       f"order {est.order:.3f} < required {cfg.min_order}")


# ---------------------------------------------------------------------------
# Symbolic claim catalog
# ---------------------------------------------------------------------------

def symbolic_claims(cfg: RunConfig) -> List[Claim]:
    eq = get_equation(cfg.equation)
    vs = eq.vs
    phi = vs.field("phi")
    s1, s2 = eq.slots
    claims: List[Claim] = []

    def add(cid, anchor, fn):
        claims.append(Claim(cid, anchor, "symbolic", fn))

    add("sym.solved-form-consistency",
        "the field equation reduces to zero modulo its own solved form",
        lambda: _sym_result(reduce_mod_field_equation(
            field_equation_residual(eq), eq)))

    def zero_curvature():
        c = (covariant_derivative(covariant_derivative(phi, eq, s2.name), eq, s1.name)
             - covariant_derivative(covariant_derivative(phi, eq, s1.name), eq, s2.name))
        return _sym_result(c)
    add("sym.zero-curvature",
        "the two covariant derivative operators commute identically "
        "(pure-gauge connections)", zero_curvature)

    def operator_identity():
        F = field_equation_residual(eq)
        lhs = vs.zero()
        for s in eq.slots:
            lhs = lhs + covariant_derivative(
                total_derivative(phi, s.div_var), eq, s.name)
            lhs = lhs - total_derivative(
                covariant_derivative(phi, eq, s.name), s.div_var)
        return _sym_result(lhs + comm(F, phi))
    add("sym.operator-identity",
        "covariant-then-plain and plain-then-covariant divergences differ "
        "exactly by the commutator with the field equation", operator_identity)

    def route_equivalence():
        q = eq.u() * vs.param("M")
        return _sym_result(symmetry_condition(eq, q)
                           - symmetry_condition_covariant(eq, q))
    add("sym.linearization-routes-agree",
        "linearizing the field equation along Q equals the covariant "
        "divergence of the transported characteristic", route_equivalence)

    def potential_cross():
        rules = eq.potential_rules[eq.potential_name]
        (v1, e1), (v2, e2) = sorted(rules.items())
        return _sym_result(reduce_mod_field_equation(
            total_derivative(e1, v2) - total_derivative(e2, v1), eq))
    add("sym.potential-cross-consistency",
        "the two defining relations of the nonlocal potential have equal "
        "cross-derivatives on-shell", potential_cross)

    def potential_frechet_cross():
        q = eq.u() * vs.param("M")
        ctx = eq.frechet_ctx(q)
        rules = eq.potential_rules[eq.potential_name]
        (v1, e1), (v2, e2) = sorted(rules.items())
        d = (total_derivative(frechet_derivative(e1, ctx), v2)
             - total_derivative(frechet_derivative(e2, ctx), v1))
        return _sym_result(reduce_mod_field_equation(d, eq, ctx=ctx))
    add("sym.potential-linearized-cross-consistency",
        "the linearized potential relations are cross-derivative consistent "
        "on-shell for a symmetry direction", potential_frechet_cross)

    for q in catalog_characteristics(eq):
        def check(q=q):
            v = verify_symmetry(eq, q)
            if v.holds:
                return ClaimResult(True, symbolic="holds")
            return ClaimResult(False, symbolic="fails",
                               detail=f"residue: {v.residue!r}")
        add(f"sym.characteristic.{q.provenance}",
            f"the {q.provenance} characteristic satisfies the linearized "
            f"equation on-shell", check)

    lax = lax_pair(eq)
    add("sym.lax-cross-identity",
        "the cross-derivative of the linear pair equals the spectral scalar "
        "times the linearized equation of the wavefunction",
        lambda: _sym_result(lax.cross_identity))
    add("sym.lax-covariant-identity",
        "the covariant combination of the linear pair reduces to the "
        "commutator with the field equation",
        lambda: _sym_result(lax.covariant_identity))
    add("sym.lax-on-shell",
        "the integrability residue of the linear pair vanishes on-shell",
        lambda: _sym_result(lax.covariant_residue_on_shell))
    return claims


# ---------------------------------------------------------------------------
# Hierarchy claim catalog
# ---------------------------------------------------------------------------

def _seed_by_provenance(eq: EquationDef, name: str) -> Characteristic:
    for s in seed_characteristics(eq):
        if s.provenance == name:
            return s
    known = [s.provenance for s in seed_characteristics(eq)]
    raise ConfigInvalid(f"unknown seed {name!r}; known: {known}")


def hierarchy_claims(cfg: RunConfig) -> List[Claim]:
    eq = get_equation(cfg.equation)
    vs = eq.vs
    seed = _seed_by_provenance(eq, cfg.seed)
    state: dict = {}

    def hierarchy():
        if "h" not in state:
            state["h"] = generate_hierarchy(eq, seed, *cfg.window)
        return state["h"]

    claims: List[Claim] = []

    def levels_verified():
        h = hierarchy()
        bad = {n: v for n, v in h.verdicts.items()
               if v not in ("holds",) and not v.startswith("deferred")}
        if bad:
            return ClaimResult(False, detail=f"failing levels: {bad}")
        counts = {"closed": sum(isinstance(q.body, ClosedForm)
                                for q in h.charges.values()),
                  "implicit": sum(isinstance(q.body, ImplicitSystem)
                                  for q in h.charges.values())}
        return ClaimResult(True, symbolic="holds",
                           detail=f"levels {sorted(h.charges)}, {counts}")
    claims.append(Claim(
        "hier.levels-verified",
        "every generated hierarchy level passes its symmetry verification",
        "hierarchy", levels_verified))

    expected = {n: f for n, f in _expected_forms(eq, cfg.seed).items()
                if cfg.window[0] <= n <= cfg.window[1]}
    for level, form in sorted(expected.items()):
        def check(level=level, form=form):
            h = hierarchy()
            if level not in h.charges:
                return ClaimResult(False, detail=f"level {level} not generated")
            body = h.charges[level].body
            if form == "implicit":
                ok = isinstance(body, ImplicitSystem)
                return ClaimResult(ok, symbolic="implicit-pair" if ok else
                                   "unexpected-closed-form")
            if not isinstance(body, ClosedForm):
                return ClaimResult(False, detail="expected a closed form")
            ok = body.expr == form
            return ClaimResult(ok, symbolic="match" if ok else "mismatch",
                               detail="" if ok else
                               f"got {body.expr!r}, expected {form!r}")
        claims.append(Claim(
            f"hier.level.{level}",
            f"recursion level {level} reproduces the known form exactly",
            "hierarchy", check))

    def truncation():
        h = hierarchy()
        closed = {n: q for n, q in h.charges.items()
                  if isinstance(q.body, ClosedForm)}
        ks = sorted(closed)
        window = {n: closed[n] for n in
                  range(ks[0], ks[-1] + 1) if n in closed}
        if sorted(window) != list(range(ks[0], ks[-1] + 1)):
            return ClaimResult(False, detail="closed-form window not contiguous")
        residues = lax_truncation_residues(eq, window)
        lo, hi = ks[0], ks[-1]
        boundary = {lo - 1, hi, lo, hi + 1}
        for per_eq in residues:
            interior = {p: r for p, r in per_eq.items()
                        if not r.is_zero and p not in boundary}
            if interior:
                return ClaimResult(False,
                                   detail=f"interior spectral powers survive: "
                                          f"{sorted(interior)}")
        return ClaimResult(True, symbolic="boundary-only")
    claims.append(Claim(
        "hier.truncation-boundary",
        "substituting the truncated spectral sum into the linear pair leaves "
        "residues only at the boundary spectral powers",
        "hierarchy", truncation))
    return claims


def _expected_forms(eq: EquationDef, seed: str) -> dict:
    """Frozen expected closed forms per recursion level, keyed by level."""
    vs = eq.vs
    u, ui = eq.u(), eq.u_inv()
    X, M, L = vs.pot(eq.potential_name), vs.param("M"), vs.param("L")
    if eq.name == "chiral" and seed == "right-action":
        return {1: u * comm(X, M), 0: u * M, -1: L * u, -2: "implicit"}
    if eq.name == "sdym" and seed == "right-action":
        return {1: u * comm(X, M), 0: u * M, -1: L * u, -2: "implicit"}
    if eq.name == "sdym" and seed == "y-translation":
        return {1: u * vs.pot(eq.potential_name, "y"),
                0: vs.field(eq.field_name, "y"),
                -1: vs.field(eq.field_name, "zb"),
                -2: "implicit"}
    return {}


# ---------------------------------------------------------------------------
# Numeric claim catalog
# ---------------------------------------------------------------------------

class _NumericContext:
    """Lazily sampled solution ladder shared by the numeric claims."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.eq = get_equation(cfg.equation)
        self.grids = cfg.grids()
        self.margins = cfg.margins()
        self.hs = [max(g.spacings) for g in self.grids]
        self._u: Dict[int, GridField] = {}
        self._pot: Dict[int, GridField] = {}

    def u(self, i: int) -> GridField:
        if i not in self._u:
            self._u[i] = sample_solution(self.cfg.family_obj(), self.grids[i])
        return self._u[i]

    def potential(self, i: int) -> GridField:
        if i not in self._pot:
            self._pot[i] = compute_potential(self.eq, self.u(i)).field
        return self._pot[i]

    def onshell_twin(self) -> "_NumericContext":
        """The unperturbed counterpart, for off-shell ratio claims."""
        cfg2 = RunConfig(**{**self.cfg.__dict__,
                            "family": _EQ_DEFAULTS[self.cfg.equation]["family"]})
        return _NumericContext(cfg2)


def numeric_claims(cfg: RunConfig) -> List[Claim]:
    ctx = _NumericContext(cfg)
    eq = ctx.eq
    cfgp = cfg.params()
    offshell = cfg.family == "perturbed-offshell"
    claims: List[Claim] = []

    def ladder(fn) -> ClaimResult:
        stats = [fn(i) for i in range(len(ctx.grids))]
        return _order_result(stats, ctx.hs, cfg)

    claims.append(Claim(
        "num.field-equation",
        "the finite-difference residual of the field equation converges at "
        "second order on the sampled solution",
        "numeric",
        lambda: ladder(lambda i: fd_residual_field_equation(
            eq, ctx.u(i), margin=ctx.margins[i])),
        expected_fail=offshell))

    for q in catalog_characteristics(eq):
        needs_pot = (isinstance(q.body, ClosedForm)
                     and q.body.expr.has_potentials())

        def cons(q=q, needs_pot=needs_pot) -> ClaimResult:
            def one(i):
                pot = ctx.potential(i) if needs_pot else None
                qg = eval_characteristic(q, eq, ctx.u(i), params=cfgp,
                                         potential=pot)
                return conservation_residual(eq, qg, ctx.u(i),
                                             margin=ctx.margins[i])
            return ladder(one)
        claims.append(Claim(
            f"num.conservation.{q.provenance}",
            f"the conserved current of the {q.provenance} characteristic has "
            f"second-order divergence residual on the grid",
            "numeric", cons, expected_fail=offshell))

    def potential_consistency() -> ClaimResult:
        from .numerics import eval_on_grid, make_env

        def one(i):
            u, pot = ctx.u(i), ctx.potential(i)
            grid = ctx.grids[i]
            env = make_env(eq, u)
            worst = None
            for v, rhs in eq.potential_rules[eq.potential_name].items():
                ax = grid.axis_index(v)
                dX = np.gradient(pot.values, grid.axes[ax].h, axis=ax,
                                 edge_order=2)
                r = dX - eval_on_grid(rhs, env)
                from .numerics import residual_stats
                st = residual_stats(r, grid, ctx.margins[i])
                if worst is None or st.max > worst.max:
                    worst = st
            return worst
        return ladder(one)
    claims.append(Claim(
        "num.potential-defining-relations",
        "the integrated nonlocal potential satisfies both of its defining "
        "relations to second order",
        "numeric", potential_consistency, expected_fail=offshell))

    if eq.name == "chiral":
        def implicit_charge() -> ClaimResult:
            seed = _seed_by_provenance(eq, "right-action")
            h = generate_hierarchy(eq, seed, -2, 0)
            q = h.charges[-2]

            def one(i):
                qg = eval_characteristic(q, eq, ctx.u(i), params=cfgp)
                return conservation_residual(eq, qg, ctx.u(i),
                                             margin=ctx.margins[i])
            return ladder(one)
        claims.append(Claim(
            "num.implicit-charge",
            "the path-integrated implicit characteristic two levels below "
            "the seed is conserved to the expected order",
            "numeric", implicit_charge, expected_fail=offshell))

    if eq.name == "sdym":
        def det_preserved() -> ClaimResult:
            u = ctx.u(len(ctx.grids) - 1)
            dev = float(np.abs(np.linalg.det(u.values) - 1.0).max())
            ok = dev <= 1e-10
            return ClaimResult(ok, detail=f"max |det - 1| = {dev:.3e}")
        claims.append(Claim(
            "num.determinant-preserved",
            "the sampled solution stays unimodular at every grid point",
            "numeric", det_preserved))

        for q in catalog_characteristics(eq):
            def trace_check(q=q) -> ClaimResult:
                i = len(ctx.grids) - 1
                u = ctx.u(i)
                needs_pot = (isinstance(q.body, ClosedForm)
                             and q.body.expr.has_potentials())
                pot = ctx.potential(i) if needs_pot else None
                qg = eval_characteristic(q, eq, u, params=cfgp, potential=pot)
                w = np.linalg.inv(u.values) @ qg.values
                tr = float(np.abs(np.trace(w, axis1=-2, axis2=-1)).max())
                ok = tr <= cfg.trace_tol
                return ClaimResult(ok, detail=f"max |trace| = {tr:.3e}"
                                   + ("" if ok else
                                      f" > tol {cfg.trace_tol:.1e}"))
            claims.append(Claim(
                f"num.trace-constraint.{q.provenance}",
                f"the {q.provenance} characteristic keeps the transported "
                f"field traceless on the finest grid",
                "numeric", trace_check))

    if offshell:
        claims.extend(_negative_control_claims(cfg, ctx))
    return claims


def _negative_control_claims(cfg: RunConfig, ctx: _NumericContext) -> List[Claim]:
    eq = ctx.eq
    cfgp = cfg.params()
    twin = ctx.onshell_twin()
    i = len(ctx.grids) - 1
    seed_q = _seed_by_provenance(eq, "right-action")

    def conservation_ratio() -> ClaimResult:
        off = conservation_residual(
            eq, eval_characteristic(seed_q, eq, ctx.u(i), params=cfgp),
            ctx.u(i), margin=ctx.margins[i])
        on = conservation_residual(
            eq, eval_characteristic(seed_q, eq, twin.u(i), params=cfgp),
            twin.u(i), margin=ctx.margins[i])
        ratio = off.max / max(on.max, 1e-300)
        ok = ratio >= cfg.offshell_factor
        return ClaimResult(ok, residuals=[_stats_dict(off), _stats_dict(on)],
                           detail=f"off/on ratio = {ratio:.3e}")

    def lax_ratio() -> ClaimResult:
        lam = cfg.lambdas[0]
        off = integrate_lax(eq, ctx.u(i), lam).compat_residual
        on = integrate_lax(eq, twin.u(i), lam).compat_residual
        ratio = off / max(on, 1e-300)
        ok = ratio >= cfg.offshell_factor
        return ClaimResult(ok, detail=f"off/on ratio = {ratio:.3e} "
                                      f"(off {off:.3e}, on {on:.3e})")

    def nonconvergence() -> ClaimResult:
        stats = [fd_residual_field_equation(eq, ctx.u(j), margin=ctx.margins[j])
                 for j in range(len(ctx.grids))]
        vals = [s.max for s in stats]
        try:
            est = convergence_order(vals, ctx.hs, zero_floor=cfg.zero_floor)
        except NonMonotone:
            return ClaimResult(True, order="non-monotone",
                               residuals=[_stats_dict(s) for s in stats])
        ok = est.order < 0.5
        return ClaimResult(ok, order=_fmt(est.order),
                           residuals=[_stats_dict(s) for s in stats],
                           detail="" if ok else
                           "off-shell residual unexpectedly converges")

    return [
        Claim("neg.conservation-ratio",
              "off-shell conservation residuals exceed the on-shell ones by "
              "the configured factor at equal spacing",
              "numeric", conservation_ratio),
        Claim("neg.lax-compatibility-ratio",
              "off-shell wavefunction path-dependence exceeds the on-shell "
              "one by the configured factor at equal spacing",
              "numeric", lax_ratio),
        Claim("neg.residual-nonconvergence",
              "the off-shell field-equation residual does not converge "
              "(bounded below by the perturbation)",
              "numeric", nonconvergence),
    ]


# ---------------------------------------------------------------------------
# Lax claim catalog
# ---------------------------------------------------------------------------

def lax_claims(cfg: RunConfig) -> List[Claim]:
    ctx = _NumericContext(cfg)
    eq = ctx.eq
    offshell = cfg.family == "perturbed-offshell"
    claims: List[Claim] = []

    cache: Dict[Tuple[float, int], object] = {}

    def lax(lam, i):
        if (lam, i) not in cache:
            cache[(lam, i)] = integrate_lax(eq, ctx.u(i), lam)
        return cache[(lam, i)]

    for lam in cfg.lambdas:
        tag = f"{lam:g}"

        def compat(lam=lam) -> ClaimResult:
            vals = [lax(lam, i).compat_residual for i in range(len(ctx.grids))]
            stats = [{"max": _fmt(v), "h": _fmt(ctx.hs[i])}
                     for i, v in enumerate(vals)]
            try:
                est = convergence_order(vals, ctx.hs, zero_floor=cfg.zero_floor)
            except NonMonotone as exc:
                return ClaimResult(False, residuals=stats,
                                   order="non-monotone", detail=str(exc))
            if est.exact:
                return ClaimResult(True, residuals=stats, order="exact")
            ok = est.order >= cfg.min_order
            return ClaimResult(ok, residuals=stats, order=_fmt(est.order))
        claims.append(Claim(
            f"lax.path-independence.{tag}",
            f"the two staircase integrations of the wavefunction agree to "
            f"second order at spectral value {tag}",
            "lax", compat, expected_fail=offshell))

        def sym(lam=lam) -> ClaimResult:
            stats = [symmetry_residual(eq, lax(lam, i).psi, ctx.u(i),
                                       margin=ctx.margins[i])
                     for i in range(len(ctx.grids))]
            return _order_result(stats, ctx.hs, cfg)
        claims.append(Claim(
            f"lax.wavefunction-symmetry.{tag}",
            f"the integrated wavefunction satisfies the linearized equation "
            f"to second order at spectral value {tag}",
            "lax", sym, expected_fail=offshell))
    return claims


# ---------------------------------------------------------------------------
# Execution and reports
# ---------------------------------------------------------------------------

def run_claims(claims: Sequence[Claim]) -> List[dict]:
    records = []
    for c in claims:
        try:
            res = c.run()
        except SymlaxError as exc:
            res = ClaimResult(False, detail=f"{type(exc).__name__}: {exc}")
        except Exception as exc:  # recorded, never aborts the suite
            res = ClaimResult(False, detail=f"{type(exc).__name__}: {exc}")
        rec = {
            "id": c.id,
            "anchor": c.anchor,
            "kind": c.kind,
            "expected_fail": c.expected_fail,
            "passed": res.passed,
            "detail": res.detail,
        }
        if res.symbolic is not None:
            rec["symbolic"] = res.symbolic
        if res.residuals is not None:
            rec["residuals"] = res.residuals
        if res.order is not None:
            rec["order"] = res.order
        records.append(rec)
    return records


def build_report(cfg: RunConfig, records: List[dict]) -> dict:
    failed = [r for r in records if not r["passed"] and not r["expected_fail"]]
    expected_failed = [r for r in records
                       if not r["passed"] and r["expected_fail"]]
    return {
        "format": "symlax-report 1",
        "config": cfg.echo(),
        "claims": records,
        "summary": {
            "total": len(records),
            "passed": sum(r["passed"] for r in records),
            "failed": len(failed),
            "expected_failures": len(expected_failed),
            "overall_pass": not failed,
        },
    }


def emit_report(report: dict, fmt: str = "structured") -> str:
    if fmt == "structured":
        return json.dumps(report, sort_keys=True, indent=2) + "\n"
    if fmt != "text":
        raise IoFailure(f"unknown report format {fmt!r}")
    lines = []
    cfg = report["config"]
    lines.append(f"equation: {cfg['equation']}   family: {cfg['family']}   "
                 f"seed: {cfg['seed']}")
    lines.append(f"{'claim':44s} {'kind':10s} {'verdict':10s} order")
    lines.append("-" * 78)
    for r in report["claims"]:
        verdict = "pass" if r["passed"] else (
            "xfail" if r["expected_fail"] else "FAIL")
        lines.append(f"{r['id']:44s} {r['kind']:10s} {verdict:10s} "
                     f"{r.get('order', '-')}")
        if r["detail"]:
            lines.append(f"    {r['detail']}")
    s = report["summary"]
    lines.append("-" * 78)
    lines.append(f"total {s['total']}  passed {s['passed']}  "
                 f"failed {s['failed']}  expected-failures "
                 f"{s['expected_failures']}  overall "
                 f"{'PASS' if s['overall_pass'] else 'FAIL'}")
    return "\n".join(lines) + "\n"


def write_atomic(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".symlax-")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path!r}: {exc}")


def run(cfg: RunConfig) -> dict:
    """Full pipeline: symbolic suite, hierarchy, numeric suite, Lax checks."""
    claims = (symbolic_claims(cfg) + hierarchy_claims(cfg)
              + numeric_claims(cfg) + lax_claims(cfg))
    return build_report(cfg, run_claims(claims))


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------

def _finish(cfg: RunConfig, report: dict, fmt: str, output: Optional[str]):
    text = emit_report(report, fmt)
    dest = output or cfg.output
    if dest:
        write_atomic(dest, text)
        click.echo(f"report written to {dest}")
    else:
        click.echo(text, nl=False)
    if not report["summary"]["overall_pass"]:
        sys.exit(1)


_common = [
    click.option("--config", "config_path", default=None,
                 help="Config file (path, or bare name under "
                      "$SYMLAX_CONFIG_DIR)."),
    click.option("--equation", default=None,
                 type=click.Choice(equation_names()),
                 help="Equation registry name."),
    click.option("--output", default=None, help="Report output path."),
    click.option("--format", "fmt", default="structured",
                 type=click.Choice(["structured", "text"]),
                 help="Report serialization."),
]


def _with_common(f):
    for opt in reversed(_common):
        f = opt(f)
    return f


def _load(config_path, equation, **kw) -> RunConfig:
    try:
        return load_config(resolve_config_path(config_path),
                           equation=equation, **kw)
    except ConfigInvalid as exc:
        raise click.ClickException(str(exc))


@click.group()
def main():
    """Symbolic and numeric verification of integrable-structure claims for
    matrix field equations in conservation-law form."""


@main.command("verify-symbolic")
@_with_common
def verify_symbolic_cmd(config_path, equation, output, fmt):
    """Run the exact symbolic identity suite."""
    cfg = _load(config_path, equation)
    report = build_report(cfg, run_claims(symbolic_claims(cfg)))
    _finish(cfg, report, fmt, output)


@main.command("gen-hierarchy")
@_with_common
@click.option("--window", nargs=2, type=int, default=None,
              help="Hierarchy window n_min n_max (must contain 0).")
@click.option("--seed", default=None, help="Seed provenance name.")
def gen_hierarchy_cmd(config_path, equation, output, fmt, window, seed):
    """Generate the recursion hierarchy and verify every level."""
    cfg = _load(config_path, equation,
                window=tuple(window) if window else None, seed=seed)
    eq = get_equation(cfg.equation)
    report = build_report(cfg, run_claims(hierarchy_claims(cfg)))
    # attach the serialized closed forms as data
    h = generate_hierarchy(eq, _seed_by_provenance(eq, cfg.seed), *cfg.window)
    levels = {}
    for n in sorted(h.charges):
        q = h.charges[n]
        if isinstance(q.body, ClosedForm):
            levels[str(n)] = {"form": "closed",
                              "expr": sexpr.dumps(q.body.expr),
                              "verdict": h.verdicts.get(n, ""),
                              "degenerate": q.degenerate}
        elif isinstance(q.body, ImplicitSystem):
            levels[str(n)] = {"form": "implicit",
                              "equations": [sexpr.dumps(e)
                                            for e in q.body.equations],
                              "verdict": h.verdicts.get(n, "")}
    report["hierarchy"] = {"seed": cfg.seed, "levels": levels,
                           "notes": list(h.notes)}
    _finish(cfg, report, fmt, output)


@main.command("verify-numeric")
@_with_common
@click.option("--counts", default=None,
              help="Grid ladder override, e.g. '65 129 257'.")
def verify_numeric_cmd(config_path, equation, output, fmt, counts):
    """Run the grid residual suite on the configured solution family."""
    cfg = _load(config_path, equation,
                counts=tuple(int(x) for x in counts.split()) if counts else None)
    report = build_report(cfg, run_claims(numeric_claims(cfg)))
    _finish(cfg, report, fmt, output)


@main.command("lax-check")
@_with_common
@click.option("--lam", "lambdas", multiple=True, type=float,
              help="Spectral value(s); repeatable.")
def lax_check_cmd(config_path, equation, output, fmt, lambdas):
    """Integrate the linear pair and check path independence and the
    wavefunction's symmetry residual over the grid ladder."""
    cfg = _load(config_path, equation,
                lambdas=tuple(lambdas) if lambdas else None)
    report = build_report(cfg, run_claims(lax_claims(cfg)))
    _finish(cfg, report, fmt, output)


@main.command("report")
@_with_common
def report_cmd(config_path, equation, output, fmt):
    """Run every suite and emit the combined report."""
    cfg = _load(config_path, equation)
    report = run(cfg)
    _finish(cfg, report, fmt, output)


if __name__ == "__main__":
    main()
