"""Concrete field equations in divergence form.

Two equations are registered: the principal chiral field model in two
variables and the self-dual Yang-Mills (SDYM) equation in four.  Each
declares its divergence components, pure-gauge connections, the
leading-derivative solved form used for on-shell reduction, the nonlocal
potential defining system, and the library of seed symmetry characteristics.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Dict, Optional, Tuple

from .calculus import (
    FrechetContext,
    covariant_derivative,
    frechet_derivative,
    reduce_mod_field_equation,
    total_derivative,
)
from .errors import UnknownConnection
from .expr import JetExpr, VarSpace


@dataclass(frozen=True)
class ConnSlot:
    """A covariant-derivative slot: connection expression, the variable its
    plain-derivative part uses, and the outer divergence variable it pairs
    with in the conservation form."""
    name: str
    connection: JetExpr
    cov_var: str
    div_var: str


@dataclass(frozen=True)
class EquationDef:
    name: str
    vs: VarSpace
    field_name: str
    slots: Tuple[ConnSlot, ...]
    solved_lead: tuple
    solved_rhs: JetExpr
    potential_rules: Dict[str, Dict[str, JetExpr]]
    potential_name: str
    traceless: bool

    def slot(self, which: str) -> ConnSlot:
        for s in self.slots:
            if s.name == which:
                return s
        raise UnknownConnection(
            f"{self.name} has no connection slot {which!r}; "
            f"known: {[s.name for s in self.slots]}")

    def u(self) -> JetExpr:
        return self.vs.field(self.field_name)

    def u_inv(self) -> JetExpr:
        return self.vs.inv(self.field_name)

    def divergence_components(self) -> Dict[str, JetExpr]:
        """Conserved-current components of F itself, keyed by divergence
        variable: F = sum_v D_v(component_v)."""
        return {s.div_var: self.connection_of(s) for s in self.slots}

    def connection_of(self, s: ConnSlot) -> JetExpr:
        return s.connection

    def bt_K(self, q: JetExpr) -> JetExpr:
        """BT kernel K(Q'; u) = u^-1 Q'."""
        return self.u_inv() * q

    def frechet_ctx(self, q: JetExpr) -> FrechetContext:
        return FrechetContext(
            vs=self.vs,
            field_rules={self.field_name: q},
            potential_rules=self.potential_rules,
        )


# ---------------------------------------------------------------------------
# Characteristics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClosedForm:
    expr: JetExpr


@dataclass(frozen=True)
class ImplicitSystem:
    """Defining pair for a characteristic with no recognized closed form.
    ``unknown`` is the field symbol standing for the characteristic inside
    the two equations (each equation is an expression equal to zero)."""
    unknown: str
    equations: Tuple[JetExpr, JetExpr]


@dataclass(frozen=True)
class GridDefined:
    field: object  # numerics.GridField; kept untyped to avoid a hard import


@dataclass(frozen=True)
class Characteristic:
    index: int
    body: object
    provenance: str = ""
    degenerate: bool = False

    @property
    def closed(self) -> bool:
        return isinstance(self.body, ClosedForm)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def field_equation_residual(eq: EquationDef) -> JetExpr:
    """F[u] as the normalized sum of total derivatives of the divergence
    components."""
    out = eq.vs.zero()
    for s in eq.slots:
        out = out + total_derivative(s.connection, s.div_var)
    return out


def symmetry_condition(eq: EquationDef, q) -> JetExpr:
    """The linearized equation S(Q; u), built by linearizing F along Q.

    Accepts a Characteristic with closed-form body or a bare expression.
    After normalization this agrees with the covariant-divergence form
    (see symmetry_condition_covariant); the equality is itself a test.
    """
    qexpr = q.body.expr if isinstance(q, Characteristic) else q
    ctx = eq.frechet_ctx(qexpr)
    return frechet_derivative(field_equation_residual(eq), ctx)


def symmetry_condition_covariant(eq: EquationDef, q) -> JetExpr:
    """S(Q; u) in its covariant-divergence form: the outer divergence of the
    covariant derivatives of u^-1 Q."""
    qexpr = q.body.expr if isinstance(q, Characteristic) else q
    w = eq.u_inv() * qexpr
    out = eq.vs.zero()
    for s in eq.slots:
        out = out + total_derivative(covariant_derivative(w, eq, s.name), s.div_var)
    return out


@dataclass(frozen=True)
class Verdict:
    holds: bool
    residue: Optional[JetExpr] = None

    def __bool__(self):
        return self.holds


def verify_symmetry(eq: EquationDef, q) -> Verdict:
    """Does S(Q; u) reduce to zero on-shell?  Returns the surviving residue
    verbatim when it does not."""
    qexpr = q.body.expr if isinstance(q, Characteristic) else q
    s = symmetry_condition(eq, qexpr)
    r = reduce_mod_field_equation(s, eq, ctx=eq.frechet_ctx(qexpr))
    return Verdict(holds=r.is_zero, residue=None if r.is_zero else r)


def seed_characteristics(eq: EquationDef):
    """The built-in seed library of known symmetry characteristics."""
    vs, u = eq.vs, eq.field_name
    if eq.name == "chiral":
        return [
            Characteristic(0, ClosedForm(vs.field(u) * vs.param("M")), "right-action"),
            Characteristic(-1, ClosedForm(vs.param("L") * vs.field(u)), "left-action"),
            Characteristic(0, ClosedForm(vs.field(u, "t")), "t-translation"),
            Characteristic(0, ClosedForm(vs.field(u, "x")), "x-translation"),
        ]
    if eq.name == "sdym":
        return [
            Characteristic(0, ClosedForm(vs.field(u) * vs.param("M")), "right-action"),
            Characteristic(0, ClosedForm(vs.field(u, "y")), "y-translation"),
            Characteristic(0, ClosedForm(vs.field(u, "z")), "z-translation"),
            Characteristic(0, ClosedForm(vs.field(u, "yb")), "yb-translation"),
            Characteristic(0, ClosedForm(vs.field(u, "zb")), "zb-translation"),
        ]
    raise KeyError(f"no seed library for equation {eq.name!r}")


def catalog_characteristics(eq: EquationDef):
    """The full verification catalog: seeds plus the closed-form potential
    characteristics one recursion step produces from them."""
    vs, u = eq.vs, eq.field_name
    if eq.name == "chiral":
        gxm = vs.field(u) * (vs.pot("X") * vs.param("M")
                             - vs.param("M") * vs.pot("X"))
        return seed_characteristics(eq) + [
            Characteristic(1, ClosedForm(gxm), "potential-commutator"),
        ]
    if eq.name == "sdym":
        jxm = vs.field(u) * (vs.pot("X") * vs.param("M")
                             - vs.param("M") * vs.pot("X"))
        return seed_characteristics(eq) + [
            Characteristic(-1, ClosedForm(vs.param("L") * vs.field(u)),
                           "left-action"),
            Characteristic(1, ClosedForm(jxm), "potential-commutator"),
            Characteristic(1, ClosedForm(vs.field(u) * vs.pot("X", "y")),
                           "potential-translation"),
        ]
    raise KeyError(f"no catalog for equation {eq.name!r}")


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

def _make_chiral() -> EquationDef:
    vs = VarSpace(("t", "x"))
    g, gi = vs.field("g"), vs.inv("g")
    a = gi * vs.field("g", "t")
    b = gi * vs.field("g", "x")
    # g_tt = g_t g^-1 g_t + g_x g^-1 g_x - g_xx
    rhs = (vs.field("g", "t") * gi * vs.field("g", "t")
           + vs.field("g", "x") * gi * vs.field("g", "x")
           - vs.field("g", "x", "x"))
    return EquationDef(
        name="chiral",
        vs=vs,
        field_name="g",
        slots=(
            ConnSlot("t", a, "t", "t"),
            ConnSlot("x", b, "x", "x"),
        ),
        solved_lead=(2, 0),
        solved_rhs=rhs,
        potential_rules={"X": {"x": a, "t": -1 * b}},
        potential_name="X",
        traceless=False,
    )


def _make_sdym() -> EquationDef:
    vs = VarSpace(("y", "z", "yb", "zb"))
    ji = vs.inv("J")
    ay = ji * vs.field("J", "y")
    az = ji * vs.field("J", "z")
    # J_{y yb} = J_yb J^-1 J_y + J_zb J^-1 J_z - J_{z zb}
    rhs = (vs.field("J", "yb") * ji * vs.field("J", "y")
           + vs.field("J", "zb") * ji * vs.field("J", "z")
           - vs.field("J", "z", "zb"))
    return EquationDef(
        name="sdym",
        vs=vs,
        field_name="J",
        slots=(
            ConnSlot("y", ay, "y", "yb"),
            ConnSlot("z", az, "z", "zb"),
        ),
        solved_lead=(1, 0, 1, 0),
        solved_rhs=rhs,
        potential_rules={"X": {"zb": ay, "yb": -1 * az}},
        potential_name="X",
        traceless=True,
    )


_REGISTRY: Dict[str, Callable[[], EquationDef]] = {
    "chiral": _make_chiral,
    "sdym": _make_sdym,
}

_CACHE: Dict[str, EquationDef] = {}


def get_equation(name: str) -> EquationDef:
    if name not in _REGISTRY:
        raise KeyError(f"unknown equation {name!r}; known: {sorted(_REGISTRY)}")
    if name not in _CACHE:
        _CACHE[name] = _REGISTRY[name]()
    return _CACHE[name]


def equation_names():
    return sorted(_REGISTRY)
