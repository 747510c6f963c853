"""Equation model: structural coefficients, diagnostics, and the built-in catalog.

An equation is an expression F(w3, w2, w1, w0, x, t) read as the right-hand
side of u_t = F(u_xxx, u_xx, u_x, u, x, t).  The derived fields computed here
drive everything downstream:

* principal coefficient   dF/dw3, the strength of the third-order term;
* subprincipal field      dF/dw2 + 6 * sum_p d2F/(dw3 dw_p) * d^{p+1}u, the
                          coefficient the sixth-derivative calculus pairs with
                          the eighth derivative of a perturbation (the slot
                          p = -1 is the explicit x-dependence, paired with 1);
* effective diffusion     principal * average(subprincipal / principal), the
                          averaged second-order symbol left after gauging.

Sign conventions: a positive effective diffusion smooths forward in time.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ClassificationMismatch, DegenerateDispersion
from .spectral import TorusFunction, _refined_min
from .symbolic import (
    Add,
    Const,
    Expr,
    Mul,
    Sub,
    Var,
    add,
    mul,
    parse_definitions,
    sub,
    substitute,
)

TOL_DELTA = 1e-10
TOL_RESONANCE = 1e-9

# zero-padding factor for pointwise evaluation; exact through quartic products
EVAL_PAD = 3

DERIVATIVE_SLOTS = ("w0", "w1", "w2", "w3")


class ResonanceType(enum.Enum):
    NON_PARABOLIC = "non-parabolic"
    PARABOLIC = "parabolic"
    INCONCLUSIVE = "inconclusive"


class DataClass(enum.Enum):
    """Admissibility labels for a data/time pair.

    DISPERSIVE: the principal coefficient is bounded away from zero.
    FORWARD_SMOOTHING: additionally the effective diffusion is positive.
    BACKWARD_SMOOTHING: additionally the effective diffusion is negative.
    """

    DISPERSIVE = "dispersive"
    FORWARD_SMOOTHING = "forward-smoothing"
    BACKWARD_SMOOTHING = "backward-smoothing"


@dataclass(frozen=True)
class EquationF:
    """An immutable equation with display metadata.

    ``classification`` is the known resonance label for catalog entries
    (checked against sampling), None for user equations.  ``probe_floor``
    shifts random probes to stay above a positivity threshold where the
    principal coefficient needs it.
    """

    name: str
    expr: Expr
    source_text: str
    classification: ResonanceType | None = None
    dispersion_note: str = ""
    subprincipal_note: str = ""
    probe_floor: float | None = None

    def partial(self, *variables: str) -> Expr:
        """Iterated symbolic partial derivative of F."""
        e = self.expr
        for v in variables:
            e = _partial(e, v)
        return e

    def __str__(self):
        return f"{self.name}: F = {self.expr}"


@lru_cache(maxsize=4096)
def _partial(expr: Expr, var: str) -> Expr:
    return expr.diff(var)


def parse_equation(text: str, name: str = "user") -> EquationF:
    """Build an equation from definition text (``F = ...`` plus coefficients)."""
    expr, _ = parse_definitions(text)
    return EquationF(name=name, expr=expr, source_text=text)


def _negated(e: Expr) -> Expr:
    """-e with the sign pushed through sums, so term structure survives."""
    if isinstance(e, Const):
        return Const(-e.value)
    if isinstance(e, Add):
        return add(_negated(e.left), _negated(e.right))
    if isinstance(e, Sub):
        return sub(e.right, e.left)
    if isinstance(e, Mul) and isinstance(e.left, Const):
        return mul(Const(-e.left.value), e.right)
    return mul(Const(-1.0), e)


def time_reversed(eq: EquationF) -> EquationF:
    """The backward-time counterpart: G(w, x, t) = -F(w, x, -t).

    Solving v_t = G forward reproduces u(-t) for solutions u of u_t = F.
    """
    flipped = substitute(eq.expr, "t", mul(Const(-1.0), Var("t")))
    return EquationF(
        name=f"{eq.name}_reversed",
        expr=_negated(flipped),
        source_text=f"time reversal of {eq.name}",
    )


# ------------------------------------------------------------------ evaluation


def _even_ceil(x: float) -> int:
    n = int(math.ceil(x))
    return n if n % 2 == 0 else n + 1


def _eval_grid(f: TorusFunction, pad_factor: int):
    m = f.grid_size * pad_factor
    return 2.0 * np.pi * np.arange(m) / m, m


def build_env(f: TorusFunction, t: float, pad_factor: int = EVAL_PAD) -> dict:
    """Grid values of (u, u_x, u_xx, u_xxx, x, t) on a zero-padded grid."""
    x, m = _eval_grid(f, pad_factor)
    env = {"x": x, "t": t}
    for p, slot in enumerate(DERIVATIVE_SLOTS):
        env[slot] = f.derivative(p).values(pad_factor)
    return env


def values_to_field(vals, grid_size: int, pad_factor: int = EVAL_PAD) -> TorusFunction:
    """Project padded-grid values back onto the working band."""
    m = grid_size * pad_factor
    vals = np.broadcast_to(np.asarray(vals, dtype=np.float64), (m,))
    coeffs = np.fft.rfft(vals) / m
    return TorusFunction(coeffs[: grid_size // 2 + 1], grid_size)


def evaluate_rhs(eq: EquationF, f: TorusFunction, t: float, pad_factor: int = EVAL_PAD) -> TorusFunction:
    """F evaluated pointwise at the derivative stack of f, as a band-limited field."""
    env = build_env(f, t, pad_factor)
    return values_to_field(eq.expr.evaluate(env), f.grid_size, pad_factor)


def _principal_values(eq: EquationF, env: dict, m: int) -> np.ndarray:
    vals = eq.partial("w3").evaluate(env)
    return np.broadcast_to(np.asarray(vals, dtype=np.float64), (m,)).copy()


def _subprincipal_values(eq: EquationF, f: TorusFunction, env: dict, m: int, pad_factor: int) -> np.ndarray:
    total = np.broadcast_to(
        np.asarray(eq.partial("w2").evaluate(env), dtype=np.float64), (m,)
    ).copy()
    # p = -1 slot: explicit x-dependence of the principal coefficient, paired with 1
    total += 6.0 * np.broadcast_to(
        np.asarray(eq.partial("w3", "x").evaluate(env), dtype=np.float64), (m,)
    )
    for p, slot in enumerate(DERIVATIVE_SLOTS):
        mixed = eq.partial("w3", slot)
        if isinstance(mixed, Const) and mixed.value == 0.0:
            continue
        shift = f.derivative(p + 1).values(pad_factor)
        total += 6.0 * np.asarray(mixed.evaluate(env), dtype=np.float64) * shift
    return total


def principal_coefficient(eq: EquationF, f: TorusFunction, t: float, pad_factor: int = EVAL_PAD) -> TorusFunction:
    """dF/dw3 along f, the third-order (dispersive) coefficient."""
    env = build_env(f, t, pad_factor)
    _, m = _eval_grid(f, pad_factor)
    return values_to_field(_principal_values(eq, env, m), f.grid_size, pad_factor)


def subprincipal_field(eq: EquationF, f: TorusFunction, t: float, pad_factor: int = EVAL_PAD) -> TorusFunction:
    """The second-order coefficient produced by six spatial derivatives of F."""
    env = build_env(f, t, pad_factor)
    _, m = _eval_grid(f, pad_factor)
    return values_to_field(_subprincipal_values(eq, f, env, m, pad_factor), f.grid_size, pad_factor)


def effective_diffusion(
    eq: EquationF,
    f: TorusFunction,
    t: float,
    tol_delta: float = TOL_DELTA,
    pad_factor: int = EVAL_PAD,
) -> TorusFunction:
    """principal * average(subprincipal / principal); needs a dispersion floor."""
    env = build_env(f, t, pad_factor)
    _, m = _eval_grid(f, pad_factor)
    a = _principal_values(eq, env, m)
    floor = float(np.min(np.abs(a)))
    if floor <= tol_delta:
        raise DegenerateDispersion(
            f"principal coefficient reaches |value| = {floor:.3e} <= {tol_delta:.1e}"
        )
    p = _subprincipal_values(eq, f, env, m, pad_factor)
    ratio_mean = float(np.mean(p / a))
    return values_to_field(a * ratio_mean, f.grid_size, pad_factor)


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Scalar structure report for one (equation, data, time) triple.

    dispersion_floor  inf |principal coefficient|
    diffusion_floor   inf |effective diffusion|
    diffusion_min/max signed range of the effective diffusion
    diffusion_mean    average of subprincipal / |principal|
    principal_sign    +1/-1 when the principal coefficient has constant sign,
                      0 when the dispersion floor is below tolerance
    """

    dispersion_floor: float
    diffusion_floor: float
    diffusion_min: float
    diffusion_max: float
    diffusion_mean: float
    principal_sign: int


def diagnostics(
    eq: EquationF,
    f: TorusFunction,
    t: float = 0.0,
    tol_delta: float = TOL_DELTA,
    pad_factor: int = 16,
) -> DiagnosticsRecord:
    """All structural scalars at once.  A zero dispersion floor is a valid
    result; the diffusion fields are then reported as NaN.

    The dense default grid keeps the parabola-refined infima stable under
    resolution changes (the floors must not depend on the working band)."""
    env = build_env(f, t, pad_factor)
    _, m = _eval_grid(f, pad_factor)
    a = _principal_values(eq, env, m)
    delta = max(_refined_min(np.abs(a)), 0.0)
    if delta <= tol_delta:
        return DiagnosticsRecord(delta, math.nan, math.nan, math.nan, math.nan, 0)
    p = _subprincipal_values(eq, f, env, m, pad_factor)
    ratio_mean = float(np.mean(p / a))
    q = a * ratio_mean
    q_floor = max(_refined_min(np.abs(q)), 0.0)
    q_min = _refined_min(q)
    q_max = -_refined_min(-q)
    breve = float(np.mean(p / np.abs(a)))
    sign = 1 if a[0] > 0 else -1
    return DiagnosticsRecord(delta, q_floor, q_min, q_max, breve, sign)


def membership(
    eq: EquationF,
    f: TorusFunction,
    t: float = 0.0,
    tol: float = TOL_DELTA,
) -> frozenset:
    """Which admissibility classes the pair (f, t) belongs to."""
    rec = diagnostics(eq, f, t, tol_delta=tol)
    out = set()
    if rec.dispersion_floor > tol:
        out.add(DataClass.DISPERSIVE)
        if rec.diffusion_min > tol:
            out.add(DataClass.FORWARD_SMOOTHING)
        if rec.diffusion_max < -tol:
            out.add(DataClass.BACKWARD_SMOOTHING)
    return frozenset(out)


def resonance_average(eq: EquationF, f: TorusFunction, t: float, tol_delta: float = TOL_DELTA) -> float:
    """The scalar average(subprincipal / principal) deciding the resonance type."""
    env = build_env(f, t, EVAL_PAD)
    _, m = _eval_grid(f, EVAL_PAD)
    a = _principal_values(eq, env, m)
    floor = float(np.min(np.abs(a)))
    if floor <= tol_delta:
        raise DegenerateDispersion(
            f"probe has |principal| minimum {floor:.3e} <= {tol_delta:.1e}"
        )
    p = _subprincipal_values(eq, f, env, m, EVAL_PAD)
    return float(np.mean(p / a))


def classify_resonance(
    eq: EquationF,
    probes: list,
    tol_res: float = TOL_RESONANCE,
) -> ResonanceType:
    """Sampled resonance classification over (data, time) probes.

    Non-parabolic means the resonance average vanishes for every probe; one
    clearly nonzero probe makes the equation parabolic.  Known catalog labels
    are cross-checked and a contradiction raises.
    """
    averages = [abs(resonance_average(eq, f, t)) for f, t in probes]
    if all(r < tol_res for r in averages):
        verdict = ResonanceType.NON_PARABOLIC
    elif any(r > 10.0 * tol_res for r in averages):
        verdict = ResonanceType.PARABOLIC
    else:
        verdict = ResonanceType.INCONCLUSIVE
    if eq.classification is not None and verdict != eq.classification:
        raise ClassificationMismatch(
            f"{eq.name}: sampled {verdict.value} but the known label is {eq.classification.value}"
        )
    return verdict


def default_probes(
    eq: EquationF,
    count: int = 20,
    seed: int = 0,
    grid_size: int = 256,
    degree: int = 8,
) -> list:
    """Random smooth (data, time) probes: trigonometric polynomials of bounded
    degree, shifted above the equation's positivity floor when it has one."""
    rng = np.random.default_rng(seed)
    probes = []
    for _ in range(count):
        terms = [(0, float(rng.normal()), 0.0)]
        for n in range(1, degree + 1):
            scale = 1.0 / (1.0 + n)
            terms.append((n, float(rng.normal() * scale), float(rng.normal() * scale)))
        f = TorusFunction.harmonics(terms, grid_size)
        if eq.probe_floor is not None:
            f = f - f.grid_min() + eq.probe_floor
        t = float(rng.uniform(0.0, 1.0))
        probes.append((f, t))
    return probes


# --------------------------------------------------------------------- catalog


def variable_kdv(
    a: str = "-1",
    b: str = "1",
    c: str = "0",
    d: str = "0",
    e: str = "0",
    name: str = "var_kdv",
) -> EquationF:
    """Linear third-order equation with named coefficients in x and t."""
    text = f"a = {a}\nb = {b}\nc = {c}\nd = {d}\ne = {e}\nF = a*w3 + b*w2 + c*w1 + d*w0 + e"
    expr, _ = parse_definitions(text)
    default = (a, b, c, d, e) == ("-1", "1", "0", "0", "0")
    return EquationF(
        name=name,
        expr=expr,
        source_text=text,
        classification=ResonanceType.PARABOLIC if default else None,
        dispersion_note="inf |a|",
        subprincipal_note="P = 6 ∂_x a + b",
    )


def catalog() -> dict[str, EquationF]:
    """The built-in equations with their known structure labels."""
    kdv = EquationF(
        name="kdv",
        expr=parse_definitions("F = -w3 - 6*w0*w1")[0],
        source_text="F = -w3 - 6*w0*w1",
        classification=ResonanceType.NON_PARABOLIC,
        dispersion_note="1",
        subprincipal_note="P = 0",
    )
    transition = EquationF(
        name="transition_kdv",
        expr=parse_definitions("h = cos(t)\nF = -w3 - 6*h*w0*w1")[0],
        source_text="h = cos(t)\nF = -w3 - 6*h*w0*w1",
        classification=ResonanceType.NON_PARABOLIC,
        dispersion_note="1",
        subprincipal_note="P = 0",
    )
    k22 = EquationF(
        name="k22",
        expr=parse_definitions("F = 2*w0*w1 + 6*w1*w2 + 2*w0*w3")[0],
        source_text="F = 2*w0*w1 + 6*w1*w2 + 2*w0*w3",
        classification=ResonanceType.NON_PARABOLIC,
        dispersion_note="2 inf|f|",
        subprincipal_note="P = 18 ∂_x f",
        probe_floor=0.5,
    )
    harry_dym = EquationF(
        name="harry_dym",
        expr=parse_definitions("F = w0^3*w3")[0],
        source_text="F = w0^3*w3",
        classification=ResonanceType.NON_PARABOLIC,
        dispersion_note="inf|f|^3",
        subprincipal_note="P = 18 f² ∂_x f",
        probe_floor=0.5,
    )
    kdv_burgers = EquationF(
        name="kdv_burgers",
        expr=parse_definitions("F = -w3 + w2 + 2*w0*w1")[0],
        source_text="F = -w3 + w2 + 2*w0*w1",
        classification=ResonanceType.PARABOLIC,
        dispersion_note="1",
        subprincipal_note="P = 1",
    )
    entries = [kdv, transition, k22, harry_dym, kdv_burgers, variable_kdv()]
    return {eq.name: eq for eq in entries}


def get_equation(name_or_text: str) -> EquationF:
    """Resolve a catalog name, or parse inline definition text containing '='."""
    cat = catalog()
    if name_or_text in cat:
        return cat[name_or_text]
    if "=" in name_or_text:
        return parse_equation(name_or_text)
    raise KeyError(
        f"unknown equation {name_or_text!r}; catalog: {', '.join(sorted(cat))}"
    )
