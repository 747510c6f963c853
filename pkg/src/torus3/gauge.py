"""Gauge weights and gauged energies.

The gauge weight is the pointwise positive field

    weight = |principal|^((2k' - 15)/6) * exp(V),
    V(x)   = integral from 0 to x of (subprincipal/principal - its average)/3,

built along a given state.  Mean subtraction makes the integrand integrate to
zero over the circle, so V and the weight are periodic.  The weight is chosen
so that

    (k' - 15/2) d/dx(principal) + 3*weight*d/dx(1/weight)*principal
        + subprincipal  =  effective diffusion,

an exact pointwise cancellation: all x-dependence of the left side collapses
to the averaged second-order coefficient.  The gauged energy measures a state
through the weighted sixth derivative plus a lower-order tail, and is
comparable to the plain Sobolev norm of index k'.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDispersion
from .spectral import PLUS_ETA, TorusFunction, index_value
from .equations import (
    EquationF,
    TOL_DELTA,
    _eval_grid,
    _principal_values,
    _subprincipal_values,
    build_env,
    values_to_field,
)

GAUGE_PAD = 3


def secondary_index(k_prime: float) -> float:
    """Index of the lower-order energy term: max(k' - 3, 4.5 + eta)."""
    return max(index_value(k_prime) - 3.0, 4.5 + PLUS_ETA)


@dataclass(frozen=True)
class GaugeContext:
    """Gauge data frozen along one (equation, state, time, index) choice."""

    k_prime: float
    weight: TorusFunction
    weight_inv: TorusFunction
    principal: TorusFunction
    subprincipal: TorusFunction
    diffusion: TorusFunction
    source: str

    def to_dict(self) -> dict:
        return {
            "k_prime": self.k_prime,
            "source": self.source,
            "weight": self.weight.to_dict(),
            "weight_inv": self.weight_inv.to_dict(),
        }


def build_gauge(
    eq: EquationF,
    f: TorusFunction,
    t: float,
    k_prime,
    tol_delta: float = TOL_DELTA,
) -> GaugeContext:
    """Construct the gauge weight along f; needs a positive dispersion floor."""
    kp = index_value(k_prime)
    env = build_env(f, t, GAUGE_PAD)
    _, m = _eval_grid(f, GAUGE_PAD)
    a = _principal_values(eq, env, m)
    floor = float(np.min(np.abs(a)))
    if floor <= tol_delta:
        raise DegenerateDispersion(
            f"cannot gauge: |principal| reaches {floor:.3e} <= {tol_delta:.1e}"
        )
    p = _subprincipal_values(eq, f, env, m, GAUGE_PAD)
    ratio = p / a
    ratio_mean = float(np.mean(ratio))

    power = (2.0 * kp - 15.0) / 6.0
    modulus_part = np.exp(power * np.log(np.abs(a)))

    integrand = values_to_field((ratio - ratio_mean) / 3.0, f.grid_size, GAUGE_PAD)
    v = integrand.antiderivative_from_zero()
    exp_part = np.exp(v.values(GAUGE_PAD))

    weight_vals = modulus_part * exp_part
    weight = values_to_field(weight_vals, f.grid_size, GAUGE_PAD)
    weight_inv = values_to_field(1.0 / weight_vals, f.grid_size, GAUGE_PAD)
    q = values_to_field(a * ratio_mean, f.grid_size, GAUGE_PAD)
    return GaugeContext(
        k_prime=kp,
        weight=weight,
        weight_inv=weight_inv,
        principal=values_to_field(a, f.grid_size, GAUGE_PAD),
        subprincipal=values_to_field(p, f.grid_size, GAUGE_PAD),
        diffusion=q,
        source=f"{f.fingerprint()}@t={t:.12g},k'={kp:.12g}",
    )


def crucial_identity_residual(
    eq: EquationF,
    f: TorusFunction,
    t: float,
    k_prime,
    tol_delta: float = TOL_DELTA,
) -> float:
    """Sup-norm of (left side - effective diffusion) of the cancellation identity."""
    ctx = build_gauge(eq, f, t, k_prime, tol_delta)
    kp = ctx.k_prime
    a = ctx.principal.values(GAUGE_PAD)
    ax = ctx.principal.derivative().values(GAUGE_PAD)
    w = ctx.weight.values(GAUGE_PAD)
    winv_x = ctx.weight_inv.derivative().values(GAUGE_PAD)
    p = ctx.subprincipal.values(GAUGE_PAD)
    q = ctx.diffusion.values(GAUGE_PAD)
    lhs = (kp - 7.5) * ax + 3.0 * w * winv_x * a + p
    return float(np.max(np.abs(lhs - q)))


def gauged_energy_difference(
    eq: EquationF,
    f: TorusFunction,
    g: TorusFunction | None,
    t: float,
    k_prime,
    tol_delta: float = TOL_DELTA,
) -> float:
    """Squared distance between two states in the gauged metric.

    ``g = None`` (or the zero field) drops the g-terms: the weighted sixth
    derivative of an identically zero state is taken to be zero without
    evaluating its gauge, which would be degenerate for equations that need
    nonvanishing data.
    """
    kp = index_value(k_prime)
    if kp < 6.0:
        raise ValueError("the gauged energy needs an index of at least 6")
    top = build_gauge(eq, f, t, kp, tol_delta)
    lead = top.weight.multiply(f.derivative(6))
    if g is not None and np.any(g.coeffs != 0.0):
        ctx_g = build_gauge(eq, g, t, kp, tol_delta)
        lead = lead - ctx_g.weight.multiply(g.derivative(6))
        diff = f - g
    else:
        diff = f
    return lead.sobolev_norm(kp - 6.0) ** 2 + diff.sobolev_norm(secondary_index(kp)) ** 2


def gauged_energy(eq: EquationF, f: TorusFunction, t: float, k_prime, tol_delta: float = TOL_DELTA) -> float:
    """Single-state energy: the difference form against the zero state."""
    return gauged_energy_difference(eq, f, None, t, k_prime, tol_delta)


def norm_equivalence_report(
    eq: EquationF,
    pairs: list,
    t: float,
    k_prime,
    theta_count: int = 11,
    tol_delta: float = TOL_DELTA,
) -> dict:
    """Extremal ratios energy / squared-H^{k'}-distance over state pairs.

    Every convex combination of each pair must keep the dispersion floor
    (the comparison argument works along the segment); a failing combination
    raises with its interpolation parameter.
    """
    kp = index_value(k_prime)
    ratios = []
    skipped = 0
    for f, g in pairs:
        for theta in np.linspace(0.0, 1.0, theta_count):
            h = f * float(theta) + g * float(1.0 - theta)
            env = build_env(h, t, GAUGE_PAD)
            _, m = _eval_grid(h, GAUGE_PAD)
            a = _principal_values(eq, env, m)
            if float(np.min(np.abs(a))) <= tol_delta:
                raise DegenerateDispersion(
                    f"segment state theta = {theta:.2f} loses the dispersion floor"
                )
        dist2 = (f - g).sobolev_norm(kp) ** 2
        if dist2 == 0.0:
            skipped += 1
            continue
        ratios.append(gauged_energy_difference(eq, f, g, t, kp, tol_delta) / dist2)
    if not ratios:
        return {"min_ratio": math.nan, "max_ratio": math.nan, "ratios": [], "skipped": skipped}
    return {
        "min_ratio": min(ratios),
        "max_ratio": max(ratios),
        "ratios": ratios,
        "skipped": skipped,
    }
