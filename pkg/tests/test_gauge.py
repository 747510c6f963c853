"""Gauge weights, the cancellation identity, gauged energies."""

import numpy as np
import pytest

from torus3.errors import DegenerateDispersion, NonZeroMean
from torus3.spectral import PLUS_ETA, TorusFunction
from torus3.equations import catalog, variable_kdv
from torus3.gauge import (
    build_gauge,
    crucial_identity_residual,
    gauged_energy,
    gauged_energy_difference,
    norm_equivalence_report,
    secondary_index,
)

CAT = catalog()


def positive_probe(seed: int, floor: float = 0.6, grid_size: int = 256) -> TorusFunction:
    rng = np.random.default_rng(seed)
    terms = [(n, float(rng.normal() / (1 + n) ** 2), float(rng.normal() / (1 + n) ** 2)) for n in range(1, 7)]
    f = TorusFunction.harmonics(terms, grid_size)
    return f - f.grid_min() + floor


# ------------------------------------------------------------- gauge weight


def test_gauge_weight_kdv_is_one():
    f = positive_probe(1)
    ctx = build_gauge(CAT["kdv"], f, 0.0, 10.0)
    assert np.max(np.abs(ctx.weight.values() - 1.0)) < 1e-12
    assert np.max(np.abs(ctx.weight_inv.values() - 1.0)) < 1e-12


def test_gauge_weight_kdv_burgers_is_one():
    # ratio field is the constant -1: mean subtraction kills the exponent,
    # and |−1| to any power is 1
    f = positive_probe(2)
    for kp in (8.0, 10.0, 12.5):
        ctx = build_gauge(CAT["kdv_burgers"], f, 0.0, kp)
        assert np.max(np.abs(ctx.weight.values() - 1.0)) < 1e-11


def test_gauge_weight_k22_closed_form():
    # at index 7.5 the modulus power drops out and the exponential integrates
    # 3 (log f)', giving (f(x)/f(0))^3 with f(0) = 3
    f = TorusFunction.harmonics([(0, 2.0, 0.0), (1, 1.0, 0.0)], 256)
    ctx = build_gauge(CAT["k22"], f, 0.0, 7.5)
    x = f.grid()
    expected = ((2.0 + np.cos(x)) / 3.0) ** 3
    assert np.max(np.abs(ctx.weight.values() - expected)) < 1e-10


def test_gauge_weight_positive_and_inverse_consistent():
    for name in ("k22", "harry_dym"):
        f = positive_probe(3)
        ctx = build_gauge(CAT[name], f, 0.0, 9.0)
        assert ctx.weight.grid_min() > 0.0
        prod = ctx.weight.multiply(ctx.weight_inv)
        assert np.max(np.abs(prod.values() - 1.0)) < 1e-10


def test_gauge_needs_dispersion_floor():
    vanishing = TorusFunction.harmonics([(1, 1.0, 0.0)], 128)
    with pytest.raises(DegenerateDispersion):
        build_gauge(CAT["harry_dym"], vanishing, 0.0, 10.0)


def test_gauge_source_fingerprint_changes_with_state():
    f, g = positive_probe(4), positive_probe(5)
    a = build_gauge(CAT["k22"], f, 0.0, 10.0)
    b = build_gauge(CAT["k22"], g, 0.0, 10.0)
    assert a.source != b.source


# ------------------------------------------------------- cancellation identity


def relative_residual(eq, f, t, kp) -> float:
    ctx = build_gauge(eq, f, t, kp)
    scale = 1.0 + ctx.subprincipal.sup_norm() + ctx.diffusion.sup_norm()
    return crucial_identity_residual(eq, f, t, kp) / scale


def test_identity_trivial_cases():
    f = positive_probe(6)
    assert crucial_identity_residual(CAT["kdv"], f, 0.0, 10.0) < 1e-12
    assert crucial_identity_residual(CAT["kdv_burgers"], f, 0.0, 10.0) < 1e-11


@pytest.mark.parametrize("kp", [8.0, 10.0, 12.5])
def test_identity_k22_random_states(kp):
    for seed in (7, 8, 9):
        f = positive_probe(seed)
        assert relative_residual(CAT["k22"], f, 0.0, kp) < 1e-8


def test_identity_degenerate_power_index():
    # at k' = 7.5 the modulus power vanishes; the identity must still close
    f = positive_probe(10)
    for name in ("k22", "harry_dym"):
        assert relative_residual(CAT[name], f, 0.0, 7.5) < 1e-8


@pytest.mark.parametrize("name", ["kdv", "transition_kdv", "k22", "harry_dym", "kdv_burgers", "var_kdv"])
def test_identity_across_catalog(name):
    eq = CAT[name]
    for seed in (11, 12):
        f = positive_probe(seed)
        assert relative_residual(eq, f, 0.4, 9.5) < 1e-8


def test_identity_variable_coefficients():
    eq = variable_kdv(a="-2 - 0.5*cos(x)", b="1 + 0.2*sin(x)")
    f = positive_probe(13)
    assert relative_residual(eq, f, 0.0, 10.0) < 1e-8


# -------------------------------------------------------------- gauged energy


def test_energy_kdv_cosine_value():
    f = TorusFunction.harmonics([(1, 1.0, 0.0)], 256)
    # weight is 1; squared norms 2^4/2 of the sixth derivative and 2^7/2 of f
    assert gauged_energy(CAT["kdv"], f, 0.0, 10.0) == pytest.approx(72.0, rel=1e-12)


def test_energy_difference_vanishes_on_equal_states():
    f = positive_probe(14)
    assert gauged_energy_difference(CAT["k22"], f, f, 0.0, 10.0) == pytest.approx(0.0, abs=1e-18)


def test_energy_single_state_equals_difference_with_zero():
    f = positive_probe(15)
    zero = TorusFunction.zero(f.grid_size)
    a = gauged_energy(CAT["harry_dym"], f, 0.0, 9.0)
    b = gauged_energy_difference(CAT["harry_dym"], f, zero, 0.0, 9.0)
    assert a == b


def test_energy_index_floor():
    f = positive_probe(16)
    with pytest.raises(ValueError):
        gauged_energy(CAT["kdv"], f, 0.0, 5.0)


def test_energy_single_mode_ratio_approaches_one():
    f = TorusFunction.harmonics([(32, 1.0, 0.0)], 256)
    ratio = gauged_energy(CAT["kdv"], f, 0.0, 10.0) / f.sobolev_norm(10.0) ** 2
    assert 0.9 < ratio < 1.1


def test_secondary_index_switch():
    assert secondary_index(10.0) == pytest.approx(7.0)
    assert secondary_index(6.0) == pytest.approx(4.5 + PLUS_ETA)


# ----------------------------------------------------------- norm equivalence


def test_equivalence_kdv_mode_pairs():
    base = TorusFunction.harmonics([(1, 0.3, 0.0)], 256)
    pairs = [
        (base + TorusFunction.harmonics([(n, 1.0, 0.0)], 256), base) for n in (4, 8, 16, 32)
    ]
    rep = norm_equivalence_report(CAT["kdv"], pairs, 0.0, 10.0)
    assert 0.5 <= rep["min_ratio"] <= rep["max_ratio"] <= 2.0


def test_equivalence_skips_identical_pairs():
    f = positive_probe(17)
    rep = norm_equivalence_report(CAT["kdv"], [(f, f)], 0.0, 10.0)
    assert rep["skipped"] == 1
    assert rep["ratios"] == []


def test_equivalence_k22_perturbations():
    f = TorusFunction.harmonics([(0, 2.0, 0.0), (1, 1.0, 0.0)], 256)
    rng = np.random.default_rng(0)
    pairs = []
    for _ in range(3):
        bump = TorusFunction.harmonics(
            [(n, 0.1 * float(rng.normal()) / (1 + n), 0.0) for n in range(1, 5)], 256
        )
        pairs.append((f + bump, f))
    rep = norm_equivalence_report(CAT["k22"], pairs, 0.0, 10.0)
    assert rep["min_ratio"] > 0.0
    assert rep["max_ratio"] / rep["min_ratio"] < 1e3


def test_equivalence_reports_failing_segment():
    # endpoints positive but the segment passes through sign change for k22
    f = TorusFunction.harmonics([(0, 1.0, 0.0)], 128)
    g = TorusFunction.harmonics([(0, -1.0, 0.0)], 128)
    with pytest.raises(DegenerateDispersion, match="theta"):
        norm_equivalence_report(CAT["k22"], [(f, g)], 0.0, 10.0)
