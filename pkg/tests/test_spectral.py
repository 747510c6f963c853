"""Core spectral representation: constructors, calculus, norms, persistence."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torus3 import NonZeroMean, SobolevIndex, TorusFunction, rough_tail_data, splus
from torus3.spectral import PLUS_ETA

# ----------------------------------------------------------------- oracles


def convolution_oracle(f: TorusFunction, g: TorusFunction) -> np.ndarray:
    """Product coefficients by direct full-spectrum convolution, no FFT.

    Slow and exact (up to round-off); trusted reference for the dealiased
    pseudospectral product.
    """
    half = f.grid_size // 2
    idx = np.arange(-half, half + 1)

    def full(tf):
        out = np.zeros(len(idx), dtype=np.complex128)
        for k, n in enumerate(idx):
            if n >= 0:
                out[k] = tf.coeffs[n]
            else:
                out[k] = np.conj(tf.coeffs[-n])
        return out

    ff, gg = full(f), full(g)
    prod = np.zeros(half + 1, dtype=np.complex128)
    for n in range(half + 1):
        acc = 0.0 + 0.0j
        for k, m in enumerate(idx):
            r = n - m
            if -half <= r <= half:
                acc += ff[k] * gg[np.searchsorted(idx, r)]
        prod[n] = acc
    prod[-1] = 0.0
    return prod


def trig_poly(seed: int, top_mode: int, grid_size: int = 64) -> TorusFunction:
    rng = np.random.default_rng(seed)
    terms = [(n, rng.normal(), rng.normal()) for n in range(top_mode + 1)]
    return TorusFunction.harmonics(terms, grid_size)


# ------------------------------------------------------------ construction


def test_from_values_round_trip():
    x = 2 * np.pi * np.arange(64) / 64
    vals = 1.5 + np.cos(x) - 0.25 * np.sin(3 * x)
    f = TorusFunction.from_values(vals)
    assert np.max(np.abs(f.values() - vals)) < 1e-13


def test_harmonics_coefficients():
    f = TorusFunction.harmonics([(0, 2.0, 0.0), (1, 1.0, 0.0), (2, 0.0, 3.0)], 32)
    assert f.coeffs[0] == pytest.approx(2.0)
    assert f.coeffs[1] == pytest.approx(0.5)
    assert f.coeffs[2] == pytest.approx(-1.5j)


def test_nyquist_mode_dropped():
    n = 16
    vals = np.cos(np.arange(n) * np.pi)  # pure Nyquist oscillation
    f = TorusFunction.from_values(vals)
    assert abs(f.coeffs[-1]) == 0.0


def test_grid_size_validation():
    with pytest.raises(ValueError):
        TorusFunction(np.zeros(5, dtype=np.complex128), 9)
    with pytest.raises(ValueError):
        TorusFunction.from_modes({20: 1.0}, 32)


def test_values_oversample_interpolates():
    f = TorusFunction.harmonics([(3, 1.0, 0.5)], 32)
    x = f.grid(4)
    expected = np.cos(3 * x) + 0.5 * np.sin(3 * x)
    assert np.max(np.abs(f.values(4) - expected)) < 1e-13


# --------------------------------------------------------------- calculus


def test_derivative_of_cos_is_minus_sin():
    f = TorusFunction.harmonics([(1, 1.0, 0.0)], 64)
    x = f.grid()
    assert np.max(np.abs(f.derivative().values() + np.sin(x))) < 1e-13


def test_high_order_derivative_matches_analytic():
    f = TorusFunction.harmonics([(2, 1.0, 0.0)], 64)
    # d^4/dx^4 cos(2x) = 16 cos(2x)
    d4 = f.derivative(4)
    assert np.max(np.abs(d4.values() - 16 * f.values())) < 1e-11


def test_derivative_order_bounds():
    f = trig_poly(0, 3)
    with pytest.raises(ValueError):
        f.derivative(13)
    with pytest.raises(ValueError):
        f.derivative(-1)


def test_antiderivative_inverts_derivative():
    f = trig_poly(7, 5)
    g = f - f.average()
    back = g.antiderivative_from_zero().derivative()
    assert np.max(np.abs(back.coeffs - g.coeffs)) < 1e-12


def test_antiderivative_vanishes_at_origin():
    g = trig_poly(3, 6)
    g = g - g.average()
    prim = g.antiderivative_from_zero()
    assert abs(prim.values()[0]) < 1e-12


def test_antiderivative_rejects_nonzero_mean():
    f = TorusFunction.harmonics([(0, 1e-9, 0.0), (1, 1.0, 0.0)], 32)
    with pytest.raises(NonZeroMean):
        f.antiderivative_from_zero()
    # just under the tolerance passes
    g = TorusFunction.harmonics([(0, 1e-11, 0.0), (1, 1.0, 0.0)], 32)
    g.antiderivative_from_zero()


# ------------------------------------------------------------------ norms


def test_cos_sobolev_norm_closed_form():
    # ||cos||_{H^s}^2 = 2 <1>^{2s} |1/2|^2 = 2^s / 2
    f = TorusFunction.harmonics([(1, 1.0, 0.0)], 64)
    for s in (0.0, 1.0, 4.5, 10.0):
        assert f.sobolev_norm(s) ** 2 == pytest.approx(2.0 ** s / 2.0, rel=1e-13)


def test_parseval_against_quadrature():
    f = trig_poly(11, 9)
    quadrature = float(np.mean(f.values() ** 2))  # exact for band-limited fields
    assert f.sobolev_norm(0.0) ** 2 == pytest.approx(quadrature, rel=1e-11)


def test_homogeneous_norm_kills_constants():
    f = TorusFunction.harmonics([(0, 5.0, 0.0), (1, 1.0, 0.0)], 32)
    assert f.sobolev_norm(1.0, homogeneous=True) ** 2 == pytest.approx(0.5, rel=1e-12)


def test_sobolev_index_wrapper():
    s = splus(4.5)
    assert float(s) == pytest.approx(4.5 + PLUS_ETA)
    assert SobolevIndex(3.0).value == 3.0
    with pytest.raises(ValueError):
        SobolevIndex(-1.0)
    f = TorusFunction.harmonics([(1, 1.0, 0.0)], 32)
    assert f.sobolev_norm(splus(2.0)) == pytest.approx(f.sobolev_norm(2.0 + PLUS_ETA))


# --------------------------------------------------------------- products


def test_product_matches_convolution_oracle():
    f = trig_poly(1, 8)
    g = trig_poly(2, 8)
    expected = convolution_oracle(f, g)
    got = f.multiply(g).coeffs
    assert np.max(np.abs(got - expected)) < 1e-12


def test_product_dealiasing_no_wraparound():
    # 2cos(20x) * 2cos(21x) = 2cos(x) + 2cos(41x); mode 41 exceeds the band
    # and must be cut, not wrapped back onto mode 64-41=23
    f = TorusFunction.from_modes({20: 1.0}, 64)
    g = TorusFunction.from_modes({21: 1.0}, 64)
    prod = f.multiply(g)
    assert prod.coeffs[1] == pytest.approx(1.0, abs=1e-14)  # difference frequency
    assert abs(prod.coeffs[23]) < 1e-14


def test_cos_squared_identity():
    f = TorusFunction.harmonics([(1, 1.0, 0.0)], 64)
    sq = f.multiply(f)
    expected = TorusFunction.harmonics([(0, 0.5, 0.0), (2, 0.5, 0.0)], 64)
    assert np.max(np.abs(sq.coeffs - expected.coeffs)) < 1e-14


# ------------------------------------------------------- smoothing operators


def test_mollifier_coefficient_decay():
    f = TorusFunction.harmonics([(1, 2.0, 0.0), (2, 1.0, 0.0)], 64)
    m = f.mollify(0.25, 10.0)
    assert m.coeffs[1] == pytest.approx(np.exp(-0.25 * 2.0 ** 5.0) * 1.0, rel=1e-13)
    assert m.coeffs[2] == pytest.approx(np.exp(-0.25 * 5.0 ** 5.0) * 0.5, rel=1e-13)


def test_heat_semigroup_law():
    f = trig_poly(5, 10)
    a = f.heat_semigroup(1e-4).heat_semigroup(2e-4)
    b = f.heat_semigroup(3e-4)
    assert np.max(np.abs(a.coeffs - b.coeffs)) < 1e-13


def test_heat_semigroup_mode_rate():
    f = TorusFunction.from_modes({3: 1.0}, 64)
    out = f.heat_semigroup(0.01)
    assert out.coeffs[3] == pytest.approx(np.exp(-0.01 * 81.0), rel=1e-13)


# -------------------------------------------------------- misc operations


def test_resample_round_trip():
    f = trig_poly(9, 10, grid_size=64)
    up = f.resample(256)
    assert up.sobolev_norm(3.0) == pytest.approx(f.sobolev_norm(3.0), rel=1e-13)
    back = up.resample(64)
    assert np.max(np.abs(back.coeffs - f.coeffs)) < 1e-15


def test_droptol_clears_pedestal():
    coeffs = np.zeros(33, dtype=np.complex128)
    coeffs[1] = 1.0
    coeffs[20] = 1e-15
    f = TorusFunction(coeffs, 64)
    cleaned = f.droptol(1e-13)
    assert cleaned.coeffs[20] == 0.0
    assert cleaned.coeffs[1] == 1.0


def test_grid_min_refinement():
    f = TorusFunction.harmonics([(0, 2.0, 0.0), (1, 1.0, 0.0)], 256)
    assert f.grid_min() == pytest.approx(1.0, abs=1e-8)
    assert f.grid_max() == pytest.approx(3.0, abs=1e-8)
    # offset minimum that falls between grid points
    g = TorusFunction.harmonics([(0, 2.0, 0.0), (1, 0.7, 0.31)], 256)
    x = np.linspace(0, 2 * np.pi, 2_000_001)
    dense = 2.0 + 0.7 * np.cos(x) + 0.31 * np.sin(x)
    assert g.grid_min() == pytest.approx(float(dense.min()), abs=1e-7)


def test_arithmetic_operators():
    f = trig_poly(4, 4)
    g = trig_poly(8, 4)
    s = f + g
    assert np.max(np.abs(s.coeffs - (f.coeffs + g.coeffs))) < 1e-15
    d = (2.0 * f) - f
    assert np.max(np.abs(d.coeffs - f.coeffs)) < 1e-15
    shifted = f + 1.0
    assert shifted.average() == pytest.approx(f.average() + 1.0)


# ------------------------------------------------------------- persistence


def test_dict_round_trip_exact():
    f = trig_poly(13, 7)
    g = TorusFunction.from_dict(f.to_dict())
    assert g.grid_size == f.grid_size
    assert np.array_equal(g.coeffs, f.coeffs)


def test_save_load(tmp_path):
    f = trig_poly(21, 5)
    p = tmp_path / "field.json"
    f.save(p)
    g = TorusFunction.load(p)
    assert np.array_equal(g.coeffs, f.coeffs)
    # file is plain json
    with open(p) as fh:
        data = json.load(fh)
    assert data["grid_size"] == f.grid_size


def test_fingerprint_sensitivity():
    f = trig_poly(1, 5)
    g = trig_poly(1, 5)
    assert f.fingerprint() == g.fingerprint()
    h = f + TorusFunction.from_modes({2: 1e-14}, f.grid_size)
    assert h.fingerprint() != f.fingerprint()


# ------------------------------------------------------------- rough data


def test_rough_tail_profile_exact():
    f = rough_tail_data(3.25, seed=42, grid_size=128, amplitude=2.0)
    n = np.arange(1, 64)
    mags = np.abs(f.coeffs[1:64])
    expected = 2.0 * (1.0 + n * n) ** (-0.5 * 3.25)
    assert np.max(np.abs(mags - expected)) < 1e-14
    assert f.average() == 0.0
    assert np.array_equal(f.coeffs, rough_tail_data(3.25, seed=42, grid_size=128, amplitude=2.0).coeffs)
    other = rough_tail_data(3.25, seed=43, grid_size=128, amplitude=2.0)
    assert not np.array_equal(f.coeffs, other.coeffs)


# ------------------------------------------------------ property coverage


coeff_lists = st.lists(
    st.tuples(
        st.integers(min_value=0, max_value=10),
        st.floats(-3, 3, allow_nan=False, width=32),
        st.floats(-3, 3, allow_nan=False, width=32),
    ),
    min_size=1,
    max_size=8,
)


@settings(max_examples=60, deadline=None)
@given(terms=coeff_lists)
def test_derivative_is_linear_and_kills_mean(terms):
    f = TorusFunction.harmonics(terms, 64)
    g = TorusFunction.harmonics([(2, 0.3, -0.1)], 64)
    lhs = (f + g).derivative()
    rhs = f.derivative() + g.derivative()
    assert np.max(np.abs(lhs.coeffs - rhs.coeffs)) < 1e-12
    assert f.derivative().average() == 0.0


@settings(max_examples=60, deadline=None)
@given(terms=coeff_lists)
def test_parseval_property(terms):
    f = TorusFunction.harmonics(terms, 64)
    quadrature = float(np.mean(f.values() ** 2))
    assert math.isclose(f.sobolev_norm(0.0) ** 2, quadrature, rel_tol=1e-9, abs_tol=1e-12)


@settings(max_examples=40, deadline=None)
@given(terms=coeff_lists, s=st.floats(0, 6, allow_nan=False))
def test_norm_monotone_in_index(terms, s):
    f = TorusFunction.harmonics(terms, 64)
    assert f.sobolev_norm(s) <= f.sobolev_norm(s + 0.5) + 1e-12


@settings(max_examples=40, deadline=None)
@given(terms=coeff_lists)
def test_product_commutes(terms):
    f = TorusFunction.harmonics(terms, 64)
    g = TorusFunction.harmonics([(1, 1.0, 0.0), (3, -0.5, 0.2)], 64)
    a = f.multiply(g)
    b = g.multiply(f)
    assert np.max(np.abs(a.coeffs - b.coeffs)) < 1e-12
