"""Spectral calculus for real 2pi-periodic functions.

A function is stored by its Fourier coefficients f_hat(n) for 0 <= n <= N/2 in
the normalization

    f_hat(n) = (1/2pi) * integral_0^{2pi} f(x) exp(-i n x) dx,

negative modes being implied by Hermitian symmetry.  All operations return new
objects; nothing mutates in place.  Products are evaluated pseudospectrally on
an oversampled grid (3/2 zero padding by default) and truncated back, which
removes aliasing for quadratic terms and keeps it negligible for the smooth
fields this package works with.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import NonZeroMean

# Default offset used to realize a strict-inequality Sobolev index "s+".
PLUS_ETA = 0.05

# Mean-zero tolerance for antiderivatives, absolute.
TOL_MEAN = 1.0e-10

DEFAULT_GRID_SIZE = 256
MAX_DERIVATIVE_ORDER = 12


@dataclass(frozen=True)
class SobolevIndex:
    """A Sobolev regularity index ``base + plus_offset``.

    ``plus_offset`` encodes a strictly-larger-than-``base`` index; the package
    default offset is :data:`PLUS_ETA`.
    """

    base: float
    plus_offset: float = 0.0

    def __post_init__(self):
        if self.base < 0:
            raise ValueError("Sobolev index base must be >= 0")
        if self.plus_offset < 0:
            raise ValueError("plus_offset must be >= 0")

    @property
    def value(self) -> float:
        return self.base + self.plus_offset

    def __float__(self) -> float:
        return self.value


def splus(base: float, eta: float | None = None) -> SobolevIndex:
    """The index ``base+``, i.e. ``base`` bumped by a small positive offset."""
    return SobolevIndex(base, PLUS_ETA if eta is None else eta)


def index_value(s) -> float:
    """Accept a float or a SobolevIndex wherever an index is needed."""
    return float(s)


def _as_even(n: int) -> int:
    return n if n % 2 == 0 else n + 1


def _refined_min(vals: np.ndarray, periodic: bool = True) -> float:
    """Minimum of a smooth sampled function, sharpened by a local parabola fit.

    The plain grid minimum of a smooth field carries an O(h^2) bias; fitting a
    quadratic through the minimizing sample and its two neighbours removes it.
    """
    i = int(np.argmin(vals))
    n = len(vals)
    v0 = vals[(i - 1) % n]
    v1 = vals[i]
    v2 = vals[(i + 1) % n]
    denom = v0 - 2.0 * v1 + v2
    if denom <= 0:
        return float(v1)
    correction = (v2 - v0) ** 2 / (8.0 * denom)
    return float(v1 - correction)


class TorusFunction:
    """A real 2pi-periodic function represented by its Fourier coefficients."""

    __slots__ = ("coeffs", "grid_size")

    def __init__(self, coeffs: np.ndarray, grid_size: int):
        if grid_size < 4 or grid_size % 2 != 0:
            raise ValueError("grid_size must be an even integer >= 4")
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.shape != (grid_size // 2 + 1,):
            raise ValueError(
                f"expected {grid_size // 2 + 1} coefficients for grid_size {grid_size}"
            )
        coeffs = coeffs.copy()
        coeffs[0] = coeffs[0].real        # mean of a real function
        coeffs[-1] = 0.0                  # Nyquist mode dropped for derivative safety
        self.coeffs = coeffs
        self.grid_size = grid_size

    # ------------------------------------------------------------------ build

    @classmethod
    def from_values(cls, values: np.ndarray, grid_size: int | None = None) -> "TorusFunction":
        values = np.asarray(values, dtype=np.float64)
        n = len(values)
        if grid_size is None:
            grid_size = n
        if n != grid_size:
            raise ValueError("value array length must equal grid_size")
        return cls(np.fft.rfft(values) / n, grid_size)

    @classmethod
    def zero(cls, grid_size: int = DEFAULT_GRID_SIZE) -> "TorusFunction":
        return cls(np.zeros(grid_size // 2 + 1, dtype=np.complex128), grid_size)

    @classmethod
    def constant(cls, c: float, grid_size: int = DEFAULT_GRID_SIZE) -> "TorusFunction":
        out = np.zeros(grid_size // 2 + 1, dtype=np.complex128)
        out[0] = c
        return cls(out, grid_size)

    @classmethod
    def from_modes(cls, modes: dict[int, complex], grid_size: int = DEFAULT_GRID_SIZE) -> "TorusFunction":
        """Build from ``{n: f_hat(n)}`` for n >= 0 (negative modes implied)."""
        out = np.zeros(grid_size // 2 + 1, dtype=np.complex128)
        for n, c in modes.items():
            if n < 0:
                raise ValueError("specify nonnegative modes only")
            if n >= grid_size // 2:
                raise ValueError(f"mode {n} does not fit on a grid of size {grid_size}")
            out[n] = c
        return cls(out, grid_size)

    @classmethod
    def harmonics(cls, terms: list[tuple[int, float, float]], grid_size: int = DEFAULT_GRID_SIZE) -> "TorusFunction":
        """Trigonometric polynomial sum of ``a cos(nx) + b sin(nx)`` terms.

        ``terms`` is a list of (n, a, b); n = 0 contributes the constant a.
        """
        modes: dict[int, complex] = {}
        for n, a, b in terms:
            if n == 0:
                modes[0] = modes.get(0, 0.0) + a
            else:
                modes[n] = modes.get(n, 0.0) + 0.5 * (a - 1j * b)
        return cls.from_modes(modes, grid_size)

    # -------------------------------------------------------------- evaluate

    @property
    def max_mode(self) -> int:
        return self.grid_size // 2

    def grid(self, oversample: int = 1) -> np.ndarray:
        m = self.grid_size * oversample
        return 2.0 * np.pi * np.arange(m) / m

    def values(self, oversample: int = 1) -> np.ndarray:
        """Physical values on a uniform grid, optionally zero-padded to a finer one."""
        m = self.grid_size * oversample
        padded = np.zeros(m // 2 + 1, dtype=np.complex128)
        padded[: len(self.coeffs)] = self.coeffs
        return np.fft.irfft(padded * m, n=m)

    def average(self) -> float:
        return float(self.coeffs[0].real)

    def grid_min(self, oversample: int = 4) -> float:
        """Approximate infimum over the circle (oversampled grid + parabola refine)."""
        return _refined_min(self.values(oversample))

    def grid_max(self, oversample: int = 4) -> float:
        return -_refined_min(-self.values(oversample))

    def sup_norm(self, oversample: int = 4) -> float:
        v = self.values(oversample)
        return float(np.max(np.abs(v)))

    # ------------------------------------------------------------- operators

    def derivative(self, order: int = 1) -> "TorusFunction":
        if not 0 <= order <= MAX_DERIVATIVE_ORDER:
            raise ValueError(f"derivative order must lie in [0, {MAX_DERIVATIVE_ORDER}]")
        if order == 0:
            return TorusFunction(self.coeffs, self.grid_size)
        n = np.arange(len(self.coeffs))
        return TorusFunction(self.coeffs * (1j * n) ** order, self.grid_size)

    def antiderivative_from_zero(self, tol_mean: float = TOL_MEAN) -> "TorusFunction":
        """The primitive g with g(0) = 0 and g' = f, defined for mean-zero f.

        Coefficientwise g accumulates f_hat(n)(e^{inx} - 1)/(in); the constant
        term collects the -1 parts so that g vanishes at x = 0.
        """
        mean = self.average()
        if abs(mean) >= tol_mean:
            raise NonZeroMean(mean, tol_mean)
        out = np.zeros_like(self.coeffs)
        n = np.arange(1, len(self.coeffs))
        out[1:] = self.coeffs[1:] / (1j * n)
        out[0] = -2.0 * np.sum(out[1:].real)
        return TorusFunction(out, self.grid_size)

    def sobolev_norm(self, s, homogeneous: bool = False) -> float:
        """The H^s norm, or the homogeneous variant with weight |n|^s."""
        s = index_value(s)
        n = np.arange(len(self.coeffs), dtype=np.float64)
        if homogeneous:
            weight = n ** (2.0 * s)
            weight[0] = 0.0 if s > 0 else 1.0
        else:
            weight = (1.0 + n * n) ** s
        mags = np.abs(self.coeffs) ** 2
        total = weight[0] * mags[0] + 2.0 * np.sum(weight[1:] * mags[1:])
        return math.sqrt(total)

    def multiply(self, other: "TorusFunction", oversample: float = 1.5) -> "TorusFunction":
        """Pseudospectral product with zero-padding dealiasing."""
        if other.grid_size != self.grid_size:
            raise ValueError("operands must share a grid size")
        m = _as_even(int(math.ceil(self.grid_size * oversample)))
        pad = m // 2 + 1
        a = np.zeros(pad, dtype=np.complex128)
        b = np.zeros(pad, dtype=np.complex128)
        a[: len(self.coeffs)] = self.coeffs
        b[: len(other.coeffs)] = other.coeffs
        va = np.fft.irfft(a * m, n=m)
        vb = np.fft.irfft(b * m, n=m)
        prod = np.fft.rfft(va * vb) / m
        return TorusFunction(prod[: len(self.coeffs)], self.grid_size)

    def mollify(self, eps: float, s: float) -> "TorusFunction":
        """Smoothing multiplier exp(-eps <n>^s)."""
        if eps < 0:
            raise ValueError("eps must be >= 0")
        n = np.arange(len(self.coeffs), dtype=np.float64)
        mult = np.exp(-eps * (1.0 + n * n) ** (0.5 * s))
        return TorusFunction(self.coeffs * mult, self.grid_size)

    def heat_semigroup(self, tau: float) -> "TorusFunction":
        """Fourth-order heat flow exp(-tau * d^4/dx^4), tau >= 0."""
        if tau < 0:
            raise ValueError("tau must be >= 0")
        n = np.arange(len(self.coeffs), dtype=np.float64)
        return TorusFunction(self.coeffs * np.exp(-tau * n ** 4), self.grid_size)

    def resample(self, grid_size: int) -> "TorusFunction":
        """Band-limited interpolation onto a finer grid, or truncation to a coarser one."""
        out = np.zeros(grid_size // 2 + 1, dtype=np.complex128)
        keep = min(len(out), len(self.coeffs))
        out[:keep] = self.coeffs[:keep]
        return TorusFunction(out, grid_size)

    def droptol(self, rel_floor: float) -> "TorusFunction":
        """Zero all coefficients below ``rel_floor * max|coeff|``.

        Used before measuring high-order norms of time-stepped states, where
        double-precision round-off otherwise leaves a flat coefficient pedestal
        that the <n>^s weights amplify into the leading contribution.
        """
        top = np.max(np.abs(self.coeffs))
        if top == 0.0:
            return TorusFunction(self.coeffs, self.grid_size)
        out = self.coeffs.copy()
        out[np.abs(out) < rel_floor * top] = 0.0
        return TorusFunction(out, self.grid_size)

    # ------------------------------------------------------------ arithmetic

    def __add__(self, other):
        if isinstance(other, TorusFunction):
            if other.grid_size != self.grid_size:
                raise ValueError("operands must share a grid size")
            return TorusFunction(self.coeffs + other.coeffs, self.grid_size)
        if isinstance(other, (int, float)):
            out = self.coeffs.copy()
            out[0] += other
            return TorusFunction(out, self.grid_size)
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        return self.__add__(-other)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __neg__(self):
        return TorusFunction(-self.coeffs, self.grid_size)

    def __mul__(self, other):
        if isinstance(other, TorusFunction):
            return self.multiply(other)
        if isinstance(other, (int, float)):
            return TorusFunction(self.coeffs * other, self.grid_size)
        return NotImplemented

    __rmul__ = __mul__

    # ---------------------------------------------------------- persistence

    def to_dict(self) -> dict:
        return {
            "grid_size": self.grid_size,
            "coeffs": [[float(c.real), float(c.imag)] for c in self.coeffs],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TorusFunction":
        coeffs = np.array([complex(re, im) for re, im in data["coeffs"]])
        return cls(coeffs, int(data["grid_size"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "TorusFunction":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(str(self.grid_size).encode())
        h.update(np.ascontiguousarray(self.coeffs).tobytes())
        return h.hexdigest()[:16]

    def __repr__(self):
        return (
            f"TorusFunction(grid_size={self.grid_size}, "
            f"mean={self.average():.3g}, l2={self.sobolev_norm(0.0):.3g})"
        )


def rough_tail_data(
    exponent: float,
    seed: int,
    grid_size: int = DEFAULT_GRID_SIZE,
    amplitude: float = 1.0,
) -> TorusFunction:
    """Mean-zero data with |f_hat(n)| = amplitude * <n>^-exponent and seeded phases.

    The modulus profile is exact (not sampled), so Sobolev norms of the data
    itself are reproducible to round-off; only the phases are random.
    """
    rng = np.random.default_rng(seed)
    half = grid_size // 2
    coeffs = np.zeros(half + 1, dtype=np.complex128)
    n = np.arange(1, half)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=len(n))
    coeffs[1:half] = amplitude * (1.0 + n * n) ** (-0.5 * exponent) * np.exp(1j * phases)
    return TorusFunction(coeffs, grid_size)
