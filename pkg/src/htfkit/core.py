"""Harmonic coefficient series, Toeplitz embedding and harmonic index bookkeeping.

Block ordering convention used throughout the package: a truncated harmonic
vector of order ``h`` stacks ``x(s_{+h}), ..., x(s), ..., x(s_{-h})`` from top
to bottom, where ``s_n = s + j n w_p``.  Block row ``r`` therefore carries the
harmonic index ``h - r`` and block ``(r, c)`` of a Toeplitz embedding holds the
Fourier coefficient ``X_{c-r}``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

TONE_RESOLUTION = 1e-9
CONDITION_LIMIT = 1e12


class ShapeError(ValueError):
    """Coefficient matrices with inconsistent dimensions."""


class InversionError(np.linalg.LinAlgError):
    """Raised when a truncated operator is singular or badly conditioned."""

    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


class TruncationWarning(UserWarning):
    """The inverse of a truncation is only accurate on interior blocks."""


def harmonic_indices(h: int) -> np.ndarray:
    """Harmonic index of each block row, ``+h ... -h``."""
    return np.arange(h, -h - 1, -1)


def block_of(n: int, h: int) -> int:
    """Block row holding harmonic ``n`` in an order-``h`` stack."""
    if abs(n) > h:
        raise IndexError(f"harmonic {n} outside truncation order {h}")
    return h - n


@dataclass(frozen=True)
class HarmonicMatrixSeries:
    """Fourier coefficients ``{X_n}`` of a periodic matrix function.

    ``X(t) = sum_n X_n exp(j n base_freq t)``.  Missing indices are zero.
    """

    base_freq: float
    coeffs: Mapping[int, np.ndarray]
    real_valued: bool = False
    rows: int = field(init=False)
    cols: int = field(init=False)

    def __post_init__(self):
        if not self.base_freq > 0:
            raise ValueError("base_freq must be positive")
        if not self.coeffs:
            raise ValueError("series needs at least one coefficient")
        fixed = {}
        shape = None
        for n, mat in self.coeffs.items():
            mat = np.atleast_2d(np.asarray(mat, dtype=complex)).copy()
            if shape is None:
                shape = mat.shape
            elif mat.shape != shape:
                raise ShapeError(
                    f"coefficient {n} has shape {mat.shape}, expected {shape}")
            mat.setflags(write=False)
            fixed[int(n)] = mat
        object.__setattr__(self, "coeffs", dict(sorted(fixed.items())))
        object.__setattr__(self, "rows", shape[0])
        object.__setattr__(self, "cols", shape[1])
        if self.real_valued:
            self._check_real()

    def _check_real(self):
        zero = self.coeff(0)
        if np.max(np.abs(zero.imag), initial=0.0) > 1e-12:
            raise ValueError("real_valued series needs a real 0th coefficient")
        for n in self.coeffs:
            if not np.allclose(self.coeff(-n), np.conj(self.coeff(n)),
                               rtol=0, atol=1e-12):
                raise ValueError(
                    f"real_valued series violates X_-n = conj(X_n) at n={n}")

    @classmethod
    def constant(cls, matrix, base_freq: float, real_valued: bool = False):
        return cls(base_freq, {0: matrix}, real_valued=real_valued)

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    @property
    def bandwidth(self) -> int:
        """Largest ``|n|`` carrying a nonzero coefficient."""
        nz = [abs(n) for n, c in self.coeffs.items() if np.any(c != 0)]
        return max(nz, default=0)

    def coeff(self, n: int) -> np.ndarray:
        mat = self.coeffs.get(n)
        if mat is None:
            return np.zeros((self.rows, self.cols), dtype=complex)
        return mat

    def __call__(self, t: float) -> np.ndarray:
        """Time-domain value ``X(t)``."""
        out = np.zeros((self.rows, self.cols), dtype=complex)
        for n, c in self.coeffs.items():
            out += c * np.exp(1j * n * self.base_freq * t)
        return out

    def _check_freq(self, other: HarmonicMatrixSeries):
        if not np.isclose(self.base_freq, other.base_freq, rtol=1e-12):
            raise ValueError("series have different base frequencies")

    def __add__(self, other: HarmonicMatrixSeries) -> HarmonicMatrixSeries:
        self._check_freq(other)
        if self.shape != other.shape:
            raise ShapeError(f"cannot add {self.shape} and {other.shape}")
        keys = set(self.coeffs) | set(other.coeffs)
        return HarmonicMatrixSeries(
            self.base_freq, {n: self.coeff(n) + other.coeff(n) for n in keys},
            real_valued=self.real_valued and other.real_valued)

    def scale(self, alpha: complex) -> HarmonicMatrixSeries:
        real = self.real_valued and np.imag(alpha) == 0
        return HarmonicMatrixSeries(
            self.base_freq, {n: alpha * c for n, c in self.coeffs.items()},
            real_valued=real)

    def __matmul__(self, other: HarmonicMatrixSeries) -> HarmonicMatrixSeries:
        """Pointwise product ``X(t) @ Y(t)`` (convolution of coefficients)."""
        self._check_freq(other)
        if self.cols != other.rows:
            raise ShapeError(f"cannot multiply {self.shape} by {other.shape}")
        out: dict[int, np.ndarray] = {}
        for n, a in self.coeffs.items():
            for k, b in other.coeffs.items():
                prod = a @ b
                out[n + k] = out[n + k] + prod if n + k in out else prod
        return HarmonicMatrixSeries(
            self.base_freq, out,
            real_valued=self.real_valued and other.real_valued)

    def conj_transpose_coeffs(self) -> HarmonicMatrixSeries:
        """Series of ``X(t)^H`` (coefficients ``X_{-n}^H``)."""
        return HarmonicMatrixSeries(
            self.base_freq, {-n: c.conj().T for n, c in self.coeffs.items()},
            real_valued=self.real_valued)


@dataclass(frozen=True)
class TruncatedToeplitz:
    """Finite ``(2h+1)``-block slice of an infinite block Toeplitz operator."""

    order: int
    block_rows: int
    block_cols: int
    data: np.ndarray
    base_freq: float

    @property
    def nblocks(self) -> int:
        return 2 * self.order + 1

    def block(self, r: int, c: int) -> np.ndarray:
        br, bc = self.block_rows, self.block_cols
        return self.data[r * br:(r + 1) * br, c * bc:(c + 1) * bc]


def toeplitz_embed(series: HarmonicMatrixSeries, h: int) -> TruncatedToeplitz:
    """Embed ``series`` as an order-``h`` truncated Toeplitz matrix.

    Coefficient ``X_n`` lands on the ``n``-th block super-diagonal; indices
    with ``|n| > 2h`` do not fit and are dropped.
    """
    if h < 1:
        raise ValueError("truncation order h must be >= 1")
    nb = 2 * h + 1
    br, bc = series.rows, series.cols
    data = np.zeros((nb * br, nb * bc), dtype=complex)
    for n, mat in series.coeffs.items():
        if abs(n) > 2 * h:
            continue
        for r in range(nb):
            c = r + n
            if 0 <= c < nb:
                data[r * br:(r + 1) * br, c * bc:(c + 1) * bc] = mat
    data.setflags(write=False)
    return TruncatedToeplitz(h, br, bc, data, series.base_freq)


def n_matrix(h: int, omega_p: float, dim: int) -> np.ndarray:
    """``blkdiag(j n w_p I_dim)`` for ``n = +h ... -h``."""
    if h < 1 or dim < 1:
        raise ValueError("need h >= 1 and dim >= 1")
    return np.diag(np.repeat(1j * omega_p * harmonic_indices(h), dim))


@dataclass(frozen=True)
class ToeplitzInverse:
    matrix: np.ndarray
    condition: float
    # inverse of a truncation, not truncation of the inverse
    interior_only: bool = True


def toeplitz_invert(T: TruncatedToeplitz | np.ndarray,
                    cond_limit: float = CONDITION_LIMIT) -> ToeplitzInverse:
    """Dense inverse of a truncated operator.

    Only interior blocks of the result approximate the infinite inverse; the
    returned ``interior_only`` flag is a reminder and a `TruncationWarning` is
    issued when the operator is not block diagonal.
    """
    data = T.data if isinstance(T, TruncatedToeplitz) else np.asarray(T)
    if data.shape[0] != data.shape[1]:
        raise ShapeError(f"cannot invert non-square {data.shape}")
    cond = np.linalg.cond(data)
    if not np.isfinite(cond) or cond > cond_limit:
        raise InversionError(
            f"truncated operator is singular (condition {cond:.3e})", cond)
    inv = np.linalg.inv(data)
    if isinstance(T, TruncatedToeplitz):
        offdiag = data.copy()
        for r in range(T.nblocks):
            offdiag[r * T.block_rows:(r + 1) * T.block_rows,
                    r * T.block_cols:(r + 1) * T.block_cols] = 0
        if np.any(offdiag != 0):
            warnings.warn("inverse of a truncated Toeplitz matrix is exact on "
                          "interior blocks only", TruncationWarning, stacklevel=2)
    return ToeplitzInverse(inv, float(cond))


@dataclass(frozen=True)
class ToneSet:
    """Discrete spectrum: real frequency (rad/s) -> complex amplitude vector."""

    tones: Mapping[float, np.ndarray]
    resolution: float = TONE_RESOLUTION

    def __post_init__(self):
        merged: dict[float, np.ndarray] = {}
        for w, amp in self.tones.items():
            key = round(float(w) / self.resolution) * self.resolution
            amp = np.atleast_1d(np.asarray(amp, dtype=complex))
            merged[key] = merged[key] + amp if key in merged else amp
        object.__setattr__(self, "tones", dict(sorted(merged.items())))

    @classmethod
    def single(cls, omega: float, amplitude) -> ToneSet:
        return cls({omega: amplitude})

    @property
    def frequencies(self) -> np.ndarray:
        return np.array(list(self.tones))

    def __len__(self):
        return len(self.tones)

    def amplitude(self, omega: float) -> np.ndarray:
        key = round(float(omega) / self.resolution) * self.resolution
        return self.tones[key]

    def __call__(self, t):
        """Time signal ``sum U exp(j w t)``; ``t`` scalar or array."""
        t = np.asarray(t, dtype=float)
        out = 0
        for w, amp in self.tones.items():
            out = out + np.multiply.outer(np.exp(1j * w * t), amp)
        return out
