"""Frame transformations as similarity transformations of HTF matrices.

Frame labels: ``"ab"`` (stationary real), ``"ab+-"`` (stationary complex),
``"dq"`` (rotating real) and ``"dq+-"`` (rotating complex).  The d axis is
aligned with the rotation angle ``w_p t`` (zero at ``t = 0``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .core import HarmonicMatrixSeries, toeplitz_embed
from .hss import HtfSlice

FRAMES = ("ab", "ab+-", "dq", "dq+-")
DIAG_TOL = 1e-8

T_J = np.array([[1, 1j], [1, -1j]])
T_J_INV = np.linalg.inv(T_J)


class NotDiagonalError(ValueError):
    pass


class SymmetryError(ValueError):
    pass


@dataclass(frozen=True)
class FrameTransform:
    kind: str
    series: HarmonicMatrixSeries
    inverse_series: HarmonicMatrixSeries

    def __post_init__(self):
        if self.kind not in ("rotation", "complex", "park", "identity", "custom"):
            raise ValueError(f"unknown transform kind {self.kind!r}")
        prod = self.series @ self.inverse_series
        eye = np.eye(self.series.rows)
        for n in set(prod.coeffs) | {0}:
            target = eye if n == 0 else 0
            if np.max(np.abs(prod.coeff(n) - target)) > 1e-12:
                raise ValueError("inverse_series is not the inverse of series")

    @property
    def omega_p(self) -> float:
        return self.series.base_freq

    @property
    def bandwidth(self) -> int:
        return max(self.series.bandwidth, self.inverse_series.bandwidth)

    def inverse(self) -> FrameTransform:
        return FrameTransform(self.kind, self.inverse_series, self.series)

    def __matmul__(self, other: FrameTransform) -> FrameTransform:
        """Composite transform ``self(t) @ other(t)``."""
        return FrameTransform("custom", self.series @ other.series,
                              other.inverse_series @ self.inverse_series)

    def embed(self, h: int) -> tuple[np.ndarray, np.ndarray]:
        """Truncated ``(T, T^-1)``; the inverse is embedded, not inverted."""
        return (toeplitz_embed(self.series, h).data,
                toeplitz_embed(self.inverse_series, h).data)


def complex_transform(omega_p: float) -> FrameTransform:
    """``T_j``: ``(x_a, x_b) -> (x+, x-)``."""
    return FrameTransform(
        "complex", HarmonicMatrixSeries.constant(T_J, omega_p),
        HarmonicMatrixSeries.constant(T_J_INV, omega_p))


def rotation_transform(omega_p: float) -> FrameTransform:
    """``T_r = diag(exp(-j w_p t), exp(j w_p t))``: ab+- -> dq+-."""
    e1, e2 = np.diag([1, 0]), np.diag([0, 1])
    fwd = HarmonicMatrixSeries(omega_p, {-1: e1, 1: e2})
    inv = HarmonicMatrixSeries(omega_p, {1: e1, -1: e2})
    return FrameTransform("rotation", fwd, inv)


def park_transform(omega_p: float) -> FrameTransform:
    """``T_p = T_j^-1 T_r T_j``: ab -> dq, real-valued."""
    tj, tr = complex_transform(omega_p), rotation_transform(omega_p)
    comp = tj.inverse() @ tr @ tj
    fwd = HarmonicMatrixSeries(omega_p, comp.series.coeffs, real_valued=True)
    inv = HarmonicMatrixSeries(omega_p, comp.inverse_series.coeffs,
                               real_valued=True)
    return FrameTransform("park", fwd, inv)


def identity_transform(omega_p: float, dim: int = 2) -> FrameTransform:
    eye = HarmonicMatrixSeries.constant(np.eye(dim), omega_p, real_valued=True)
    return FrameTransform("identity", eye, eye)


def custom_transform(series: HarmonicMatrixSeries,
                     inverse_series: HarmonicMatrixSeries) -> FrameTransform:
    return FrameTransform("custom", series, inverse_series)


TRANSFORMS = {
    "rotation": rotation_transform,
    "complex": complex_transform,
    "park": park_transform,
    "identity": identity_transform,
}


def similarity(G: HtfSlice, T: FrameTransform) -> HtfSlice:
    """``T G T^-1`` at the order of ``G``.

    Only blocks with ``|n| <= h - T.bandwidth`` are free of truncation effects.
    """
    if T.series.rows != G.output_dim or T.series.rows != G.input_dim:
        raise ValueError(f"transform of size {T.series.rows} does not match "
                         f"HTF blocks {G.output_dim}x{G.input_dim}")
    if not np.isclose(T.omega_p, G.omega_p, rtol=1e-12):
        raise ValueError("transform and HTF have different base frequencies")
    Tm, Ti = T.embed(G.order)
    return G.with_matrix(Tm @ G.matrix @ Ti)


@dataclass(frozen=True)
class DiagonalityReport:
    is_diagonal: bool
    residual: float
    scale: float

    @property
    def relative(self) -> float:
        return self.residual / self.scale if self.scale > 0 else 0.0

    def __bool__(self):
        return self.is_diagonal


def is_block_diagonal(G: HtfSlice, block: int | None = None,
                      tol: float = DIAG_TOL, margin: int = 1) -> DiagonalityReport:
    """Check that interior entries outside the diagonal blocks vanish.

    The interior excludes the outer ``margin`` harmonics on each side.
    ``block=1`` tests entry-diagonality of the whole slice.
    """
    block = G.output_dim if block is None else block
    if G.output_dim % block or G.input_dim % block:
        raise ValueError(f"block {block} does not divide the HTF block size")
    k = G.order - margin
    if k < 0:
        raise ValueError("margin leaves no interior blocks")
    p, q = G.output_dim, G.input_dim
    r0, c0 = (G.order - k) * p, (G.order - k) * q
    sub = G.matrix[r0:r0 + (2 * k + 1) * p, c0:c0 + (2 * k + 1) * q]
    rows = np.arange(sub.shape[0]) // block
    cols = np.arange(sub.shape[1]) // block
    outside = rows[:, None] != cols[None, :]
    scale = float(np.max(np.abs(sub), initial=0.0))
    residual = float(np.max(np.abs(sub[outside]), initial=0.0))
    return DiagonalityReport(residual <= tol * scale, residual, scale)


def _grid_values(G, grid) -> np.ndarray:
    if callable(G):
        if grid is None:
            raise ValueError("a grid is needed to sample a 2x2 evaluator")
        return np.array([G(s) for s in np.atleast_1d(grid)])
    return np.asarray(G, dtype=complex).reshape(-1, 2, 2)


def is_entry_diagonal(G, grid=None, tol: float = DIAG_TOL) -> DiagonalityReport:
    """Entry diagonality of a reduced 2x2 (callable of ``s`` or stacked arrays)."""
    vals = _grid_values(G, grid)
    scale = float(np.max(np.abs(vals), initial=0.0))
    residual = float(np.max(np.abs(vals[:, [0, 1], [1, 0]]), initial=0.0))
    return DiagonalityReport(residual <= tol * scale, residual, scale)


@dataclass(frozen=True)
class ReducedHtf2x2:
    """Order-reduced HTF: a 2x2 transfer matrix as a function of ``s``.

    In ``"ab+-"``/``"dq+-"`` it acts on ``(u+(s_1), u-(s_-1))`` in the
    stationary frame, which is the same as ``(u_dq+(s), u_dq-(s))``.
    """

    func: Callable[[complex], np.ndarray]
    frame: str
    omega_p: float = 1.0

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise ValueError(f"unknown frame {self.frame!r}")

    def __call__(self, s) -> np.ndarray:
        return np.asarray(self.func(s), dtype=complex)

    def entry(self, i: int, j: int) -> Callable[[complex], complex]:
        return lambda s: self(s)[i - 1, j - 1]

    G11 = property(lambda self: self.entry(1, 1))
    G12 = property(lambda self: self.entry(1, 2))
    G21 = property(lambda self: self.entry(2, 1))
    G22 = property(lambda self: self.entry(2, 2))

    def shifted(self, n: int) -> ReducedHtf2x2:
        """Same matrix evaluated at ``s_n``."""
        w = self.omega_p
        return ReducedHtf2x2(lambda s: self(s + 1j * n * w), self.frame, w)

    def convert(self, frame: str) -> ReducedHtf2x2:
        """Move along a frame edge that keeps the 2x2 at a single ``s``."""
        if frame == self.frame:
            return self
        pair = {self.frame, frame}
        if pair == {"ab+-", "dq+-"}:
            return ReducedHtf2x2(self.func, frame, self.omega_p)
        if self.frame in ("ab+-", "dq+-") and frame == "dq":
            base = self.convert("dq+-")
            return ReducedHtf2x2(lambda s: T_J_INV @ base(s) @ T_J, "dq",
                                 self.omega_p)
        if self.frame == "dq" and frame in ("dq+-", "ab+-"):
            return ReducedHtf2x2(lambda s: T_J @ self(s) @ T_J_INV, frame,
                                 self.omega_p)
        raise ValueError(f"no reduced-order conversion {self.frame} -> {frame}")


def dq_from_entries(g_dd, g_dq, g_qd, g_qq, omega_p: float = 1.0) -> ReducedHtf2x2:
    """Reduced dq-frame model from four scalar functions of ``s``."""
    return ReducedHtf2x2(
        lambda s: np.array([[g_dd(s), g_dq(s)], [g_qd(s), g_qq(s)]]), "dq", omega_p)


def stationary_pair(G: HtfSlice, shift: int = 1) -> np.ndarray:
    """2x2 mapping ``(u+(s_k), u-(s_{k-2}))`` to ``(y+(s_k), y-(s_{k-2}))``, ``k = shift``.

    ``shift=1`` gives the matrix at ``s``; ``shift=0`` gives the same
    matrix evaluated at ``s_-1``.
    """
    if G.output_dim != 2 or G.input_dim != 2:
        raise ValueError("stationary_pair needs 2x2 harmonic blocks")
    hp, hm = shift, shift - 2
    out = np.empty((2, 2), dtype=complex)
    out[0, 0] = G.harmonic_block(hp, hp)[0, 0]
    out[0, 1] = G.harmonic_block(hp, hm)[0, 1]
    out[1, 0] = G.harmonic_block(hm, hp)[1, 0]
    out[1, 1] = G.harmonic_block(hm, hm)[1, 1]
    return out


def reduce_to_2x2(G: HtfSlice, frame: str = "dq+-",
                  evaluate: Callable[[complex], HtfSlice] | None = None,
                  tol: float = DIAG_TOL, margin: int = 1) -> ReducedHtf2x2:
    """Extract the centre block of a block-diagonal HTF as a function of ``s``.

    With ``evaluate`` the block is recomputed at any ``s``; without it only
    the replicas ``s0 + j n w_p`` held in ``G`` itself are available.
    """
    if G.output_dim != 2 or G.input_dim != 2:
        raise ValueError("reduce_to_2x2 needs 2x2 harmonic blocks")
    rep = is_block_diagonal(G, tol=tol, margin=margin)
    if not rep:
        raise NotDiagonalError(
            f"HTF is not block diagonal (relative residual {rep.relative:.3e})")

    if evaluate is not None:
        def func(s):
            return evaluate(s).harmonic_block(0, 0)
    else:
        k_max = G.order - margin

        def func(s):
            n = (s - G.s0) / (1j * G.omega_p)
            k = int(round(n.real))
            if abs(n - k) > 1e-9 or abs(k) > k_max:
                raise ValueError(f"s={s} is not an interior replica of s0={G.s0}")
            return G.harmonic_block(k, k)
    return ReducedHtf2x2(func, frame, G.omega_p)


@dataclass(frozen=True)
class SymmetryReport:
    symmetric: bool
    deviation: float

    def __bool__(self):
        return self.symmetric


def symmetric_condition(G: ReducedHtf2x2, grid: Iterable[complex],
                        tol: float = DIAG_TOL) -> SymmetryReport:
    """``G_dd == G_qq`` and ``G_dq == -G_qd`` over ``grid`` (relative deviation)."""
    G = G.convert("dq")
    vals = np.array([G(s) for s in np.atleast_1d(grid)])
    scale = np.max(np.abs(vals), initial=0.0)
    dev = np.maximum(np.abs(vals[:, 0, 0] - vals[:, 1, 1]),
                     np.abs(vals[:, 0, 1] + vals[:, 1, 0]))
    worst = float(np.max(dev) / scale) if scale > 0 else 0.0
    return SymmetryReport(worst <= tol, worst)


@dataclass(frozen=True)
class EntryDiagonalization:
    """Eigen-pairs of a symmetric dq model.

    ``lambda_plus = G_dd + j G_dq`` has left eigenvector ``(1, -j)``;
    ``lambda_minus = G_dd - j G_dq`` has ``(1, +j)``, the first row of
    ``T_j``, so ``T_j G_dq T_j^-1 = diag(lambda_minus, lambda_plus)``.
    """

    lambda_plus: Callable[[complex], complex]
    lambda_minus: Callable[[complex], complex]
    xi_plus: np.ndarray
    xi_minus: np.ndarray

    def diagonal(self, s) -> np.ndarray:
        """The entry-diagonal dq+- matrix at ``s``."""
        return np.diag([self.lambda_minus(s), self.lambda_plus(s)])

    def reassemble(self, s) -> np.ndarray:
        return T_J_INV @ self.diagonal(s) @ T_J


def entry_diagonalize(G: ReducedHtf2x2, grid=None,
                      tol: float = DIAG_TOL) -> EntryDiagonalization:
    G = G.convert("dq")
    grid = 1j * np.logspace(-2, 2, 25) if grid is None else grid
    rep = symmetric_condition(G, grid, tol)
    if not rep:
        raise SymmetryError(
            f"symmetric condition violated (deviation {rep.deviation:.3e})")

    def lam_p(s):
        g = G(s)
        return g[0, 0] + 1j * g[0, 1]

    def lam_m(s):
        g = G(s)
        return g[0, 0] - 1j * g[0, 1]

    return EntryDiagonalization(lam_p, lam_m, np.array([1, -1j]),
                                np.array([1, 1j]))
