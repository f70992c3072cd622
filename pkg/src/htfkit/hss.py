"""Harmonic state-space models and harmonic transfer function evaluation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (CONDITION_LIMIT, HarmonicMatrixSeries, ShapeError, ToneSet,
                   block_of, harmonic_indices, n_matrix, toeplitz_embed)


class PoleHitError(np.linalg.LinAlgError):
    """The harmonic resolvent is singular at the evaluation point."""

    def __init__(self, message: str, s: complex, nearest: complex):
        super().__init__(message)
        self.s = s
        self.nearest = nearest


@dataclass(frozen=True)
class LtpStateSpace:
    """Linear time-periodic model ``x' = A(t)x + B(t)u, y = C(t)x + D(t)u``."""

    A: HarmonicMatrixSeries
    B: HarmonicMatrixSeries
    C: HarmonicMatrixSeries
    D: HarmonicMatrixSeries

    def __post_init__(self):
        nx, nu, ny = self.A.rows, self.B.cols, self.C.rows
        if self.A.cols != nx:
            raise ShapeError("A must be square")
        if self.B.rows != nx:
            raise ShapeError(f"B has {self.B.rows} rows, expected {nx}")
        if self.C.cols != nx:
            raise ShapeError(f"C has {self.C.cols} cols, expected {nx}")
        if self.D.shape != (ny, nu):
            raise ShapeError(f"D has shape {self.D.shape}, expected {(ny, nu)}")
        w = self.A.base_freq
        for name in "BCD":
            if not np.isclose(getattr(self, name).base_freq, w, rtol=1e-12):
                raise ValueError(f"{name} does not share the base frequency of A")

    @classmethod
    def from_coeffs(cls, omega_p: float, A: dict, B: dict, C: dict,
                    D: dict | None = None, real_valued: bool = False):
        """Build from plain ``{n: matrix}`` dicts; ``D`` defaults to zero."""
        A_s = HarmonicMatrixSeries(omega_p, A, real_valued)
        B_s = HarmonicMatrixSeries(omega_p, B, real_valued)
        C_s = HarmonicMatrixSeries(omega_p, C, real_valued)
        if D is None:
            D = {0: np.zeros((C_s.rows, B_s.cols))}
        return cls(A_s, B_s, C_s, HarmonicMatrixSeries(omega_p, D, real_valued))

    @property
    def omega_p(self) -> float:
        return self.A.base_freq

    @property
    def state_dim(self) -> int:
        return self.A.rows

    @property
    def input_dim(self) -> int:
        return self.B.cols

    @property
    def output_dim(self) -> int:
        return self.C.rows

    @property
    def bandwidth(self) -> int:
        return max(x.bandwidth for x in (self.A, self.B, self.C, self.D))

    @property
    def is_lti(self) -> bool:
        return self.bandwidth == 0

    def matrices(self, t: float):
        """Time-domain ``(A(t), B(t), C(t), D(t))``."""
        return self.A(t), self.B(t), self.C(t), self.D(t)


@dataclass(frozen=True)
class HtfSlice:
    """Truncated HTF matrix evaluated at a single point ``s0``."""

    s0: complex
    order: int
    matrix: np.ndarray
    output_dim: int
    input_dim: int
    omega_p: float

    @property
    def nblocks(self) -> int:
        return 2 * self.order + 1

    def block(self, r: int, c: int) -> np.ndarray:
        p, q = self.output_dim, self.input_dim
        return self.matrix[r * p:(r + 1) * p, c * q:(c + 1) * q]

    def harmonic_block(self, row_harmonic: int, col_harmonic: int) -> np.ndarray:
        """Block mapping ``u(s_col)`` to ``y(s_row)``."""
        h = self.order
        return self.block(block_of(row_harmonic, h), block_of(col_harmonic, h))

    def entry(self, n: int, m: int) -> np.ndarray:
        """``G_n(s_m)``: the block taking ``u(s_{m-n})`` to ``y(s_m)``."""
        return self.harmonic_block(m, m - n)

    def with_matrix(self, matrix: np.ndarray) -> HtfSlice:
        return HtfSlice(self.s0, self.order, matrix, self.output_dim,
                        self.input_dim, self.omega_p)


def _resolvent_solve(model: LtpStateSpace, s: complex, h: int,
                     rhs: np.ndarray) -> np.ndarray:
    nx = model.state_dim
    A = toeplitz_embed(model.A, h).data
    lhs = s * np.eye(A.shape[0]) + n_matrix(h, model.omega_p, nx) - A
    cond = np.linalg.cond(lhs)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        eigs = np.linalg.eigvals(A - n_matrix(h, model.omega_p, nx))
        nearest = complex(eigs[np.argmin(np.abs(eigs - s))])
        raise PoleHitError(
            f"harmonic resolvent singular at s={s} (condition {cond:.3e}); "
            f"nearest harmonic eigenvalue {nearest:.6g}", s, nearest)
    return np.linalg.solve(lhs, rhs)


def htf_evaluate(model: LtpStateSpace, s: complex, h: int) -> HtfSlice:
    """Evaluate ``C (sI + N - A)^-1 B + D`` with all operators truncated at ``h``."""
    if h < 1:
        raise ValueError("truncation order h must be >= 1")
    s = complex(s)
    B = toeplitz_embed(model.B, h).data
    C = toeplitz_embed(model.C, h).data
    D = toeplitz_embed(model.D, h).data
    G = C @ _resolvent_solve(model, s, h, B) + D
    return HtfSlice(s, h, G, model.output_dim, model.input_dim, model.omega_p)


def coupling_spectrum(model: LtpStateSpace, input_tone: ToneSet, h: int) -> ToneSet:
    """Output spectrum produced by a single input tone.

    A tone ``U`` at ``w_u`` appears at ``w_u + n w_p`` with amplitude
    ``G_n(j(w_u + n w_p)) U`` for ``n = -h ... h``.
    """
    if len(input_tone) != 1:
        raise ValueError("coupling_spectrum takes a single input tone")
    (w_u, U), = input_tone.tones.items()
    U = np.broadcast_to(U, (model.input_dim,))
    G = htf_evaluate(model, 1j * w_u, h)
    out = {}
    for n in harmonic_indices(h):
        out[w_u + n * model.omega_p] = G.harmonic_block(n, 0) @ U
    return ToneSet(out, input_tone.resolution)


@dataclass(frozen=True)
class ConvergenceReport:
    orders: tuple[int, ...]
    changes: tuple[float, ...]
    interior: int
    tol: float = 1e-9

    @property
    def converged(self) -> bool:
        return bool(self.changes) and self.changes[-1] < self.tol

    def __str__(self):
        pairs = ", ".join(f"{a}->{b}: {c:.3e}" for a, b, c in
                          zip(self.orders, self.orders[1:], self.changes))
        return f"interior |n|<={self.interior}: {pairs}"


def interior_blocks(G: HtfSlice, k: int) -> np.ndarray:
    """Sub-matrix of ``G`` restricted to harmonics ``|n| <= k``."""
    h = G.order
    p, q = G.output_dim, G.input_dim
    r0, r1 = h - k, h + k + 1
    return G.matrix[r0 * p:r1 * p, r0 * q:r1 * q]


def truncation_probe(model: LtpStateSpace, s: complex, h_list: Sequence[int],
                     tol: float = 1e-9, interior: int | None = None) -> ConvergenceReport:
    """Max change of interior HTF entries between consecutive truncation orders.

    The default interior ``|n| <= h_min - 2 b`` (``b`` the model bandwidth)
    keeps clear of blocks whose coupling chain reaches the truncation edge
    within one round trip.
    """
    orders = tuple(int(h) for h in h_list)
    if list(orders) != sorted(orders) or len(set(orders)) != len(orders):
        raise ValueError("h_list must be strictly ascending")
    k = max(orders[0] - 2 * model.bandwidth, 0) if interior is None else interior
    if not 0 <= k <= orders[0]:
        raise ValueError(f"interior {k} outside the smallest order {orders[0]}")
    slices = [interior_blocks(htf_evaluate(model, s, h), k) for h in orders]
    changes = tuple(float(np.max(np.abs(b - a)))
                    for a, b in zip(slices, slices[1:]))
    return ConvergenceReport(orders, changes, k, tol)
