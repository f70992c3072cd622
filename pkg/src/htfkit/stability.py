"""Loop-gain stability tools: Bode data, phase margins, small gain, passivity.

Evaluators are scalar functions of the Laplace variable.  Frequency grids are
in Hz and map to ``s = j 2 pi f / omega_base``; pass the base angular
frequency for per-unit evaluators.  Grids may contain negative frequencies,
which matters for complex-coefficient loops whose response is not
conjugate-symmetric.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hss import PoleHitError

Evaluator = Callable[[complex], complex]

DEFAULT_BAND = (1e-1, 1e3)
DEFAULT_POINTS = 400


def default_grid(band=DEFAULT_BAND, points: int = DEFAULT_POINTS,
                 two_sided: bool = False) -> np.ndarray:
    """Log-spaced grid in Hz, optionally mirrored onto negative frequencies."""
    lo, hi = band
    if not 0 < lo < hi:
        raise ValueError("band must satisfy 0 < lo < hi")
    pos = np.logspace(math.log10(lo), math.log10(hi), points)
    return np.concatenate([-pos[::-1], pos]) if two_sided else pos


def _s(f, omega_base):
    return 2j * math.pi * f / omega_base


def _safe(evaluator: Evaluator, s: complex) -> complex:
    try:
        val = complex(evaluator(s))
    except (ZeroDivisionError, PoleHitError, np.linalg.LinAlgError):
        return complex(np.nan, np.nan)
    return val if np.isfinite(val) else complex(np.nan, np.nan)


def _wrap(deg):
    return (np.asarray(deg) + 180.0) % 360.0 - 180.0


@dataclass(frozen=True)
class LoopDecomposition:
    """Symmetric and asymmetric loops of ``(1 + Z_D Z_L^-1)^-1``.

    With ``a = jM/Z(s_1)`` and ``d = -jM/Z(s_-1)`` the symmetric loops close
    into ``G_S+ = 1/(Z(s_1) + jM)`` and ``G_S- = 1/(Z(s_-1) - jM)``; the
    asymmetric loop gain is ``G_S+ G_S- M^2``.
    """

    zt: object
    omega_base: float = 1.0

    def symmetric_plus(self, s):
        return 1j * self.zt.M(s) / self.zt.Z(s + 1j * self.zt.omega_p)

    def symmetric_minus(self, s):
        return -1j * self.zt.M(s) / self.zt.Z(s - 1j * self.zt.omega_p)

    def g_s_plus(self, s):
        return 1 / (self.zt.Z(s + 1j * self.zt.omega_p) + 1j * self.zt.M(s))

    def g_s_minus(self, s):
        return 1 / (self.zt.Z(s - 1j * self.zt.omega_p) - 1j * self.zt.M(s))

    def asymmetric(self, s):
        return self.g_s_plus(s) * self.g_s_minus(s) * self.zt.M(s) ** 2

    def closed_loop(self, s) -> np.ndarray:
        """``(1 + Z_D Z_L^-1)^-1`` assembled from the nested loops."""
        w = self.zt.omega_p
        sp = 1 / (1 + self.symmetric_plus(s))
        sm = 1 / (1 + self.symmetric_minus(s))
        m = self.zt.M(s)
        b = 1j * m / self.zt.Z(s - 1j * w)
        c = -1j * m / self.zt.Z(s + 1j * w)
        outer = 1 / (1 - self.asymmetric(s))
        return outer * np.array([[sp, -b * sp * sm], [-c * sp * sm, sm]])

    def closed_loop_direct(self, s) -> np.ndarray:
        K = self.zt.z_d(s) @ np.linalg.inv(self.zt.z_l(s))
        return np.linalg.inv(np.eye(2) + K)


def decompose_loops(zt) -> LoopDecomposition:
    omega_base = getattr(getattr(zt, "params", None), "omega_base", 1.0)
    return LoopDecomposition(zt, omega_base)


@dataclass(frozen=True)
class BodeDataset:
    frequencies: np.ndarray
    gain_db: np.ndarray
    phase_deg: np.ndarray
    label: str = ""
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.frequencies)
        if len(self.gain_db) != n or len(self.phase_deg) != n:
            raise ValueError("Bode arrays must have equal lengths")
        if n > 1 and np.any(np.diff(self.frequencies) <= 0):
            raise ValueError("frequencies must be strictly ascending")
        if self.valid is None:
            object.__setattr__(self, "valid", np.isfinite(self.gain_db))


def _unwrap(phase_deg: np.ndarray) -> np.ndarray:
    out = np.array(phase_deg, dtype=float)
    ok = np.isfinite(out)
    out[ok] = np.unwrap(out[ok], period=360.0)
    return out


def bode(evaluator: Evaluator, grid, label: str = "",
         omega_base: float = 1.0) -> BodeDataset:
    """Gain (dB) and unwrapped phase (deg); pole hits become NaN gaps."""
    f = np.asarray(grid, dtype=float)
    vals = np.array([_safe(evaluator, _s(x, omega_base)) for x in f])
    with np.errstate(divide="ignore"):
        gain = 20 * np.log10(np.abs(vals))
    phase = _unwrap(np.degrees(np.angle(vals)))
    return BodeDataset(f, gain, phase, label)


def _branches(f: np.ndarray):
    """Index arrays running outward from zero on each side of the grid."""
    pos = np.flatnonzero(f >= 0)
    neg = np.flatnonzero(f < 0)[::-1]
    return [(idx, 1.0) for idx in (pos, neg) if len(idx)]


def _bisect(fun, a: float, b: float, rtol: float = 1e-6, max_iter: int = 200):
    """Root of ``fun`` between ``a`` and ``b`` (sign change assumed)."""
    fa = fun(a)
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        if abs(b - a) <= rtol * max(abs(mid), 1e-300):
            break
        fm = fun(mid)
        if np.sign(fm) == np.sign(fa):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


@dataclass(frozen=True)
class MarginReport:
    margins_deg: tuple[float, ...]
    crossovers_hz: tuple[float, ...]

    @property
    def worst(self) -> float | None:
        return min(self.margins_deg) if self.margins_deg else None

    @property
    def worst_crossover_hz(self) -> float | None:
        if not self.margins_deg:
            return None
        return self.crossovers_hz[int(np.argmin(self.margins_deg))]

    @property
    def has_crossover(self) -> bool:
        return bool(self.margins_deg)


def phase_margin(evaluator: Evaluator, grid, omega_base: float = 1.0,
                 rtol: float = 1e-6) -> MarginReport:
    """Phase margin at every unity-gain crossing of ``evaluator``.

    On the positive-frequency branch the margin is ``180 + phase``; on the
    negative branch, where a real system would show the mirrored phase, it is
    ``180 - phase``.  Phase is unwrapped outward from the grid point nearest
    to zero frequency on each branch.
    """
    f = np.asarray(grid, dtype=float)
    vals = np.array([_safe(evaluator, _s(x, omega_base)) for x in f])
    margins, crossings = [], []
    for idx, _ in _branches(f):
        ff, vv = f[idx], vals[idx]
        sign = 1.0 if ff[-1] >= 0 else -1.0
        phase = _unwrap(np.degrees(np.angle(vv)))
        with np.errstate(divide="ignore"):
            lg = np.log(np.abs(vv))
        for k in range(len(ff) - 1):
            if not (np.isfinite(lg[k]) and np.isfinite(lg[k + 1])):
                continue
            if lg[k] == 0 or np.sign(lg[k]) != np.sign(lg[k + 1]):
                fa, fb = ff[k], ff[k + 1]
                if lg[k] == 0:
                    fc = fa
                else:
                    fc = _bisect(lambda x: math.log(abs(_safe(
                        evaluator, _s(x, omega_base)))), fa, fb, rtol)
                raw = math.degrees(np.angle(_safe(evaluator, _s(fc, omega_base))))
                ph = phase[k] + _wrap(raw - phase[k])
                margins.append(float(180.0 + sign * ph))
                crossings.append(float(fc))
    order = np.argsort(crossings)
    return MarginReport(tuple(margins[i] for i in order),
                        tuple(crossings[i] for i in order))


def _golden_max(fun, a: float, b: float, rtol: float = 1e-9):
    g = (math.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = fun(c), fun(d)
    while abs(b - a) > rtol * max(abs(a), abs(b), 1e-12):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = fun(d)
    x = 0.5 * (a + b)
    return x, fun(x)


@dataclass(frozen=True)
class SmallGainReport:
    passed: bool
    peak: float
    peak_hz: float

    def __bool__(self):
        return self.passed


def small_gain_check(evaluator: Evaluator, grid=None,
                     omega_base: float = 1.0) -> SmallGainReport:
    """Grid supremum of ``|G|`` refined around the discrete peak.

    A numerical certificate only: the supremum is taken over the grid band.
    """
    f = default_grid(two_sided=True) if grid is None else np.asarray(grid, float)

    def mag(x):
        v = abs(_safe(evaluator, _s(x, omega_base)))
        return v if np.isfinite(v) else -np.inf

    g = np.array([mag(x) for x in f])
    k = int(np.argmax(g))
    fk, peak = f[k], g[k]
    if len(f) > 1:
        lo, hi = f[max(k - 1, 0)], f[min(k + 1, len(f) - 1)]
        # stay on the branch of the peak; the grid may skip over zero
        if lo < 0 < fk:
            lo = fk
        elif fk < 0 < hi:
            hi = fk
        if hi > lo:
            x, v = _golden_max(mag, lo, hi)
            if v > peak:
                fk, peak = x, v
    return SmallGainReport(bool(peak < 1.0), float(peak), float(fk))


@dataclass(frozen=True)
class PassivityReport:
    passive: bool
    negative_ranges_hz: tuple[tuple[float, float], ...]
    min_real: float

    def __bool__(self):
        return self.passive


def passivity_check(evaluator: Evaluator, grid=None, omega_base: float = 1.0,
                    atol: float = 0.0) -> PassivityReport:
    """``Re G(j w) >= 0`` over the grid; negative intervals have refined edges."""
    f = default_grid(two_sided=True) if grid is None else np.asarray(grid, float)

    def re(x):
        return _safe(evaluator, _s(x, omega_base)).real

    r = np.array([re(x) for x in f])
    neg = r < -atol
    ranges = []
    k = 0
    while k < len(f):
        if not neg[k]:
            k += 1
            continue
        j = k
        while j + 1 < len(f) and neg[j + 1]:
            j += 1
        lo = f[k] if k == 0 or f[k - 1] < 0 < f[k] else _bisect(re, f[k - 1], f[k])
        hi = f[j] if j == len(f) - 1 or f[j] < 0 < f[j + 1] \
            else _bisect(re, f[j], f[j + 1])
        ranges.append((float(lo), float(hi)))
        k = j + 1
    finite = r[np.isfinite(r)]
    return PassivityReport(not ranges, tuple(ranges),
                           float(finite.min()) if len(finite) else float("nan"))


def sweep_margins(make_evaluator: Callable[[float], Evaluator],
                  values: Sequence[float], grid, omega_base: float = 1.0):
    """Worst phase margin for each parameter value."""
    return [phase_margin(make_evaluator(v), grid, omega_base).worst
            for v in values]
