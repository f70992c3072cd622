"""Fixed-step time-domain oracle for LTP models and the nonlinear VSI.

Every run is deterministic: classic fourth-order Runge-Kutta with a fixed
step, tone projections over windows holding an integer number of periods.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import ToneSet
from .hss import LtpStateSpace
from .vsi import VsiNonlinear, VsiParams, z_closed_form

DIVERGENCE_FACTOR = 1e6


class NonCommensurateError(ValueError):
    """Measurement window does not hold an integer number of periods."""


@dataclass(frozen=True)
class SimConfig:
    dt: float
    duration: float
    settle_time: float = 0.0
    method: str = "rk4"
    instability_threshold: float = 1.5

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0 <= self.settle_time < self.duration:
            raise ValueError("need 0 <= settle_time < duration")
        if self.method != "rk4":
            raise ValueError("only the fixed-step 'rk4' method is available")

    @classmethod
    def for_period(cls, period: float, periods: float, settle_periods: float = 0,
                   steps_per_period: int = 2000, **kw) -> SimConfig:
        """Config measured in fundamental periods, ``dt = period/steps``."""
        return cls(period / steps_per_period, periods * period,
                   settle_periods * period, **kw)

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def settle_steps(self) -> int:
        return int(round(self.settle_time / self.dt))

    @property
    def window(self) -> float:
        return self.duration - self.settle_time

    def check_resolution(self, max_freq: float, min_steps: int = 50):
        """Raise unless ``max_freq`` (rad/s) gets ``min_steps`` steps per period."""
        if max_freq > 0 and 2 * math.pi / max_freq < min_steps * self.dt:
            raise ValueError(
                f"dt={self.dt:g} resolves {max_freq:g} rad/s with fewer than "
                f"{min_steps} steps per period")


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray | None
    diverged: np.ndarray | bool

    @property
    def any_diverged(self) -> bool:
        return bool(np.any(self.diverged))


def rk4(f: Callable, x0: np.ndarray, dt: float, n_steps: int, t0: float = 0.0,
        record_every: int = 1, record_from: int = 0, limit: float | None = None):
    """Integrate ``x' = f(k, t, x)`` with classic RK4.

    ``k`` is the step index so ``f`` can reuse tabulated periodic data.  The
    state may carry trailing batch axes; divergence is tracked per batch
    column (axis 0 is the state axis).  Returns ``(t, X, diverged)``.
    """
    x = np.array(x0)
    batch = x.shape[1:]
    diverged = np.zeros(batch, dtype=bool)
    n_rec = max(0, (n_steps - record_from) // record_every + 1)
    t_rec = np.empty(n_rec)
    X = np.empty((n_rec,) + x.shape, dtype=x.dtype)
    j = 0
    h2 = dt / 2
    for k in range(n_steps + 1):
        t = t0 + k * dt
        if k >= record_from and (k - record_from) % record_every == 0 and j < n_rec:
            t_rec[j] = t
            X[j] = x
            j += 1
        if k == n_steps:
            break
        k1 = f(2 * k, t, x)
        k2 = f(2 * k + 1, t + h2, x + h2 * k1)
        k3 = f(2 * k + 1, t + h2, x + h2 * k2)
        k4 = f(2 * k + 2, t + dt, x + dt * k3)
        x_new = x + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if limit is not None:
            norm = np.sqrt(np.sum(np.abs(x_new) ** 2, axis=0))
            bad = ~np.isfinite(norm) | (norm > limit)
            if np.any(bad & ~diverged):
                diverged = diverged | bad
                if np.all(diverged):
                    X[j:] = np.where(np.isfinite(x), x, np.nan)
                    t_rec[j:] = t0 + (record_from + np.arange(j, n_rec)
                                      * record_every) * dt
                    return t_rec, X, diverged
            x_new = np.where(diverged, x, x_new)
        x = x_new
    return t_rec, X, diverged


def _tabulate(series, period, dt, n_steps):
    """Coefficient matrix values at half-step times when ``dt`` divides the period."""
    ratio = period / dt
    if abs(ratio - round(ratio)) > 1e-9 * ratio:
        return None
    n_half = 2 * int(round(ratio))
    tt = np.arange(n_half) * dt / 2
    return np.array([series(t) for t in tt])


def integrate_ltp(model: LtpStateSpace, inputs: ToneSet | None, cfg: SimConfig,
                  x0=None, record_every: int = 1) -> Trajectory:
    """Integrate ``x' = A(t)x + B(t)u(t)`` from ``x0`` (default zero)."""
    nx, nu = model.state_dim, model.input_dim
    x0 = np.zeros(nx, dtype=complex) if x0 is None else np.asarray(x0, complex)
    if inputs is not None and len(inputs):
        top = np.max(np.abs(inputs.frequencies)) + model.bandwidth * model.omega_p
        cfg.check_resolution(top)
    period = 2 * math.pi / model.omega_p
    A_tab = _tabulate(model.A, period, cfg.dt, cfg.n_steps)
    B_tab = _tabulate(model.B, period, cfg.dt, cfg.n_steps)

    def u(t):
        if inputs is None or not len(inputs):
            return np.zeros(nu, dtype=complex)
        return np.broadcast_to(inputs(t), (nu,))

    def rhs(k, t, x):
        if A_tab is not None:
            A = A_tab[k % len(A_tab)]
            B = B_tab[k % len(B_tab)]
        else:
            A, B = model.A(t), model.B(t)
        return A @ x + B @ u(t)

    scale = max(float(np.linalg.norm(x0)),
                max((float(np.linalg.norm(a)) for a in
                     (inputs.tones.values() if inputs else [])), default=0.0),
                1e-300)
    t, X, div = rk4(rhs, x0, cfg.dt, cfg.n_steps, record_every=record_every,
                    limit=DIVERGENCE_FACTOR * max(scale, 1.0))
    Y = np.array([model.C(tk) @ xk + model.D(tk) @ u(tk) for tk, xk in zip(t, X)])
    return Trajectory(t, X, Y, bool(div))


def project(t: np.ndarray, signal: np.ndarray, omega: float) -> np.ndarray:
    """Complex amplitude of ``exp(j omega t)`` in ``signal`` (rectangular rule).

    ``t`` must be uniform and span an integer number of periods with the end
    point excluded.
    """
    ph = np.exp(-1j * omega * t)
    return np.tensordot(ph, signal, axes=(0, 0)) / len(t)


def _check_window(freqs: Iterable[float], window: float, tol: float = 1e-6):
    for w in freqs:
        cycles = w * window / (2 * math.pi)
        if abs(cycles - round(cycles)) > tol:
            raise NonCommensurateError(
                f"{w:g} rad/s completes {cycles:.6f} cycles in the {window:g} s "
                f"window; snap it with snap_frequency()")


def snap_frequency(omega: float, window: float) -> float:
    """Nearest frequency with an integer number of cycles in ``window``."""
    df = 2 * math.pi / window
    return round(omega / df) * df


def tone_response(model: LtpStateSpace, omega_u: float, harmonics: Sequence[int],
                  cfg: SimConfig, amplitude=None) -> dict[int, np.ndarray]:
    """Measured output amplitude at ``omega_u + n w_p`` for each ``n``.

    The input is ``U exp(j omega_u t)`` (``U`` defaults to the first input
    channel); the post-settle window is projected onto each frequency.
    """
    U = np.zeros(model.input_dim, dtype=complex)
    if amplitude is None:
        U[0] = 1.0
    else:
        U[:] = amplitude
    freqs = {n: omega_u + n * model.omega_p for n in harmonics}
    steps = cfg.window / cfg.dt
    if abs(steps - round(steps)) > 1e-6 * steps:
        raise NonCommensurateError("window is not an integer number of steps")
    _check_window(freqs.values(), cfg.window)
    traj = integrate_ltp(model, ToneSet.single(omega_u, U), cfg)
    k0 = cfg.settle_steps
    t, y = traj.t[k0:-1], traj.y[k0:-1]
    return {n: project(t, y, w) for n, w in freqs.items()}


def simulate_vsi(params: VsiParams, cfg: SimConfig, m=None, injections=None,
                 theta_kick=0.0, record_every: int = 1) -> Trajectory:
    """Integrate the nonlinear VSI in real ``(ia, ib, w_r, theta)`` coordinates.

    Starts on the operating point (plus an optional angle kick).  ``m`` and
    ``theta_kick`` may be arrays to run a batch; ``injections`` is a list
    (one per batch column) of ``(omega, amplitude)`` pairs added to the
    bus voltage ``v_b+``.  ``x`` is returned as deviations from the nominal
    trajectory.
    """
    sys = VsiNonlinear(params)
    m = np.atleast_1d(params.m if m is None else np.asarray(m, float))
    kick = np.atleast_1d(np.asarray(theta_kick, float))
    n_inj = len(injections) if injections is not None else 1
    batch = max(len(m), len(kick), n_inj)
    m = np.broadcast_to(m, (batch,))
    kick = np.broadcast_to(kick, (batch,))
    inj = injections if injections is not None else [()] * batch
    if len(inj) != batch:
        raise ValueError("injections must have one entry per batch column")

    top = max([abs(w) for tones in inj for w, _ in tones] + [params.Omega0])
    cfg.check_resolution(top)
    w_inj = np.zeros((batch, max((len(x) for x in inj), default=0) or 1))
    a_inj = np.zeros_like(w_inj, dtype=complex)
    for b, tones in enumerate(inj):
        for i, (w, a) in enumerate(tones):
            w_inj[b, i], a_inj[b, i] = w, a

    period = 2 * math.pi / params.Omega0
    ratio = period / cfg.dt
    tabulate = abs(ratio - round(ratio)) < 1e-9 * ratio
    if tabulate:
        tt = np.arange(2 * int(round(ratio))) * cfg.dt / 2
        vb_tab = sys.bus_voltage(tt)[0]

    def vbus(k, t):
        base = vb_tab[k % len(vb_tab)] if tabulate else sys.bus_voltage(t)[0]
        return base + np.sum(a_inj * np.exp(1j * w_inj * t), axis=1)

    def rhs(k, t, x):
        return sys.rhs_real(x, vbus(k, t), m)

    ip0, _, w0, th0 = sys.operating_point(0.0)
    x0 = np.empty((4, batch))
    x0[0], x0[1] = ip0.real, ip0.imag
    x0[2], x0[3] = w0.real, th0.real + kick
    t, X, div = rk4(rhs, x0, cfg.dt, cfg.n_steps, record_every=record_every,
                    limit=DIVERGENCE_FACTOR * max(1.0, float(np.max(np.abs(x0)))))
    ip, _, w, th = sys.operating_point(t)
    dev = X.copy()
    dev[:, 0] -= ip.real[:, None]
    dev[:, 1] -= ip.imag[:, None]
    dev[:, 2] -= w.real[:, None]
    dev[:, 3] -= th.real[:, None]
    return Trajectory(t, dev, None, div)


@dataclass(frozen=True)
class AdmittanceSweep:
    """Measured 2x2 admittance ``Z_T^-1`` at sweep frequencies.

    ``f_hz`` is the frequency of the ``+`` channel input, i.e. ``s_1``; the
    matrix at index ``k`` is ``Z_T^-1(s)`` with ``s = j2 pi f/w_b - j w_p``.
    """

    f_hz: np.ndarray
    measured: np.ndarray
    model: np.ndarray
    valid: np.ndarray

    def entry(self, i: int, j: int, source: str = "simulation") -> np.ndarray:
        data = self.measured if source == "simulation" else self.model
        return data[:, i - 1, j - 1]


def sweep_frequencies(grid_hz, params: VsiParams, window_periods: int) -> np.ndarray:
    """Snap a Hz grid to the window resolution, dropping the fundamental."""
    df = params.F_base_hz * params.Omega0 / window_periods
    f = np.unique(np.round(np.asarray(grid_hz, float) / df) * df)
    f0 = params.F_base_hz * params.Omega0
    return f[(f != 0) & ~np.isclose(f, f0)]


def sweep_admittance(params: VsiParams, grid_hz, cfg: SimConfig | None = None,
                     amplitude: float = 1e-3, window_periods: int = 100,
                     settle_periods: int = 40,
                     steps_per_period: int = 2000) -> AdmittanceSweep:
    """Measure ``Z_T^-1`` by voltage-tone injection into the nonlinear model.

    Each frequency needs two runs: a ``+`` tone at ``w`` gives column 1 and a
    tone at ``2 w_p - w`` (whose mirror sits on the ``-`` channel at
    ``w - 2 w_p``) gives column 2.
    """
    w_p = params.Omega0
    period = 2 * math.pi / w_p
    f = sweep_frequencies(grid_hz, params, window_periods)
    if not len(f):
        raise ValueError("empty sweep grid")
    if cfg is None:
        cfg = SimConfig.for_period(period, settle_periods + window_periods,
                                   settle_periods, steps_per_period)
    omega = 2 * math.pi * f / params.omega_base
    inj = [((w, amplitude),) for w in omega] + \
          [((2 * w_p - w, amplitude),) for w in omega]
    _check_window(list(omega) + [2 * w_p - w for w in omega] +
                  [w - 2 * w_p for w in omega], cfg.window)
    decim = max(1, int(round(period / cfg.dt)) // 200)
    traj = simulate_vsi(params, cfg, injections=inj,
                        record_every=decim)
    k0 = int(round(cfg.settle_time / (cfg.dt * decim)))
    t = traj.t[k0:-1]
    ip = traj.x[k0:-1, 0] + 1j * traj.x[k0:-1, 1]
    n = len(f)
    meas = np.empty((n, 2, 2), dtype=complex)
    for k, w in enumerate(omega):
        col1, col2 = ip[:, k], ip[:, n + k]
        meas[k, 0, 0] = project(t, col1, w) / amplitude
        meas[k, 1, 0] = np.conj(project(t, col1, 2 * w_p - w)) / amplitude
        meas[k, 0, 1] = project(t, col2, w) / amplitude
        meas[k, 1, 1] = np.conj(project(t, col2, 2 * w_p - w)) / amplitude
    div = np.asarray(traj.diverged)
    valid = ~(div[:n] | div[n:])
    meas[~valid] = np.nan
    zt = z_closed_form(params)
    model = np.array([zt.admittance(1j * (w - w_p)) for w in omega])
    return AdmittanceSweep(f, meas, model, valid)


@dataclass(frozen=True)
class Verdict:
    m: float
    stable: bool
    growth_factor: float
    oscillation_hz: float | None
    diverged: bool

    @property
    def label(self) -> str:
        return "stable" if self.stable else "unstable"


def stability_verdicts(params: VsiParams, ms: Sequence[float],
                       cfg: SimConfig | None = None,
                       kick: float = 1e-3) -> list[Verdict]:
    """Time-domain stability for several droop gains in one batched run.

    An angle step ``kick`` (rad) excites the system.  The envelope of the
    deviation from the operating point over the last ten periods is compared
    with the first post-settle period and expressed as a growth factor per
    ten periods.
    """
    period = 2 * math.pi / params.Omega0
    if cfg is None:
        cfg = SimConfig.for_period(period, 60, 1)
    if cfg.duration < 50 * period - 1e-9:
        raise ValueError("stability verdicts need at least 50 fundamental periods")
    ms = [float(m) for m in ms]
    decim = max(1, int(round(period / cfg.dt)) // 100)
    traj = simulate_vsi(params, cfg, m=ms, theta_kick=kick, record_every=decim)
    k0 = int(round(cfg.settle_time / (cfg.dt * decim)))
    t, dev = traj.t[k0:], traj.x[k0:]
    env = np.hypot(dev[:, 0], dev[:, 1]) + np.abs(dev[:, 2])
    per = int(round(period / (cfg.dt * decim)))
    win = 10 * per
    span = (len(env) - win / 2 - per / 2) / per
    div = np.broadcast_to(traj.diverged, (len(ms),))
    out = []
    for b, m in enumerate(ms):
        e = env[:, b]
        ref = np.nanmax(e[:per])
        if div[b]:
            factor = math.inf
        elif ref <= 1e-14:
            factor = 1.0
        else:
            factor = (np.nanmax(e[-win:]) / ref) ** (10.0 / span)
        stable = bool(factor <= cfg.instability_threshold)
        hz = None
        if not stable:
            # linear growth phase only, before the envelope saturates
            grown = np.flatnonzero(e > 1e3 * ref)
            stop = grown[0] if len(grown) and grown[0] > 4 * per else len(e)
            ip = dev[:stop, 0, b] + 1j * dev[:stop, 1, b]
            hz = _dominant_hz(ip, t[:stop], params)
        out.append(Verdict(m, stable, float(factor), hz, bool(div[b])))
    return out


def stability_verdict(params: VsiParams, m: float, cfg: SimConfig | None = None,
                      kick: float = 1e-3) -> Verdict:
    return stability_verdicts(params, [m], cfg, kick)[0]


def _dominant_hz(signal, t, params: VsiParams) -> float | None:
    """Signed frequency (Hz) of the largest spectral peak of a complex signal."""
    ok = np.isfinite(signal)
    x, tt = signal[ok], t[ok]
    if len(x) < 8:
        return None
    x = (x - x.mean()) * np.hanning(len(x))
    n = 8 * len(x)
    spec = np.abs(np.fft.fft(x, n))
    freqs = np.fft.fftfreq(n, tt[1] - tt[0])
    k = int(np.argmax(spec))
    return float(freqs[k] * params.omega_base / (2 * math.pi))
