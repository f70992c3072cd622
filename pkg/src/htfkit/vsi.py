"""Droop-controlled voltage source inverter on an infinite bus.

Everything here is per-unit with time normalised by the base angular
frequency, so ``s`` is in pu and one fundamental period is ``2*pi/Omega0``.
The complex frame is ``x+ = xa + j xb``, ``x- = xa - j xb``.  The reference
angle is fixed by ``theta(0) = 0`` for the VSI voltage; the operating-point
current is ``i+ = I0 exp(j(Omega0 t + phi))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .hss import LtpStateSpace

M_RATED = 0.02


@dataclass(frozen=True)
class VsiParams:
    """Per-unit VSI parameters with SI base values.

    ``tau`` is the droop filter time constant in the per-unit time base: its
    value enters ``tau s^2 + s`` directly with ``s`` in pu.  Use
    `tau_from_seconds` to convert a physical time constant.
    """

    V0: float = 1.0
    Omega0: float = 1.0
    I0: float = 0.30
    phi_deg: float = 188.0
    L: float = 0.091
    R: float = 0.015
    m: float = M_RATED
    tau: float = 1 / (2 * math.pi * 2)
    S_base: float = 10e3
    V_base: float = 380.0
    F_base_hz: float = 50.0

    def __post_init__(self):
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise ValueError(f"{f.name} must be finite")
        if self.L <= 0 or self.R < 0 or self.tau <= 0 or self.V0 <= 0 or self.m < 0:
            raise ValueError("need L > 0, R >= 0, tau > 0, V0 > 0, m >= 0")
        if self.Omega0 <= 0:
            raise ValueError("Omega0 must be positive")
        if min(self.S_base, self.V_base, self.F_base_hz) <= 0:
            raise ValueError("inconsistent base values: bases must be positive")

    @classmethod
    def keys(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def with_m(self, m: float) -> VsiParams:
        return replace(self, m=m)

    @property
    def omega_base(self) -> float:
        return 2 * math.pi * self.F_base_hz

    @property
    def I_base(self) -> float:
        return self.S_base / self.V_base

    @property
    def Z_base(self) -> float:
        return self.V_base / self.I_base

    @property
    def tau_pu(self) -> float:
        return self.tau

    def tau_from_seconds(self, seconds: float) -> float:
        """Per-unit time constant equivalent to ``seconds`` of physical time."""
        return seconds * self.omega_base

    @property
    def phi(self) -> float:
        return math.radians(self.phi_deg)

    @property
    def omega_p(self) -> float:
        return self.Omega0

    @property
    def power(self) -> float:
        """Operating-point output power ``-V0 I0 cos(phi)``."""
        return -self.V0 * self.I0 * math.cos(self.phi)

    def s_pu(self, f_hz):
        """Laplace variable (pu) on the imaginary axis for frequency in Hz."""
        return 2j * np.pi * np.asarray(f_hz, dtype=float) / self.omega_base


@dataclass(frozen=True)
class ZtClosedForm:
    """Closed-form impedances of the VSI in the rotated complex frame.

    ``zt_2x2(s)`` maps ``(i+(s_1), i-(s_-1))`` to ``(v_b+(s_1), v_b-(s_-1))``.
    """

    params: VsiParams

    @property
    def omega_p(self) -> float:
        return self.params.omega_p

    def Z(self, s):
        p = self.params
        return s * p.L + p.R

    def M(self, s):
        p = self.params
        den = p.tau_pu * s**2 + s - p.m * p.V0 * p.I0 * math.sin(p.phi)
        return (p.m * p.V0**2 / 2) / den

    def z_l(self, s) -> np.ndarray:
        w = self.omega_p
        return np.array([[self.Z(s + 1j * w), 0], [0, self.Z(s - 1j * w)]],
                        dtype=complex)

    def z_d(self, s) -> np.ndarray:
        return self.M(s) * np.array([[1j, 1j], [-1j, -1j]])

    def zt_2x2(self, s) -> np.ndarray:
        return self.z_l(s) + self.z_d(s)

    def admittance(self, s) -> np.ndarray:
        return np.linalg.inv(self.zt_2x2(s))

    def det(self, s):
        """``det Z_T(s) = Z(s_1) Z(s_-1) + 2 w_p L M(s)``."""
        w = self.omega_p
        return (self.Z(s + 1j * w) * self.Z(s - 1j * w)
                + 2 * w * self.params.L * self.M(s))

    def characteristic_polynomial(self) -> np.ndarray:
        """Coefficients (highest power first) whose roots are the system modes."""
        p = self.params
        w = self.omega_p
        zz = np.polyadd(np.polymul([p.L, p.R], [p.L, p.R]), [(w * p.L) ** 2])
        den = [p.tau_pu, 1.0, -p.m * p.V0 * p.I0 * math.sin(p.phi)]
        return np.polyadd(np.polymul(zz, den), [w * p.L * p.m * p.V0**2])

    def symmetric_polynomial(self) -> np.ndarray:
        """Modes of the symmetric + loop alone, ``Z(s_1) + jM(s) = 0``."""
        p = self.params
        w = self.omega_p
        den = [p.tau_pu, 1.0, -p.m * p.V0 * p.I0 * math.sin(p.phi)]
        num = np.polymul([p.L, p.R + 1j * w * p.L], den)
        return np.polyadd(num, [1j * p.m * p.V0**2 / 2])


def z_closed_form(params: VsiParams) -> ZtClosedForm:
    return ZtClosedForm(params)


def build_vsi_hss(params: VsiParams) -> LtpStateSpace:
    """Small-signal LTP model in the stationary complex frame.

    States ``(i+, i-, w_r, theta)``, inputs ``(v_b+, v_b-)``, outputs
    ``(i+, i-)``.  The ``exp(+-j theta)`` modulation puts the coupling terms
    on harmonics ``+-1``.
    """
    p = params
    L, R, V0, tau = p.L, p.R, p.V0, p.tau_pu
    k_theta = p.m * V0 * p.I0 * math.sin(p.phi) / tau
    k_i = p.m * V0 / 2 / tau
    A0 = np.array([[-R / L, 0, 0, 0],
                   [0, -R / L, 0, 0],
                   [0, 0, -1 / tau, k_theta],
                   [0, 0, 1, 0]], dtype=complex)
    A1 = np.zeros((4, 4), dtype=complex)
    A1[0, 3] = -1j * V0 / L
    A1[2, 1] = k_i
    Am1 = np.zeros((4, 4), dtype=complex)
    Am1[1, 3] = 1j * V0 / L
    Am1[2, 0] = k_i
    B0 = np.zeros((4, 2))
    B0[0, 0] = B0[1, 1] = 1 / L
    C0 = np.eye(2, 4)
    return LtpStateSpace.from_coeffs(p.omega_p, {-1: Am1, 0: A0, 1: A1},
                                     {0: B0}, {0: C0})


class VsiNonlinear:
    """Large-signal VSI equations and their operating point."""

    def __init__(self, params: VsiParams):
        self.params = params

    def operating_point(self, t):
        """``(i+, i-, w_r, theta)`` on the periodic steady state."""
        p = self.params
        t = np.asarray(t, dtype=float)
        ip = p.I0 * np.exp(1j * (p.Omega0 * t + p.phi))
        return np.array([ip, np.conj(ip), np.full_like(t, p.Omega0),
                         p.Omega0 * t])

    def bus_voltage(self, t):
        """Infinite-bus ``(v_b+, v_b-)`` consistent with the operating point."""
        p = self.params
        ip, im, _, th = self.operating_point(t)
        vp = (p.R + 1j * p.Omega0 * p.L) * ip + p.V0 * np.exp(1j * th)
        return np.array([vp, np.conj(vp)])

    def rhs(self, x, vb) -> np.ndarray:
        """State derivative in the complex frame.

        ``x = (i+, i-, w_r, theta)``; each is treated as an independent
        (possibly complex) variable so the map is holomorphic.  The droop
        carries a power reference equal to the operating-point power so the
        equilibrium frequency is ``Omega0``.
        """
        p = self.params
        ip, im, w, th = x
        vp = p.V0 * np.exp(1j * th)
        vm = p.V0 * np.exp(-1j * th)
        power = -(vp * im + vm * ip) / 2
        return np.array([
            (-p.R * ip - vp + vb[0]) / p.L,
            (-p.R * im - vm + vb[1]) / p.L,
            ((p.Omega0 - w) - p.m * (power - p.power)) / p.tau_pu,
            w,
        ])

    def rhs_real(self, x: np.ndarray, vb_plus: np.ndarray, m=None) -> np.ndarray:
        """Real ``(ia, ib, w_r, theta)`` form; arrays may carry a batch axis.

        ``m`` overrides the droop gain (scalar or per-batch array).
        """
        p = self.params
        m = p.m if m is None else m
        ia, ib, w, th = x
        va = p.V0 * np.cos(th)
        vb = p.V0 * np.sin(th)
        power = -(va * ia + vb * ib)
        return np.array([
            (-p.R * ia - va + vb_plus.real) / p.L,
            (-p.R * ib - vb + vb_plus.imag) / p.L,
            ((p.Omega0 - w) - m * (power - p.power)) / p.tau_pu,
            w,
        ])

    def numeric_jacobian(self, t: float, step: float = 1e-6) -> np.ndarray:
        """Central-difference Jacobian of ``rhs`` at the operating point."""
        x0 = self.operating_point(t).astype(complex)
        vb = self.bus_voltage(t)
        J = np.zeros((4, 4), dtype=complex)
        for k in range(4):
            dx = np.zeros(4, dtype=complex)
            dx[k] = step
            J[:, k] = (self.rhs(x0 + dx, vb) - self.rhs(x0 - dx, vb)) / (2 * step)
        return J


def critical_droop_gain(params: VsiParams, bracket: tuple[float, float],
                        rtol: float = 1e-4, grid=None) -> float:
    """Droop gain at which the worst symmetric-loop phase margin crosses zero."""
    from .stability import decompose_loops, default_grid, phase_margin

    grid = default_grid(two_sided=True) if grid is None else grid

    def margin(m: float) -> float:
        zt = z_closed_form(params.with_m(m))
        rep = phase_margin(decompose_loops(zt).symmetric_plus, grid,
                           omega_base=params.omega_base)
        if rep.worst is None:
            raise ValueError(f"no gain crossover at m={m}")
        return rep.worst

    lo, hi = bracket
    f_lo, f_hi = margin(lo), margin(hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise ValueError(
            f"no sign change of the phase margin in [{lo}, {hi}] "
            f"({f_lo:.3f} deg, {f_hi:.3f} deg)")
    while (hi - lo) > rtol * abs(hi):
        mid = 0.5 * (lo + hi)
        f_mid = margin(mid)
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    return 0.5 * (lo + hi)

