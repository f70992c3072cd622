import numpy as np
import pytest

from htfkit.hss import LtpStateSpace
from htfkit.vsi import VsiParams


def cos_modulated(a: float = 1.0, c: float = 0.6, omega_p: float = 1.0) -> LtpStateSpace:
    """Scalar ``x' = (-a + c cos(w_p t)) x + u``, ``y = x``."""
    return LtpStateSpace.from_coeffs(
        omega_p, {0: [[-a]], 1: [[c / 2]], -1: [[c / 2]]}, {0: [[1.0]]}, {0: [[1.0]]},
        real_valued=True)


def cos_modulated_htf(n: int, omega: float, a: float = 1.0, c: float = 0.6,
                      terms: int = 40) -> complex:
    """``G_n(j(omega + n))`` of `cos_modulated` with ``w_p = 1``.

    The fundamental solution is ``exp(-a t + c sin t)``.  Expanding
    ``exp(+-c sin t)`` with the Jacobi-Anger identity at imaginary argument
    gives ``sum_l J_{n-l}(-jc) J_l(jc) / (a + j(omega + l))``.
    """
    from scipy.special import jv

    ls = np.arange(-terms, terms + 1)
    return complex(np.sum(jv(n - ls, -1j * c) * jv(ls, 1j * c) / (a + 1j * (omega + ls))))


@pytest.fixture
def params():
    return VsiParams()


@pytest.fixture
def scalar_model():
    return cos_modulated()
