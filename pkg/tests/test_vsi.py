import math

import numpy as np
import pytest

from htfkit.frames import stationary_pair
from htfkit.hss import htf_evaluate
from htfkit.vsi import (M_RATED, VsiNonlinear, VsiParams, build_vsi_hss,
                        critical_droop_gain, z_closed_form)


def test_defaults_and_bases(params):
    assert params.m == M_RATED
    assert params.I_base == pytest.approx(10e3 / 380)
    assert params.Z_base == pytest.approx(380**2 / 10e3)
    assert params.omega_base == pytest.approx(100 * math.pi)
    assert params.tau_from_seconds(0.01) == pytest.approx(math.pi)
    assert params.s_pu(50.0) == pytest.approx(1j)
    assert set(params.keys()) == {"V0", "Omega0", "I0", "phi_deg", "L", "R", "m",
                                  "tau", "S_base", "V_base", "F_base_hz"}


@pytest.mark.parametrize("bad", [dict(L=0), dict(tau=-1), dict(m=-0.1),
                                 dict(S_base=0), dict(V0=float("nan"))])
def test_invalid_params(bad):
    with pytest.raises(ValueError):
        VsiParams(**bad)


def test_base_error_message():
    with pytest.raises(ValueError, match="inconsistent base values"):
        VsiParams(F_base_hz=-50)


def test_operating_point_is_a_trajectory(params):
    sys = VsiNonlinear(params)
    for t in (0.0, 0.9, 4.1):
        h = 1e-5
        dx = (sys.operating_point(t + h) - sys.operating_point(t - h)) / (2 * h)
        np.testing.assert_allclose(sys.rhs(sys.operating_point(t), sys.bus_voltage(t)),
                                   dx, atol=1e-8)


def test_real_and_complex_forms_agree(params):
    sys = VsiNonlinear(params)
    rng = np.random.default_rng(3)
    ia, ib, w, th = rng.normal(size=4)
    vb = complex(*rng.normal(size=2))
    fc = sys.rhs(np.array([ia + 1j * ib, ia - 1j * ib, w, th]), [vb, np.conj(vb)])
    fr = sys.rhs_real(np.array([ia, ib, w, th]), np.array(vb))
    np.testing.assert_allclose([fc[0].real, fc[0].imag, fc[2].real, fc[3].real], fr,
                               atol=1e-14)


@pytest.mark.parametrize("t", [0.0, 0.5, 2.0, 5.3])
def test_linearization_matches_finite_differences(params, t):
    """A(t) of the HSS model equals the numerical Jacobian of the large-signal model."""
    J = VsiNonlinear(params).numeric_jacobian(t)
    np.testing.assert_allclose(build_vsi_hss(params).A(t), J, atol=1e-6)


def test_input_matrix(params):
    model = build_vsi_hss(params)
    np.testing.assert_allclose(model.B(0.3)[:2], np.eye(2) / params.L)
    assert model.bandwidth == 1 and not model.is_lti


@pytest.mark.parametrize("s", [0.05j, 0.3 + 0.7j, 1.7j, -2.2j])
def test_hss_matches_closed_form(params, s):
    G = htf_evaluate(build_vsi_hss(params), s, 4)
    Y = z_closed_form(params).admittance(s)
    np.testing.assert_allclose(stationary_pair(G), Y, rtol=1e-10)


def test_determinant_formula(params):
    zt = z_closed_form(params)
    for s in (0.2j, 0.4 + 1.1j):
        assert zt.det(s) == pytest.approx(np.linalg.det(zt.zt_2x2(s)), rel=1e-12)


def test_characteristic_polynomial_roots_zero_det(params):
    zt = z_closed_form(params)
    den = np.poly1d([params.tau, 1, -params.m * params.V0 * params.I0 * math.sin(params.phi)])
    for r in np.roots(zt.characteristic_polynomial()):
        assert abs(zt.det(r) * den(r)) < 1e-9


def test_rated_modes(params):
    modes = np.sort_complex(np.roots(z_closed_form(params).characteristic_polynomial()))
    assert np.all(modes.real < 0)
    assert modes[0] == pytest.approx(-12.564, abs=1e-3)
    assert np.max(modes.imag) == pytest.approx(0.9914, abs=1e-4)


def test_droop_free_model_is_decoupled():
    zt = z_closed_form(VsiParams(m=0))
    Y = zt.admittance(0.3j)
    assert Y[0, 1] == 0 and Y[1, 0] == 0
    assert Y[0, 0] == pytest.approx(1 / zt.Z(1.3j))


def test_symmetric_polynomial(params):
    zt = z_closed_form(params)
    for r in np.roots(zt.symmetric_polynomial()):
        assert abs(zt.Z(r + 1j) + 1j * zt.M(r)) < 1e-9


def test_critical_gain(params):
    mc = critical_droop_gain(params, (M_RATED, 3 * M_RATED))
    assert 1.4 < mc / M_RATED < 1.5
    with pytest.raises(ValueError, match="no sign change"):
        critical_droop_gain(params, (0.5 * M_RATED, M_RATED))
