import math

import numpy as np
import pytest

from htfkit.stability import (BodeDataset, bode, decompose_loops, default_grid,
                              passivity_check, phase_margin, small_gain_check,
                              sweep_margins)
from htfkit.vsi import M_RATED, VsiParams, z_closed_form

TWO_PI = 2 * math.pi


def test_grid():
    g = default_grid((1, 100), 3)
    np.testing.assert_allclose(g, [1, 10, 100])
    assert list(default_grid((1, 100), 3, two_sided=True)) == [-100, -10, -1, 1, 10, 100]
    with pytest.raises(ValueError):
        default_grid((0, 1))


@pytest.mark.parametrize("K", [0.5, 2.0, 10.0])
def test_phase_margin_textbook(K):
    """Loop ``K/(s(s+1))`` crosses over where ``w^4 + w^2 = K^2``; margin ``90 - atan(w)``."""
    loop = lambda s: K / (s * (s + 1))
    wc = math.sqrt((-1 + math.sqrt(1 + 4 * K**2)) / 2)
    rep = phase_margin(loop, default_grid((1e-3, 1e2), 300, two_sided=True), TWO_PI)
    assert rep.margins_deg == pytest.approx([90 - math.degrees(math.atan(wc))] * 2, abs=1e-4)
    assert rep.crossovers_hz == pytest.approx([-wc, wc], rel=1e-5)


def test_no_crossover():
    rep = phase_margin(lambda s: 0.1 / (s + 1), default_grid(), TWO_PI)
    assert not rep.has_crossover and rep.worst is None and rep.worst_crossover_hz is None


def test_vsi_symmetric_margins(params):
    grid = default_grid(two_sided=True)
    wb = params.omega_base
    rated = phase_margin(decompose_loops(z_closed_form(params)).symmetric_plus, grid, wb)
    assert rated.worst == pytest.approx(79.18, abs=0.01)
    assert rated.worst_crossover_hz == pytest.approx(-6.158, abs=1e-3)
    high = phase_margin(decompose_loops(z_closed_form(params.with_m(10 * M_RATED))).symmetric_plus,
                        grid, wb)
    assert high.worst == pytest.approx(-82.78, abs=0.01)


def test_margin_sign_matches_modes():
    """Sign of the symmetric margin agrees with the roots of Z(s_1) + jM(s)."""
    grid = default_grid(two_sided=True)
    p = VsiParams()
    ms = [0.5, 1, 1.4, 1.5, 2, 5, 10]
    margins = sweep_margins(lambda m: decompose_loops(z_closed_form(p.with_m(m * M_RATED))).symmetric_plus,
                            ms, grid, p.omega_base)
    for m, pm in zip(ms, margins):
        roots = np.roots(z_closed_form(p.with_m(m * M_RATED)).symmetric_polynomial())
        assert (pm > 0) == bool(np.all(roots.real < 0)), m


def test_loop_assembly(params):
    loops = decompose_loops(z_closed_form(params))
    for s in (0.05j, 0.3 + 0.2j, -1.7j):
        np.testing.assert_allclose(loops.closed_loop(s), loops.closed_loop_direct(s), rtol=1e-12)
    zt = z_closed_form(params)
    s = 0.4j
    a = 1j * zt.M(s) / zt.Z(s + 1j)
    d = -1j * zt.M(s) / zt.Z(s - 1j)
    b = 1j * zt.M(s) / zt.Z(s - 1j)
    c = -1j * zt.M(s) / zt.Z(s + 1j)
    assert loops.asymmetric(s) == pytest.approx(b * c / ((1 + a) * (1 + d)))


@pytest.mark.parametrize("m", [1, 5, 10])
def test_vsi_small_gain(params, m):
    rep = small_gain_check(decompose_loops(z_closed_form(params.with_m(m * M_RATED))).asymmetric,
                           omega_base=params.omega_base)
    assert rep.passed and rep.peak < 1
    assert 0.1 <= abs(rep.peak_hz) <= 1e3


def test_small_gain_refines_peak():
    loop = lambda s: 0.8 / (s**2 + 0.1 * s + 1)
    rep = small_gain_check(loop, default_grid((0.01, 10), 50), TWO_PI)
    exact = 0.8 / (0.1 * math.sqrt(1 - 0.1**2 / 4))
    assert rep.peak == pytest.approx(exact, rel=1e-6)
    assert not rep


def test_passivity(params):
    zt = z_closed_form(params)
    wb = params.omega_base
    assert passivity_check(zt.Z, omega_base=wb)
    rep = passivity_check(lambda s: 1j * zt.M(s), omega_base=wb)
    assert not rep and rep.negative_ranges_hz and rep.min_real < 0


def test_passivity_edges():
    """``Re(1 + s^2) = 1 - w^2`` turns negative beyond ``|w| = 1``."""
    rep = passivity_check(lambda s: 1 + s * s, default_grid((0.01, 10), 100, True), TWO_PI)
    np.testing.assert_allclose(rep.negative_ranges_hz, [(-10, -1), (1, 10)], rtol=1e-6)
    assert rep.min_real == pytest.approx(-99)


def test_bode_handles_pole():
    bd = bode(lambda s: 1 / s, np.array([-1.0, 0.0, 1.0]), "int", TWO_PI)
    assert not bd.valid[1] and bd.valid[0]
    assert bd.gain_db[2] == pytest.approx(0.0)
    assert bd.phase_deg[2] == pytest.approx(-90.0)


def test_bode_unwraps():
    bd = bode(lambda s: 1 / (s + 1)**4, default_grid((0.01, 100), 200), omega_base=TWO_PI)
    assert bd.phase_deg[-1] == pytest.approx(-4 * math.degrees(math.atan(100)), abs=1e-9)


def test_bode_dataset_validation():
    with pytest.raises(ValueError):
        BodeDataset(np.array([2.0, 1.0]), np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        BodeDataset(np.array([1.0]), np.zeros(2), np.zeros(1))
