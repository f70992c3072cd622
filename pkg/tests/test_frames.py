import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from htfkit.core import HarmonicMatrixSeries
from htfkit.frames import (T_J, FrameTransform, NotDiagonalError, ReducedHtf2x2,
                           SymmetryError, complex_transform, dq_from_entries,
                           entry_diagonalize, identity_transform, is_block_diagonal,
                           is_entry_diagonal, park_transform, reduce_to_2x2,
                           rotation_transform, similarity, stationary_pair,
                           symmetric_condition)
from htfkit.hss import htf_evaluate
from htfkit.vsi import VsiParams, build_vsi_hss, z_closed_form


def test_park_is_rotation_matrix():
    Tp = park_transform(1.0)
    for t in (0.0, 0.4, 2.5):
        c, s = np.cos(t), np.sin(t)
        np.testing.assert_allclose(Tp.series(t), [[c, s], [-s, c]], atol=1e-15)
    assert Tp.series.real_valued


def test_rotation_definition():
    Tr = rotation_transform(1.0)
    np.testing.assert_allclose(Tr.series(0.7), np.diag([np.exp(-0.7j), np.exp(0.7j)]))


def test_bad_inverse_rejected():
    X = HarmonicMatrixSeries.constant(np.eye(2), 1.0)
    with pytest.raises(ValueError, match="inverse"):
        FrameTransform("custom", X, X.scale(2))
    with pytest.raises(ValueError, match="kind"):
        FrameTransform("shear", X, X)


def vsi_slice(s=0.23j, h=6):
    return htf_evaluate(build_vsi_hss(VsiParams()), s, h)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.01, 3.0))
def test_rotation_round_trip(w):
    G = vsi_slice(1j * w)
    Tr = rotation_transform(1.0)
    back = similarity(similarity(G, Tr), Tr.inverse())
    k = G.order - 2
    sl = slice((G.order - k) * 2, (G.order + k + 1) * 2)
    np.testing.assert_allclose(back.matrix[sl, sl], G.matrix[sl, sl], atol=1e-12)


def test_identity_transform_unchanged():
    G = vsi_slice()
    np.testing.assert_array_equal(similarity(G, identity_transform(1.0)).matrix, G.matrix)


def test_similarity_checks_size():
    G = vsi_slice()
    with pytest.raises(ValueError, match="does not match"):
        similarity(G, identity_transform(1.0, 3))


@pytest.mark.parametrize("f_hz", [1.0, 5.0, 20.0])
def test_rotation_block_diagonalizes_vsi(f_hz):
    G = vsi_slice(1j * f_hz / 50)
    assert not is_block_diagonal(G)
    pair = stationary_pair(G)
    assert abs(pair[0, 1]) > 0.1 * np.max(np.abs(pair))
    after = is_block_diagonal(similarity(G, rotation_transform(1.0)), tol=1e-10)
    assert after


def test_reduce_uses_centre_block(params):
    model = build_vsi_hss(params)
    Gr = similarity(vsi_slice(0.3j), rotation_transform(1.0))
    red = reduce_to_2x2(Gr, evaluate=lambda s: similarity(htf_evaluate(model, s, 6),
                                                          rotation_transform(1.0)))
    np.testing.assert_allclose(red(0.3j), z_closed_form(params).admittance(0.3j), rtol=1e-10)
    replicas = reduce_to_2x2(Gr)
    np.testing.assert_allclose(replicas(1.3j), z_closed_form(params).admittance(1.3j),
                               rtol=1e-10)
    with pytest.raises(ValueError, match="replica"):
        replicas(0.5j)


def test_reduce_refuses_coupled():
    with pytest.raises(NotDiagonalError):
        reduce_to_2x2(vsi_slice())


def test_stationary_pair_is_centre_block(params):
    G = vsi_slice(0.4j)
    Gr = similarity(G, rotation_transform(1.0))
    np.testing.assert_allclose(stationary_pair(G), Gr.harmonic_block(0, 0), atol=1e-12)


def test_entry_diagonality_of_impedances(params):
    zt = z_closed_form(params)
    grid = 1j * np.linspace(0.05, 3, 20)
    assert is_entry_diagonal(zt.z_l, grid, tol=1e-12)
    rep = is_entry_diagonal(zt.zt_2x2, grid)
    assert not rep and rep.residual == pytest.approx(
        max(abs(zt.M(s)) for s in grid), rel=1e-12)


def test_convert_edges():
    G = ReducedHtf2x2(lambda s: np.array([[1, 2], [3, 4]]) * (1 + s), "ab+-")
    back = G.convert("dq").convert("ab+-")
    np.testing.assert_allclose(back(0.2j), G(0.2j))
    with pytest.raises(ValueError):
        G.convert("ab")
    assert G.shifted(2)(0.0)[0, 0] == pytest.approx(1 + 2j)


def symmetric_dq(rng):
    a, b, c, d = rng.normal(size=4) + 1j * rng.normal(size=4)
    g_dd = lambda s: a / (s + 1 + abs(b))
    g_dq = lambda s: c / (s**2 + s + 2 + abs(d))
    return dq_from_entries(g_dd, g_dq, lambda s: -g_dq(s), g_dd)


def test_eigen_identity():
    rng = np.random.default_rng(7)
    for _ in range(5):
        G = symmetric_dq(rng)
        ed = entry_diagonalize(G)
        for s in (0.1j, 0.5 + 2j):
            M = G(s)
            lam = np.linalg.eigvals(M)
            got = np.array([ed.lambda_plus(s), ed.lambda_minus(s)])
            np.testing.assert_allclose(np.sort_complex(got), np.sort_complex(lam), atol=1e-12)
            np.testing.assert_allclose(ed.xi_plus @ M, ed.lambda_plus(s) * ed.xi_plus, atol=1e-12)
            np.testing.assert_allclose(ed.xi_minus @ M, ed.lambda_minus(s) * ed.xi_minus,
                                       atol=1e-12)
            np.testing.assert_allclose(T_J @ M @ np.linalg.inv(T_J), ed.diagonal(s), atol=1e-12)
            np.testing.assert_allclose(ed.reassemble(s), M, atol=1e-12)


def test_asymmetric_rejected():
    G = dq_from_entries(lambda s: 1, lambda s: 2, lambda s: 3, lambda s: 1)
    assert not symmetric_condition(G, [0.1j])
    with pytest.raises(SymmetryError):
        entry_diagonalize(G)


def test_complex_transform_is_constant():
    Tj = complex_transform(1.0)
    assert Tj.bandwidth == 0
    np.testing.assert_allclose(Tj.series(1.3), T_J)
