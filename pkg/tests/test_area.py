import math
from functools import partial

import numpy as np
import pytest

from roughsee.area import (OperatorArea, Segments, apply_area, area_chen_residual, level_distances,
                           phi1, phi2, phi3, read_area_blob, smooth_area, twist_ops,
                           u_tensor_omega, u_tensor_omega_field, w_direct, w_element,
                           write_area_blob)
from roughsee.errors import ContractError, DomainError, StructuralError
from roughsee.hilbert import AreaField, GridPath, SpectralOperator, TimeGrid, chen_residual
from roughsee.noise import FbmSpec, dyadic_linearize, sample_fbm
from roughsee.reference import TrigNoise


def _affine(slopes, n=8, T=1.0):
    g = TimeGrid(0.0, T, n)
    return GridPath(g, np.outer(g.points, slopes))


def test_phi_small_and_large_arguments():
    for z in (1e-9, 1e-3, 0.5, 3.0, 50.0):
        assert phi1(z) == pytest.approx(-math.expm1(-z) / z, rel=1e-12)
        if z > 1e-3:
            assert phi2(z) == pytest.approx((z - 1 + math.exp(-z)) / z**2, rel=1e-9)
    assert phi1(0.0) == 1.0
    assert phi2(0.0) == pytest.approx(0.5)
    assert phi3(0.0) == pytest.approx(1.0 / 6.0)


def test_area_without_decay_is_half_square():
    w = _affine([2.0, -1.0])
    A = smooth_area(w, np.zeros(2), 0.0, 1.0)
    dw = np.array([2.0, -1.0])
    for a in range(2):
        np.testing.assert_allclose(A[a], 0.5 * np.outer(dw, dw), atol=1e-14)


def test_area_single_segment_closed_form():
    h, lam = 0.3, 7.0
    g = TimeGrid(0.0, h, 1)
    dc, db = 0.8, -0.5
    w = GridPath(g, np.array([[0.0, 0.0], [dc, db]]))
    A = smooth_area(w, [lam, lam], 0.0, h)
    expected = dc * db / h**2 * (h / lam - (1 - math.exp(-lam * h)) / lam**2)
    assert A[0, 0, 1] == pytest.approx(expected, rel=1e-13)


def test_area_of_constant_path():
    g = TimeGrid(0.0, 1.0, 8)
    w = GridPath(g, np.full((9, 2), 3.0))
    assert np.all(smooth_area(w, [1.0, 4.0], 0.0, 1.0) == 0)


def test_twist_ops_examples():
    w = _affine([1.5, 0.5])
    tw = twist_ops(w, np.zeros(2), 0.0, 1.0)
    np.testing.assert_allclose(tw.s_omega, np.tile([1.5, 0.5], (2, 1)), atol=1e-14)
    np.testing.assert_allclose(tw.omega_s, np.tile([1.5, 0.5], (2, 1)), atol=1e-14)
    h, lam = 0.25, 3.0
    one = GridPath(TimeGrid(0.0, h, 1), np.array([[0.0], [0.7]]))
    tw1 = twist_ops(one, [lam], 0.0, h)
    assert tw1.s_omega[0, 0] == pytest.approx(0.7 / h * (1 - math.exp(-lam * h)) / lam, rel=1e-13)
    z = twist_ops(w, [1.0, 2.0], 0.5, 0.5)
    assert np.all(z.s_omega == 0) and np.all(z.omega_s == 0)


def test_non_grid_path_rejected():
    with pytest.raises(ContractError):
        smooth_area(lambda t: t, [1.0], 0.0, 1.0)


@pytest.fixture(scope="module")
def rough():
    w = sample_fbm(FbmSpec.power_law(0.45, 3, seed=3), TimeGrid(0.0, 1.0, 32))
    return w, SpectralOperator([1.0, 5.0, 20.0])


def test_area_chen_identity(rough):
    w, op = rough
    A = partial(smooth_area, w, op)
    tw = partial(twist_ops, w, op)
    assert area_chen_residual(A, tw, 0.25, 0.25, 0.75) == pytest.approx(0.0, abs=1e-15)
    for s, r, t in [(0.0, 0.5, 1.0), (0.125, 0.40625, 0.90625), (0.0, 0.03125, 1.0)]:
        assert area_chen_residual(A, tw, s, r, t) < 1e-13
    wl = dyadic_linearize(w, 2)
    # r in the interior of a dyadic piece is still a grid node of the linearised path
    assert area_chen_residual(partial(smooth_area, wl, op), partial(twist_ops, wl, op), 0.0, 0.40625, 1.0) < 1e-13


def test_operator_area_matches_direct_sum(rough):
    w, op = rough
    A = OperatorArea.build(w, op)
    for j, k in [(0, 32), (3, 17), (10, 11), (5, 5)]:
        np.testing.assert_allclose(A(j, k), smooth_area(w, op, j / 32, k / 32), atol=1e-13)
        tw = twist_ops(w, op, j / 32, k / 32)
        np.testing.assert_allclose(A.twist(j, k).s_omega, tw.s_omega, atol=1e-13)
        np.testing.assert_allclose(A.twist(j, k).omega_s, tw.omega_s, atol=1e-13)
    with pytest.raises(DomainError):
        A(4, 2)


def test_area_is_quadratic_in_noise(rough):
    w, op = rough
    w2 = GridPath(w.grid, 2 * w.values)
    np.testing.assert_allclose(smooth_area(w2, op, 0.0, 1.0), 4 * smooth_area(w, op, 0.0, 1.0), rtol=1e-14)


def test_apply_area_action():
    A = np.arange(8.0).reshape(2, 2, 2)
    E = np.array([[1.0, 0.0], [0.0, 2.0]])
    np.testing.assert_array_equal(apply_area(A, E), [[0.0, 1.0], [12.0, 14.0]])


def test_u_tensor_omega_examples():
    g = TimeGrid(0.0, 1.0, 16)
    ident = GridPath(g, g.points[:, None])
    assert u_tensor_omega(ident, ident, 0.0, 1.0)[0, 0] == pytest.approx(0.5, abs=1e-15)
    const = GridPath(g, np.ones((17, 1)))
    assert u_tensor_omega(const, ident, 0.0, 1.0)[0, 0] == 0.0
    w = sample_fbm(FbmSpec.power_law(0.45, 2, seed=2), g)
    u = GridPath(g, np.stack([np.sin(g.points), g.points**2], 1))
    v = u_tensor_omega_field(u, w)
    assert chen_residual(u, v, w) < 1e-14
    np.testing.assert_allclose(v.values[2, 11], u_tensor_omega(u, w, 2 / 16, 11 / 16), atol=1e-15)


def test_w_element_vanishes_for_constant_u():
    g = TimeGrid(0.0, 1.0, 16)
    w = TrigNoise((0.4, 0.2), (1.0, 1.5)).on(g)
    u = GridPath(g, np.full((17, 2), 0.3))
    out = w_element(u, AreaField.zeros(g, 2), w, [1.0, 4.0], 0.665, 1.0, 0.0, 0.75)
    assert np.all(np.abs(out) < 1e-14)


def test_w_element_matches_segment_sums():
    noise = TrigNoise((0.4, 0.2), (1.0, 1.5), (0.2, 0.0))
    errs = []
    for n in (32, 64):
        g = TimeGrid(0.0, 1.0, n)
        w = noise.on(g)
        u = GridPath(g, 0.2 * np.stack([np.cos(3 * g.points), np.sin(2 * g.points)], 1))
        v = u_tensor_omega_field(u, w)
        op = [2.0, 8.0]
        frac = w_element(u, v, w, op, 0.665, 1.0, 0.0, 0.75)
        direct = -w_direct(u, w, op, 1.0)[0, g.index_of(0.75)]
        errs.append(np.max(np.abs(frac - direct)))
    assert errs[1] < errs[0]
    assert errs[1] < 1e-3


def test_w_direct_chen_defect_factorises():
    # X(r,p) - X(r,q) - X(q,p) = (u(q) - u(r))_k * int_q^p omega_S(., t)_ab domega_c,
    # so the defect divided by the increment of u is the same for every u
    g = TimeGrid(0.0, 1.0, 24)
    w = TrigNoise((0.4, 0.2), (1.0, 1.5)).on(g)
    op = [2.0, 8.0]
    r, q, p = 2, 9, 20

    def defect(u):
        X = w_direct(u, w, op, 1.0)
        return X[r, p] - X[r, q] - X[q, p]

    ref = defect(GridPath(g, np.stack([g.points, np.zeros(25)], 1)))[:, :, 0, :] / (q - r) * 24
    assert np.max(np.abs(ref)) > 1e-3
    u = GridPath(g, 0.2 * np.stack([np.cos(3 * g.points), np.sin(2 * g.points)], 1))
    du = u.values[q] - u.values[r]
    np.testing.assert_allclose(defect(u), np.einsum("k,abc->abkc", du, ref), atol=1e-14)


def test_blob_round_trip(tmp_path, rough):
    w, op = rough
    A = OperatorArea.build(dyadic_linearize(w, 3), op)
    meta = write_area_blob(A, tmp_path / "a.bin", "coarse", stride=8)
    assert meta["level"] == 3 and meta["count"] == 10
    back = read_area_blob(tmp_path / "a.bin")
    assert back.level == 3 and back.grid.same_as(A.grid)
    np.testing.assert_array_equal(back(8, 24), A(8, 24))
    assert np.all(back(4, 4) == 0)
    with pytest.raises(DomainError):
        back(1, 2)
    raw = bytearray((tmp_path / "a.bin").read_bytes())
    raw[-1] ^= 0xFF
    (tmp_path / "a.bin").write_bytes(bytes(raw))
    with pytest.raises(StructuralError):
        read_area_blob(tmp_path / "a.bin")


def test_level_distances_shape(rough):
    w, op = rough
    out = level_distances(w, op, [1, 2, 3], 0.43)
    assert [r["levels"] for r in out] == [[1, 2], [2, 3]]
    assert all(r["area"] > 0 and r["path"] > 0 for r in out)
    assert level_distances(w, op, [5, 5], 0.43)[0]["area"] == 0.0


def test_segments_shapes(rough):
    w, op = rough
    seg = Segments.build(w, op)
    assert seg.n == 32
    assert seg.area().shape == (32, 3, 3, 3)
    with pytest.raises(StructuralError):
        Segments.build(w, [1.0, 2.0])
