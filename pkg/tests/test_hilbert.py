import math

import numpy as np
import pytest

from roughsee.errors import DomainError, StructuralError
from roughsee.hilbert import (AreaField, GridPath, PathAreaPair, SpectralOperator, TimeGrid,
                              apply_semigroup, area_from_csv, area_seminorm, area_to_csv,
                              chen_extend, chen_residual, frac_power_norm, holder_seminorm,
                              path_from_csv, path_to_csv, smoothing_constant, x_seminorm)


def test_semigroup_identity_and_decay():
    op = SpectralOperator([4.0])
    assert apply_semigroup(op, 0.0, np.array([1.0])) == pytest.approx([1.0])
    assert apply_semigroup(op, 0.5, np.array([1.0]))[0] == pytest.approx(0.1353352832366127, rel=1e-14)


def test_semigroup_rejects_negative_time():
    with pytest.raises(DomainError):
        apply_semigroup(SpectralOperator([1.0]), -0.1, np.ones(1))


def test_smoothing_maximum_by_scan():
    lam, g = 9.0, 0.5
    t = np.linspace(1e-6, 1.0, 200001)
    peak = np.max(t**g * lam**g * np.exp(-lam * t))
    assert peak <= (g / math.e) ** g + 1e-12
    assert peak == pytest.approx((g / math.e) ** g, rel=1e-6)


def test_spectrum_must_be_positive_and_sorted():
    with pytest.raises(DomainError):
        SpectralOperator([0.0, 1.0])
    with pytest.raises(DomainError):
        SpectralOperator([4.0, 1.0])


@pytest.mark.parametrize("x, delta, expected", [
    ([1.0, 0.0], 0.5, 1.0),
    ([0.0, 1.0], 0.5, 2.0),
])
def test_frac_power_norm_simple(x, delta, expected):
    assert frac_power_norm(SpectralOperator([1.0, 4.0]), np.array(x), delta) == pytest.approx(expected)


def test_frac_power_norm_laplacian_pair():
    op = SpectralOperator([math.pi**2, 4 * math.pi**2])
    assert frac_power_norm(op, np.ones(2), 0.25) == pytest.approx(math.sqrt(3 * math.pi), rel=1e-12)
    assert math.sqrt(3 * math.pi) == pytest.approx(3.0700, abs=5e-5)


def _path(f, n=64, T=1.0):
    g = TimeGrid(0.0, T, n)
    return GridPath(g, np.atleast_2d(f(g.points)).T)


def test_holder_constant_and_linear():
    assert holder_seminorm(_path(lambda t: 0 * t + 3.0), 0.4) == 0.0
    m, T, beta = -2.5, 2.0, 0.3
    assert holder_seminorm(_path(lambda t: m * t, 50, T), beta) == pytest.approx(abs(m) * T ** (1 - beta))


def test_holder_weighted_grid_scan():
    p = _path(lambda t: t, 40)
    s = p.times[:, None]
    t = p.times[None, :]
    mask = t > s
    expected = np.max(np.where(mask, s**0.4 * np.abs(t - s) ** 0.6, 0.0))
    assert holder_seminorm(p, 0.4, weighted=True) == pytest.approx(expected, rel=1e-12)


def test_holder_domain():
    with pytest.raises(DomainError):
        holder_seminorm(_path(lambda t: t), 1.0)


def test_area_seminorm_examples():
    g = TimeGrid(0.0, 1.0, 30)
    s, t = np.meshgrid(g.points, g.points, indexing="ij")
    gap = np.clip(t - s, 0, None)
    assert area_seminorm(AreaField.zeros(g, 2), 0.7) == 0.0
    v = AreaField(g, (gap**0.7)[:, :, None, None])
    assert area_seminorm(v, 0.7) == pytest.approx(1.0)
    beta, bp = 0.35, 0.42
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where((s > 0) & (t > s), s ** (-beta) * gap ** (beta + bp), 0.0)
    w = AreaField(g, vals[:, :, None, None])
    assert area_seminorm(w, beta + bp, weighted=True, beta=beta) == pytest.approx(1.0)


def test_area_field_keeps_upper_triangle_only():
    g = TimeGrid(0.0, 1.0, 3)
    vals = np.ones((4, 4, 1, 1))
    a = AreaField(g, vals).values[:, :, 0, 0]
    np.testing.assert_array_equal(a, np.triu(np.ones((4, 4)), 1))
    with pytest.raises(StructuralError):
        AreaField(g, np.zeros((4, 3, 1, 1)))


def test_chen_examples():
    g = TimeGrid(0.0, 1.0, 2)
    ident = GridPath(g, g.points[:, None])
    const = GridPath(g, np.full((3, 1), 5.0))
    assert chen_residual(const, AreaField.zeros(g, 1), ident) == 0.0
    # v = 0, u = omega = identity: the triple (0, 1/2, 1) gives (1/2)(1/2)
    assert chen_residual(ident, AreaField.zeros(g, 1), ident) == pytest.approx(0.25)


def test_chen_trapezoid_smooth_pair():
    n = 200
    g = TimeGrid(0.0, 1.0, n)
    t = g.points
    u = np.stack([np.sin(3 * t), np.cos(2 * t)], 1)
    w = np.stack([t**2, np.sin(t)], 1)
    # trapezoid one-step areas; Chen then holds up to the one-step quadrature error
    local = 0.5 * np.diff(u, axis=0)[:, :, None] * np.diff(w, axis=0)[:, None, :]
    v = chen_extend(local, u, w)
    res = chen_residual(GridPath(g, u), AreaField(g, v), GridPath(g, w))
    assert res < 1e-12
    # an area built with a different rule on long spans breaks Chen at O(dt)
    v2 = v.copy()
    v2[0, n, 0, 1] += 1.0 / n
    assert chen_residual(GridPath(g, u), AreaField(g, v2), GridPath(g, w)) == pytest.approx(1.0 / n)


def test_chen_mismatched_grids():
    a = TimeGrid(0.0, 1.0, 4)
    b = TimeGrid(0.0, 1.0, 5)
    with pytest.raises(StructuralError):
        chen_residual(GridPath(a, np.zeros((5, 1))), AreaField.zeros(a, 1), GridPath(b, np.zeros((6, 1))))


def test_x_seminorm_sums_parts():
    g = TimeGrid(0.0, 1.0, 10)
    u = GridPath(g, g.points[:, None])
    v = AreaField(g, np.clip(g.points[None, :] - g.points[:, None], 0, None)[:, :, None, None] ** 0.8)
    pair = PathAreaPair(u, v)
    assert x_seminorm(pair, 0.34, 0.46) == pytest.approx(1.0 + 1.0)


def test_csv_round_trip(tmp_path):
    g = TimeGrid(-0.5, 1.5, 8)
    rng = np.random.default_rng(0)
    p = GridPath(g, rng.standard_normal((9, 3)))
    path_to_csv(p, tmp_path / "p.csv")
    q = path_from_csv(tmp_path / "p.csv")
    assert q.grid.same_as(g)
    np.testing.assert_array_equal(q.values, p.values)
    local = rng.standard_normal((8, 3, 3))
    v = AreaField(g, chen_extend(local, p.values, p.values))
    area_to_csv(v, tmp_path / "v.csv")
    np.testing.assert_array_equal(area_from_csv(tmp_path / "v.csv", g).values, v.values)


def test_smoothing_constant_floor():
    assert smoothing_constant(0.2, 0.5) == 1.0
    assert smoothing_constant(0.5, 0.0) == 1.0
    assert smoothing_constant(3.0, 0.0) == pytest.approx((3 / math.e) ** 3)
