import dataclasses

import numpy as np
import pytest

from hitchinlab.geometry import (
    Grid,
    GridSpec,
    HolomorphicDatum,
    ScalarField,
    build_grid,
    eval_norm_squared,
    hyperbolic_metric,
    zero_set,
)


def radial(n=64, radius=0.8):
    return build_grid(GridSpec("radial_disc", n, radius))


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        build_grid(GridSpec("radial_disc", 4))
    with pytest.raises(ValueError):
        build_grid(GridSpec("radial_disc", 64, radius=1.0))
    with pytest.raises(ValueError):
        build_grid(GridSpec("radial_disc", 64, radius=0.0))
    with pytest.raises(ValueError):
        build_grid(GridSpec("klein_bottle", 64))


def test_radial_laplacian_exact_on_quadratic():
    # (1/4)(d_xx + d_yy) applied to x^2 + y^2 is identically 1, and the
    # radial stencil reproduces that exactly, including the axis row
    g = radial(128)
    r2 = np.abs(g.z()) ** 2
    interior = ~g.boundary_mask
    vals = g.lap @ r2
    np.testing.assert_allclose(vals[interior], 1.0, rtol=0, atol=1e-11)


def test_disc2d_laplacian_exact_on_quadratic():
    g = build_grid(GridSpec("disc2d", 41, 0.8))
    r2 = np.abs(g.z()) ** 2
    interior = ~g.boundary_mask
    vals = (g.lap @ r2)[interior]
    np.testing.assert_allclose(vals, 1.0, rtol=0, atol=1e-11)


def test_torus_laplacian_plane_wave():
    g = build_grid(GridSpec("torus", (64, 64), periods=(1.0, 1.0)))
    x = g.z().real
    f = np.cos(2 * np.pi * x)
    lam = -0.25 * (2 * np.pi) ** 2
    got = g.lap @ f
    assert np.abs(got - lam * f).max() < 0.02 * abs(lam)
    # constants are in the kernel
    np.testing.assert_allclose(g.lap @ np.ones(g.n_nodes), 0.0, atol=1e-12)


def test_torus_rows_sum_to_zero():
    g = build_grid(GridSpec("torus", (16, 12)))
    rowsums = np.asarray(g.lap.sum(axis=1)).ravel()
    np.testing.assert_allclose(rowsums, 0.0, atol=1e-12)


def test_area_weights_radial_total():
    g = radial(256, 0.7)
    # annuli tile the disc of radius R
    assert abs(g.area_weights().sum() - np.pi * 0.7**2) < 1e-10


def test_verdict_region_distances():
    g = radial(64)
    region = g.verdict_region(5)
    c = g.cells_to_boundary()
    assert np.array_equal(region, c >= 5)
    assert not region[g.boundary_mask].any()
    g2 = build_grid(GridSpec("torus", (12, 12)))
    assert g2.verdict_region(5).all()


def test_directional_neighbors_tables():
    g = radial(32)
    nbr, spacings = g.directional_neighbors()
    assert nbr.shape == (g.n_nodes, 2)
    assert len(spacings) == 1 and abs(spacings[0] - g.spacing) < 1e-15
    assert nbr[0, 0] == -1 and nbr[-1, 1] == -1
    assert nbr[5, 0] == 4 and nbr[5, 1] == 6

    t = build_grid(GridSpec("torus", (8, 8)))
    nt, _ = t.directional_neighbors()
    assert (nt >= 0).all()
    # every node appears exactly once as a +x neighbour
    counts = np.bincount(nt[:, 1], minlength=t.n_nodes)
    assert (counts == 1).all()

    d = build_grid(GridSpec("disc2d", 21, 0.8))
    nd, _ = d.directional_neighbors()
    assert ((nd == -1).sum(axis=1)[~d.boundary_mask] == 0).all()


def test_scalar_field_validation():
    g = radial(16)
    with pytest.raises(ValueError):
        ScalarField(g, np.ones(3))
    with pytest.raises(ValueError):
        ScalarField(g, np.full(g.n_nodes, np.nan))
    f = ScalarField(g, np.arange(g.n_nodes, dtype=float))
    assert f.values[3] == 3.0


def test_hyperbolic_metric_frozen_values():
    g = radial(96, 0.8)
    g0 = hyperbolic_metric(g).values
    assert g0[0] == 2.0
    r = np.abs(g.z())
    i = int(np.argmin(np.abs(r - 0.5)))
    assert abs(g0[i] - 2.0 / (1 - r[i] ** 2) ** 2) < 1e-14
    with pytest.raises(ValueError):
        hyperbolic_metric(build_grid(GridSpec("torus", (8, 8))))


def test_log_hyperbolic_metric_solves_liouville():
    # Delta log g0 = g0 for the curvature -4 disc metric; the discrete
    # residual is pure truncation error and must shrink at second order
    def resid(n):
        g = radial(n, 0.8)
        g0 = hyperbolic_metric(g).values
        return np.abs((g.lap @ np.log(g0) - g0)[~g.boundary_mask]).max()

    r128, r256, r512 = resid(128), resid(256), resid(512)
    assert r512 < 1e-3
    order = np.log2(r128 / r256), np.log2(r256 / r512)
    assert min(order) > 1.8


def test_datum_constructors_and_algebra():
    z = HolomorphicDatum.monomial(2.0, 3)
    assert z.degree == 3 and not z.is_zero()
    c = HolomorphicDatum.constant(1.5)
    prod = z * c
    assert prod.kind == "monomial" and prod.degree == 3
    p = HolomorphicDatum.polynomial([1.0, 0.0, -0.25])
    pp = p * p
    ref = np.polymul([1.0, 0.0, -0.25][::-1], [1.0, 0.0, -0.25][::-1])[::-1]
    np.testing.assert_allclose([complex(x) for x in pp.coefficients], ref)
    sq = z.squared()
    assert sq.degree == 6
    zero = HolomorphicDatum.zero()
    assert (zero * p).is_zero()
    assert zero.scaled(3.0).is_zero()


def test_datum_evaluation_against_direct_formula():
    # |p|^2 of a general polynomial is angle-dependent, so this needs the
    # full planar chart rather than the radially-reduced one
    g = build_grid(GridSpec("disc2d", 33, 0.9))
    zs = g.z()
    p = HolomorphicDatum.polynomial([0.5, -1.0, 2.0])
    direct = 0.5 - zs + 2.0 * zs**2
    np.testing.assert_allclose(p.value(zs), direct, atol=1e-14)
    nsq = eval_norm_squared(p, g).values
    np.testing.assert_allclose(nsq, np.abs(direct) ** 2, atol=1e-14)

    # and the radial chart refuses it outright
    with pytest.raises(ValueError):
        eval_norm_squared(p, radial(16))


def test_monomial_norm_squared_is_radial_power():
    g = radial(64)
    m = HolomorphicDatum.monomial(1.0 + 1.0j, 1)
    nsq = eval_norm_squared(m, g).values
    np.testing.assert_allclose(nsq, 2.0 * np.abs(g.z()) ** 2, atol=1e-14)


def test_torus_rejects_nonconstant_data():
    t = build_grid(GridSpec("torus", (8, 8)))
    with pytest.raises(ValueError):
        eval_norm_squared(HolomorphicDatum.monomial(1.0, 2), t)
    ok = eval_norm_squared(HolomorphicDatum.constant(2.0), t)
    np.testing.assert_allclose(ok.values, 4.0)


def test_zero_set_polynomial_on_lattice():
    # roots of z^2 - 1/4 sit at +-0.5; with an odd lattice those are nodes
    g = build_grid(GridSpec("disc2d", 33, 0.8))
    p = HolomorphicDatum.polynomial([-0.25, 0.0, 1.0])
    hits = zero_set(p, g, tol=1e-12)
    pts = g.z()[hits]
    assert len(pts) == 2
    assert sorted(np.round(pts.real, 10)) == [-0.5, 0.5]
    assert np.abs(pts.imag).max() < 1e-12


def test_zero_set_of_zero_datum_is_everything():
    g = radial(16)
    assert len(zero_set(HolomorphicDatum.zero(), g)) == g.n_nodes


def test_grid_spec_is_frozen():
    spec = GridSpec("radial_disc", 16, 0.9)
    with pytest.raises(dataclasses.FrozenInstanceError):
        spec.radius = 0.5
    g = build_grid(spec)
    assert isinstance(g, Grid)
    # derived arrays are handed out as copies, so callers cannot corrupt them
    w = g.area_weights()
    w[:] = 0.0
    assert g.area_weights().sum() > 0.0
