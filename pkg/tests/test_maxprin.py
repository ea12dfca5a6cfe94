"""Cooperative-system machinery: conditions, certified solves, differences."""

import numpy as np
import pytest
from scipy.integrate import quad

from hitchinlab.geometry import GridSpec, HolomorphicDatum, build_grid
from hitchinlab.maxprin import (
    CertificationError,
    CooperativeSystem,
    check_conditions,
    coupling_pattern,
    difference_system,
    fully_coupled,
    fully_coupled_bruteforce,
    random_cooperative_system,
    randomized_positivity_suite,
    rescale_unknowns,
    solve_linear_cooperative,
    _phi,
)
from hitchinlab.solver import SolverConfig, solve
from hitchinlab.system import make_spec, make_system, scale_last_arrow

one = HolomorphicDatum.constant(1.0)


def radial(n=32, radius=0.8):
    return build_grid(GridSpec("radial_disc", n, radius))


def test_system_shape_validation():
    g = radial(12)
    N = g.n_nodes
    with pytest.raises(ValueError):
        CooperativeSystem(g, 2, np.zeros((2, 2, N + 1)), np.zeros((2, N)))
    with pytest.raises(ValueError):
        CooperativeSystem(g, 2, np.zeros((2, 2, N)), np.zeros((3, N)))
    with pytest.raises(ValueError):
        CooperativeSystem(g, 2, np.zeros((2, 2, N)), np.zeros((2, N)),
                          metric_weight=np.zeros(N))
    with pytest.raises(ValueError):
        CooperativeSystem(g, 2, np.zeros((2, 2, N)), np.zeros((2, N)),
                          excluded=[np.array([0])])


def test_conditions_pass_on_random_draws():
    rng = np.random.default_rng(5)
    g = radial(24)
    for _ in range(5):
        sys_ = random_cooperative_system(g, 3, rng)
        rep = check_conditions(sys_)
        assert rep.passed
        d = rep.to_json_dict()
        assert d["cooperative_ok"] and d["column_dominance_ok"] and d["fully_coupled"]


@pytest.mark.parametrize(
    "violate,flag",
    [("cooperative", "cooperative_ok"), ("column", "column_dominance_ok"),
     ("coupled", "fully_coupled")],
)
def test_each_negative_control_trips_its_own_flag(violate, flag):
    rng = np.random.default_rng(9)
    g = radial(24)
    sys_ = random_cooperative_system(g, 3, rng, violate=violate)
    rep = check_conditions(sys_).to_json_dict()
    assert not rep[flag]
    others = {"cooperative_ok", "column_dominance_ok", "fully_coupled"} - {flag}
    for key in others:
        assert rep[key], f"{violate} control should only break {flag}, broke {key}"
    assert not rep["passed"]


def test_decoupled_control_reports_a_real_partition():
    rng = np.random.default_rng(2)
    g = radial(16)
    sys_ = random_cooperative_system(g, 4, rng, violate="coupled")
    rep = check_conditions(sys_)
    ok, partition = rep.coupled_ok, rep.partition
    assert not ok and partition is not None
    alpha, beta = partition
    P = coupling_pattern(sys_)
    assert not any(P[i, j] for i in alpha for j in beta)


def test_closure_matches_bruteforce_on_random_patterns():
    rng = np.random.default_rng(17)
    for _ in range(40):
        n = int(rng.integers(2, 9))
        P = rng.random((n, n)) < rng.uniform(0.1, 0.6)
        np.fill_diagonal(P, False)
        fast, partition = fully_coupled(P)
        assert fast == fully_coupled_bruteforce(P)
        if not fast:
            alpha, beta = partition
            assert not any(P[i, j] for i in alpha for j in beta)


def test_certified_solve_against_dense_oracle():
    from hitchinlab.maxprin import assemble_matrix

    rng = np.random.default_rng(23)
    g = radial(12)
    sys_ = random_cooperative_system(g, 3, rng)
    u, rep = solve_linear_cooperative(sys_)
    assert rep.passed
    A, rhs = assemble_matrix(sys_)
    dense = np.linalg.solve(A.toarray(), rhs).reshape(3, g.n_nodes)
    assert np.abs(u - dense).max() < 1e-10 * max(1.0, np.abs(dense).max())
    # certified systems produce positive interior solutions
    assert u[:, sys_.scan_mask()].min() > 0.0


def test_certification_refusal_and_override():
    rng = np.random.default_rng(31)
    g = radial(16)
    bad = random_cooperative_system(g, 2, rng, violate="column")
    with pytest.raises(CertificationError):
        solve_linear_cooperative(bad)
    u, rep = solve_linear_cooperative(bad, certify=False)
    assert not rep.passed
    assert u.shape == (2, g.n_nodes)


def test_rescaling_transforms_solutions_exactly():
    rng = np.random.default_rng(41)
    g = radial(20)
    sys_ = random_cooperative_system(g, 3, rng)
    lam = np.array([2.0, 0.5, 3.0])
    scaled = rescale_unknowns(sys_, lam)
    u, _ = solve_linear_cooperative(sys_)
    # a wide rescaling can break column dominance, so solve uncertified
    w, _ = solve_linear_cooperative(scaled, certify=False)
    np.testing.assert_allclose(w, lam[:, None] * u, rtol=1e-9, atol=1e-9)
    with pytest.raises(ValueError):
        rescale_unknowns(sys_, [1.0, -1.0, 2.0])


def test_rescaling_invariances_and_inverse():
    # sign pattern and coupling survive any positive rescaling; dominance
    # need not, and the inverse scaling restores the original exactly
    rng = np.random.default_rng(42)
    g = radial(16)
    sys_ = random_cooperative_system(g, 3, rng)
    lam = np.array([2.0, 0.5, 3.0])
    scaled = rescale_unknowns(sys_, lam)
    rep0, rep1 = check_conditions(sys_), check_conditions(scaled)
    assert rep0.cooperative_ok and rep1.cooperative_ok
    np.testing.assert_array_equal(coupling_pattern(sys_), coupling_pattern(scaled))
    back = rescale_unknowns(scaled, 1.0 / lam)
    np.testing.assert_allclose(back.c, sys_.c, rtol=1e-14)
    np.testing.assert_allclose(back.f, sys_.f, rtol=1e-14)
    assert check_conditions(back).passed


def test_poles_are_pinned_and_positive_elsewhere():
    rng = np.random.default_rng(43)
    g = radial(32)
    sys_ = random_cooperative_system(g, 2, rng, with_poles=True)
    assert any(len(e) for e in sys_.excluded)
    u, _ = solve_linear_cooperative(sys_)
    for i, e in enumerate(sys_.excluded):
        np.testing.assert_allclose(u[i, e], sys_.pole_value, rtol=1e-12)
    assert u[:, sys_.scan_mask()].min() > 0.0


def test_drift_keeps_offdiagonals_nonnegative():
    rng = np.random.default_rng(47)
    for g in (radial(24), build_grid(GridSpec("disc2d", 11, 0.8))):
        sys_ = random_cooperative_system(g, 2, rng, with_drift=True)
        L = sys_.elliptic_operator().tocoo()
        off = L.data[(L.row != L.col)]
        assert off.min() >= 0.0
        u, rep = solve_linear_cooperative(sys_)
        assert rep.passed and u[:, sys_.scan_mask()].min() > 0.0


def test_randomized_suite_reports_positive_minima():
    grids = [radial(24), build_grid(GridSpec("torus", (8, 8)))]
    out = randomized_positivity_suite(30, seed=1, grids=grids)
    assert out["passed"]
    assert out["worst_relative_min"] > -1e-8
    assert len(out["cases"]) == 30


def test_phi_against_quadrature():
    assert _phi(np.array([0.0]))[0] == 1.0
    vals = np.linspace(-3.0, 3.0, 21)
    got = _phi(vals)
    for v, p in zip(vals, got):
        ref, _ = quad(lambda s: np.exp(s * v), 0.0, 1.0, epsabs=1e-13)
        assert abs(p - ref) < 1e-10


def _two_member_family(n=3, t_a=2.0, t_b=1.0, res=64):
    g = radial(res)
    base = make_spec("hitchin_component", n, (one,), t=1.0)
    cfg = SolverConfig(tol_residual=1e-11)
    spec_a = scale_last_arrow(base, t_a)
    spec_b = scale_last_arrow(base, t_b)
    rep_a = solve(make_system(spec_a, g), config=cfg)
    rep_b = solve(make_system(spec_b, g), config=cfg)
    assert rep_a.converged and rep_b.converged
    return spec_a, rep_a.state, spec_b, rep_b.state


def test_difference_system_cyclic_identities():
    spec_a, st_a, spec_b, st_b = _two_member_family()
    ds = difference_system(spec_a, st_a, spec_b, st_b)
    assert ds.mode == "cyclic"
    np.testing.assert_allclose(ds.scale_ratio_log, 2 * np.log(2.0), rtol=1e-15)
    assert ds.row_sum_error() < 1e-12
    assert ds.residual_inf < 5e-9
    rep = check_conditions(ds.system)
    assert rep.passed
    # the log-ratios are strictly positive away from the boundary
    inner = ds.system.grid.verdict_region(3)
    assert ds.v[:, inner].min() > 0.0


def test_difference_system_vanishing_corner_mode():
    spec_a, st_a, spec_b, st_b = _two_member_family(t_a=1.0, t_b=0.0)
    ds = difference_system(spec_a, st_a, spec_b, st_b)
    assert ds.mode == "vanishing_corner"
    assert np.isinf(ds.scale_ratio_log)
    with pytest.raises(ValueError):
        ds.row_sum_error()
    # source terms are nonpositive and not identically zero
    assert ds.system.f.max() <= 0.0
    assert ds.system.f.min() < 0.0
    inner = ds.system.grid.verdict_region(3)
    assert ds.v[:, inner].min() > 0.0


def test_difference_system_input_validation():
    spec_a, st_a, spec_b, st_b = _two_member_family(res=32)
    with pytest.raises(ValueError):
        difference_system(spec_b, st_b, spec_a, st_a)  # needs |t_a| > |t_b|
    other = make_spec("hitchin_component", 3, (HolomorphicDatum.constant(2.0),), t=2.0)
    with pytest.raises(ValueError):
        difference_system(other, st_a, spec_b, st_b)
