import math
import warnings

import numpy as np
import pytest

from mfgplay.catalog import builtin_catalog, problem_family
from mfgplay.grid import GridSpec, grid_norm, inner_product
from mfgplay.play import (
    BacktrackingWeight,
    ConstantWeight,
    DiminishingWeight,
    HierarchySpec,
    NonConvergenceWarning,
    PlayState,
    alignment_cosine,
    average_step,
    best_response,
    btls_select,
    cost_J,
    gain,
    improvement_D,
    initial_state,
    momentum_from,
    next_weight,
    run_fictitious_play,
    run_hierarchical,
)
from mfgplay.problem import (
    LocalAffineCost,
    ObstacleCost,
    ProblemSpec,
    QuadraticHamiltonian,
    ZeroCost,
    ZeroTerminal,
)


@pytest.fixture(scope="module")
def small_linear():
    return builtin_catalog("local-linear", 200, 20)


@pytest.fixture(scope="module")
def small_equilibrium(small_linear):
    res = run_fictitious_play(small_linear, ConstantWeight(0.5), 1e-12, 200)
    assert res.converged
    return res


def test_weight_schedules():
    assert next_weight(DiminishingWeight(2.0), 1) == pytest.approx(2 / 3)
    seq = [next_weight(DiminishingWeight(1.0), k) for k in range(1, 50)]
    assert all(a > b for a, b in zip(seq, seq[1:])) and seq[-1] < 0.03
    assert all(next_weight(ConstantWeight(0.1), k) == 0.1 for k in (1, 7, 1000))
    with pytest.raises(ValueError):
        next_weight(ConstantWeight(0.1), 0)
    with pytest.raises(TypeError):
        next_weight(BacktrackingWeight(), 1)


@pytest.mark.parametrize(
    "factory",
    [
        lambda: ConstantWeight(0.0),
        lambda: ConstantWeight(1.5),
        lambda: DiminishingWeight(0.0),
        lambda: BacktrackingWeight(delta_init=0.0),
        lambda: BacktrackingWeight(beta=1.0),
        lambda: BacktrackingWeight(zeta=0.0),
        lambda: BacktrackingWeight(n_max=0),
    ],
)
def test_schedule_validation(factory):
    with pytest.raises(ValueError):
        factory()


def _tiny_problem(cost=None, terminal=None):
    grid = GridSpec(0.0, 1.0, 2, 1.0, 1)
    return ProblemSpec(grid, QuadraticHamiltonian(), cost or ZeroCost(), terminal or ZeroTerminal(), np.array([1.0, 2.0, 1.0]))


def test_average_step_examples():
    grid = GridSpec(0.0, 1.0, 1, 1.0, 1)
    st = PlayState(np.ones((2, 2)), np.zeros((2, 1, 2)))
    from mfgplay.play import BestResponse

    br = BestResponse(np.zeros((2, 2)), np.array([[0.0, 2.0], [0.0, 2.0]]), np.ones((2, 1, 2)), 0.0, None, None)
    half = average_step(st, br, 0.5)
    np.testing.assert_allclose(half.rho, [[0.5, 1.5], [0.5, 1.5]])
    np.testing.assert_allclose(half.m, 0.5)
    assert half.k == 1
    full = average_step(st, br, 1.0)
    np.testing.assert_array_equal(full.rho, br.rho)
    np.testing.assert_array_equal(full.m, br.m)
    with pytest.raises(ValueError):
        average_step(st, br, 0.0)
    assert grid.n_points == 2


def test_cost_hand_evaluation():
    p = _tiny_problem()
    assert p.grid.dx == (0.5,) and p.grid.dt == 1.0
    rho = np.array([[1.0, 2.0, 1.0], [1.0, 2.0, 3.0]])
    m = np.zeros((2, 1, 3))
    m[1, 0] = [1.0, -2.0, 0.0]
    f = np.array([[9.0, 9.0, 9.0], [1.0, 0.5, 2.0]])
    fT = np.array([0.0, 1.0, -1.0])
    # dynamic: sum m^2 / (2 rho) = 0.5 + 1 + 0; interaction: 1 + 1 + 6; terminal: 0 + 2 - 3
    expected = 0.5 * (1.5 + 8.0) + 0.5 * (-1.0)
    assert cost_J(rho, p, f, fT, m=m) == pytest.approx(expected)
    phi = np.array([[0.0, 0.5, 1.0], [0.0, 0.0, 0.0]])
    # velocity -central gradient = (-0.5, -1, -0.5), L = v^2/2 -> rho*L = (0.125, 1, 0.375)
    expected_phi = 0.5 * (1.5 + 8.0) + 0.5 * (-1.0)
    assert cost_J(rho, p, f, fT, phi=phi) == pytest.approx(expected_phi)
    with pytest.raises(ValueError):
        cost_J(rho, p, f, fT)


def test_cost_zero_cases():
    p = _tiny_problem()
    z = np.zeros((2, 3))
    rho = np.array([[1.0, 2.0, 1.0], [1.0, 2.0, 3.0]])
    assert cost_J(rho, p, z, z[0], m=np.zeros((2, 1, 3))) == 0.0
    # vacuum with zero momentum contributes nothing; vacuum with momentum is floored and counted
    from mfgplay.play import _dynamic_density

    vac = np.array([[1.0, 0.0, 1.0]])
    dens, floored = _dynamic_density(vac, np.zeros((1, 1, 3)), p)
    assert floored == 0 and np.all(np.isfinite(dens)) and dens[0, 1] == 0.0
    dens, floored = _dynamic_density(vac, np.array([[[0.0, 1.0, 0.0]]]), p)
    assert floored == 1 and dens[0, 1] > 1e10


def test_gain_vanishes_when_state_is_its_own_best_response(small_linear):
    st = initial_state(small_linear)
    br = best_response(st.rho, small_linear)
    same = PlayState(br.rho.copy(), br.m.copy())
    g = gain(same, br, small_linear)
    assert abs(g) <= 1e-12 * max(1.0, abs(br.cost))


def test_momentum_consistent_with_phi_and_rho(small_linear):
    st = initial_state(small_linear)
    br = best_response(st.rho, small_linear)
    np.testing.assert_allclose(br.m, momentum_from(br.rho, br.phi, small_linear), rtol=1e-13, atol=0)
    assert not br.m[0].any()


def test_density_independent_cost_gives_identical_best_responses():
    grid = GridSpec((-2, -2), (2, 2), (8, 8), 1.0, 4)
    rho0 = grid.sample(lambda x: np.exp(-np.sum((x + 1) ** 2, axis=0)))
    p = ProblemSpec(grid, QuadraticHamiltonian(), ObstacleCost(5.0, 0.5), ZeroTerminal(), rho0, 1.0, 0.0)
    rng = np.random.default_rng(0)
    a = best_response(rng.random(grid.field_shape), p)
    b = best_response(rng.random(grid.field_shape), p)
    np.testing.assert_array_equal(a.phi, b.phi)
    np.testing.assert_array_equal(a.rho, b.rho)
    st = initial_state(p)
    ls = btls_select(st, a, 1.0, BacktrackingWeight(1.0, 0.5, 0.8), p)
    assert ls.delta == 1.0 and ls.trials == 1 and ls.D == 0.0 and not ls.saturated


def test_equilibrium_is_a_fixed_point(small_linear, small_equilibrium):
    eq = small_equilibrium.state
    br = best_response(eq.rho, small_linear)
    grid = small_linear.grid
    assert grid_norm(br.rho - eq.rho, grid) <= 1e-5
    rec = small_equilibrium.records[-1]
    assert abs(rec.gain) <= 1e-12
    assert rec.delta is None


def test_perturbed_equilibrium_best_response_lands_on_opposite_side(small_linear, small_equilibrium):
    eq = small_equilibrium.state.rho
    grid = small_linear.grid
    rng = np.random.default_rng(3)
    for _ in range(3):
        bump = grid.sample(lambda x: np.exp(-((x[0] - rng.uniform(-1, 1)) ** 2)))
        pert = eq.copy()
        pert[1:] += 0.05 * bump * rng.uniform(0.5, 1.5)
        br = best_response(pert, small_linear)
        assert inner_product(pert - eq, br.rho - eq, grid) <= 1e-8 * grid_norm(pert - eq, grid) * grid_norm(br.rho - eq, grid) + 1e-14


def test_run_with_infinite_tolerance_stops_after_one_record(small_linear):
    res = run_fictitious_play(small_linear, ConstantWeight(0.5), math.inf, 10)
    assert res.converged and res.iterations == 1 and res.records[0].delta is None


def test_run_diagnostics_invariants(small_linear, small_equilibrium):
    ref = small_equilibrium.state.rho
    res = run_fictitious_play(small_linear, ConstantWeight(0.1), 1e-9, 400, reference=ref)
    assert res.converged
    gains = [r.gain for r in res.records]
    for r in res.records:
        assert r.consec_residue >= 0 and r.fp_residue >= 0 and r.ref_error >= 0
        assert r.gain >= -1e-8
        assert r.cosine <= 1e-8 or math.isnan(r.cosine)
    # the gain decays monotonically at a small constant weight
    assert all(b <= a * (1 + 1e-10) for a, b in zip(gains, gains[1:]))
    m0 = small_linear.rho0.sum()
    assert np.allclose(res.state.rho.reshape(res.state.rho.shape[0], -1).sum(axis=1), m0, rtol=1e-9)
    assert [r.k for r in res.records] == list(range(1, res.iterations + 1))


def test_diminishing_and_btls_runs_converge(small_linear):
    dim = run_fictitious_play(small_linear, DiminishingWeight(2.0), 1e-4, 200)
    assert dim.converged
    assert dim.records[0].delta == pytest.approx(2 / 3)
    bt = run_fictitious_play(small_linear, BacktrackingWeight(1.0, 0.5, 0.8), 1e-10, 200)
    assert bt.converged
    for r in bt.records[:-1]:
        assert r.btls_trials is not None
        if r.btls_trials > 0 and not r.btls_saturated:
            assert r.btls_D <= 0.8 * r.delta * r.gain


def test_btls_saturation_returns_smallest_weight(small_linear):
    st = initial_state(small_linear)
    br = best_response(st.rho, small_linear)
    # a negative budget can never be met
    ls = btls_select(st, br, -1.0, BacktrackingWeight(1.0, 0.5, 0.8, n_max=3), small_linear)
    assert ls.saturated and ls.trials == 3 and ls.delta == pytest.approx(0.25)


def test_improvement_D_includes_terminal_term_only_when_density_dependent():
    from mfgplay.problem import LocalAffineTerminal

    grid = GridSpec(0.0, 1.0, 4, 1.0, 2)
    rng = np.random.default_rng(5)
    a, b, c, d = (rng.random(grid.field_shape) for _ in range(4))
    rho0 = np.ones(5)
    plain = ProblemSpec(grid, QuadraticHamiltonian(), LocalAffineCost(1.0), ZeroTerminal(), rho0)
    term = ProblemSpec(grid, QuadraticHamiltonian(), LocalAffineCost(1.0), LocalAffineTerminal(1.0), rho0)
    base = -inner_product(a - b, c - d, grid)
    assert improvement_D(a, b, c, d, plain) == pytest.approx(base)
    extra = -grid.cell_volume * np.sum((a[-1] - b[-1]) * (c[-1] - d[-1]))
    assert improvement_D(a, b, c, d, term) == pytest.approx(base + extra)


def test_alignment_cosine_sentinel_and_range():
    grid = GridSpec(0.0, 1.0, 3, 1.0, 1)
    z = np.zeros(grid.field_shape)
    assert math.isnan(alignment_cosine(z, z, z, grid))
    a = np.random.default_rng(0).random(grid.field_shape)
    assert alignment_cosine(a, -a, z, grid) == pytest.approx(-1.0)


def test_initial_state_options(small_linear):
    grid = small_linear.grid
    with pytest.raises(ValueError):
        initial_state(small_linear, phi0=grid.zeros(), rho_init=grid.zeros())
    st = initial_state(small_linear, rho_init=np.ones(grid.field_shape))
    assert not st.m.any()
    st = initial_state(small_linear)
    np.testing.assert_array_equal(st.rho[0], small_linear.rho0)


def test_run_argument_validation(small_linear):
    with pytest.raises(ValueError):
        run_fictitious_play(small_linear, ConstantWeight(0.5), 0.0, 10)
    with pytest.raises(ValueError):
        run_fictitious_play(small_linear, ConstantWeight(0.5), 1e-6, 0)
    with pytest.raises(ValueError):
        HierarchySpec(-1, 1e-6)
    assert HierarchySpec(3, 1e-6).tolerance(1) == pytest.approx(1e-4)


def test_hierarchy_with_no_refinement_matches_single_run():
    fam = problem_family("local-linear", 100, 10)
    h = run_hierarchical(fam, HierarchySpec(0, 1e-8), ConstantWeight(0.5))
    s = run_fictitious_play(fam(0), ConstantWeight(0.5), 1e-8, 200)
    assert [r.gain for r in h.records] == [r.gain for r in s.records]
    np.testing.assert_array_equal(h.final.state.rho, s.state.rho)


def test_hierarchy_levels_and_warning():
    fam = problem_family("local-linear", 50, 5)
    with pytest.warns(NonConvergenceWarning):
        h = run_hierarchical(fam, HierarchySpec(2, 1e-14, k_max=3), ConstantWeight(0.5))
    assert [lv.problem.grid.n_x for lv in h.levels] == [(50,), (100,), (200,)]
    assert {r.level for r in h.records} == {0, 1, 2}
    assert not h.converged
    with warnings.catch_warnings():
        warnings.simplefilter("error", NonConvergenceWarning)
        ok = run_hierarchical(fam, HierarchySpec(1, 1e-6), ConstantWeight(0.5))
    assert ok.converged and ok.final.problem.grid.n_x == (100,)
