"""Constrained MPC engine: policy evaluation, the function-space Bellman
step, closed-loop costs, and the grid sweeps."""

import math

import numpy as np
import pytest

from lqmpc import (
    ConstrainedProblem,
    HPolytope,
    MpcController,
    TerminalDesign,
    approx_optimal_cost,
    bellman_apply,
    closed_loop_cost,
    closed_loop_cost_fn,
    contains,
    feasible_region_grid,
    greedy_gain,
    in_region_of_decreasing,
    iterate_bellman,
    mpc_policy,
    sample_interior,
    solve_qp,
    suboptimality_map,
)
from _checks import check_policy_cost_below_value


SMALL_GRID = {"resolution": 21}


# ---------------------------------------------------------------------------
# problem and design validation
# ---------------------------------------------------------------------------

def test_problem_rejects_unbounded(di2d_sys):
    halfplane = HPolytope(np.array([[1.0, 0.0]]), np.array([5.0]))
    with pytest.raises(ValueError):
        ConstrainedProblem(di2d_sys, halfplane, HPolytope.symmetric_box([1.0]))


def test_problem_rejects_origin_on_boundary(di2d_sys):
    shifted = HPolytope(
        np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]),
        np.array([5.0, 0.0, 5.0, 5.0]),
    )
    with pytest.raises(ValueError):
        ConstrainedProblem(di2d_sys, shifted, HPolytope.symmetric_box([1.0]))


def test_design_validates(di2d_prob, di2d_design_eff, di2d_design_opt):
    di2d_design_eff.validate(di2d_prob)
    di2d_design_opt.validate(di2d_prob)


def test_design_terminal_matrix_in_region(di2d_sys, di2d_design_eff):
    assert in_region_of_decreasing(di2d_sys, di2d_design_eff.K)


def test_design_terminal_set_inside_state_set(di2d_prob, di2d_design_eff):
    from lqmpc import vertices_2d

    for v in vertices_2d(di2d_design_eff.S):
        assert contains(di2d_prob.Xhat, v)


def test_design_zeta_provenance(di2d_design_eff, di2d_design_opt):
    assert di2d_design_opt.zeta == 1.0
    assert di2d_design_eff.zeta > 1.0


# ---------------------------------------------------------------------------
# mpc_policy
# ---------------------------------------------------------------------------

def test_policy_at_origin(di2d_prob, di2d_design_eff):
    step = mpc_policy(di2d_prob, di2d_design_eff, 3, np.zeros(2))
    assert step.feasible
    np.testing.assert_allclose(step.u0, np.zeros(1), atol=1e-9)
    assert step.value == pytest.approx(0.0, abs=1e-12)


def test_policy_interior_matches_gain(di2d_prob, di2d_design_eff, di2d_sys):
    x = np.array([0.2, -0.15])
    step = mpc_policy(di2d_prob, di2d_design_eff, 3, x)
    Kbar = iterate_bellman(di2d_sys, di2d_design_eff.K, 2)
    expected = greedy_gain(di2d_sys, Kbar).L @ x
    assert step.feasible
    assert abs(step.u0[0] - expected[0]) <= 1e-6


def test_policy_infeasible_far_out(di2d_prob, di2d_design_eff):
    step = mpc_policy(di2d_prob, di2d_design_eff, 3, np.array([0.0, 4.9]))
    assert not step.feasible
    assert math.isinf(step.value)


def test_policy_deterministic(di2d_prob, di2d_design_eff):
    x = np.array([-3.0, 1.0])
    a = mpc_policy(di2d_prob, di2d_design_eff, 3, x)
    b = mpc_policy(di2d_prob, di2d_design_eff, 3, x)
    assert a.value == b.value
    np.testing.assert_array_equal(a.u0, b.u0)


def test_policy_value_matches_raw_qp(di2d_prob, di2d_design_eff):
    # dual route: the controller's value equals an independent solve of the
    # condensed program it emits
    ctl = MpcController(di2d_prob, di2d_design_eff, 3)
    x = np.array([-4.0, 1.8])
    step = ctl.solve(x)
    sol = solve_qp(ctl.qp_at(x))
    assert step.feasible and sol.status == "optimal"
    assert step.value == pytest.approx(sol.objective, rel=1e-9)


# ---------------------------------------------------------------------------
# bellman_apply
# ---------------------------------------------------------------------------

def test_bellman_apply_origin(di2d_prob, di2d_design_eff):
    assert bellman_apply(di2d_prob, di2d_design_eff, np.zeros(2)) == pytest.approx(
        0.0, abs=1e-12
    )


def test_bellman_apply_outside_state_set(di2d_prob, di2d_design_eff):
    assert math.isinf(bellman_apply(di2d_prob, di2d_design_eff, np.array([5.5, 0.0])))


def test_quadratic_dominates_bellman_on_terminal_set(di2d_prob, di2d_design_eff):
    """Terminal design certificate: (TJ)(x) <= x'Kx on 500 sampled x in S."""
    K = di2d_design_eff.K
    X = sample_interior(di2d_design_eff.S, 500, seed=21)
    worst = -np.inf
    for x in X:
        tj = bellman_apply(di2d_prob, di2d_design_eff, x)
        jx = x @ K @ x
        worst = max(worst, tj - jx)
        assert tj <= jx + 1e-7, f"decrease violated at {x}: TJ={tj} J={jx}"
    assert worst <= 1e-7


# ---------------------------------------------------------------------------
# closed-loop cost and the optimal-cost approximation
# ---------------------------------------------------------------------------

def test_cost_fn_origin(di2d_prob, di2d_design_eff):
    assert closed_loop_cost_fn(di2d_prob, di2d_design_eff, 3, np.zeros(2)) == 0.0


def test_cost_fn_infeasible(di2d_prob, di2d_design_eff):
    assert math.isinf(
        closed_loop_cost_fn(di2d_prob, di2d_design_eff, 3, np.array([0.0, 4.9]))
    )


def test_policy_cost_below_horizon_value(di2d_prob, di2d_design_eff):
    """Closed-loop cost never exceeds the horizon value (500 states)."""
    msg = check_policy_cost_below_value(di2d_prob, di2d_design_eff, 3, n_states=500)
    assert "500" in msg


def test_longer_horizon_dominates(di2d_prob, di2d_design_eff):
    # the ell=100 approximation of the optimal cost is never worse than the
    # ell=3 policy cost
    X = sample_interior(di2d_prob.Xhat, 60, seed=33)
    checked = 0
    for x in X:
        j3 = closed_loop_cost_fn(di2d_prob, di2d_design_eff, 3, x)
        if math.isinf(j3):
            continue
        j_opt = approx_optimal_cost(di2d_prob, di2d_design_eff, x)
        assert j_opt <= j3 + 1e-7
        checked += 1
    assert checked >= 20


def test_approx_optimal_origin(di2d_prob, di2d_design_eff):
    assert approx_optimal_cost(di2d_prob, di2d_design_eff, np.zeros(2)) == 0.0


def test_tail_truncation_consistency(di2d_prob, di2d_design_eff, di2d_sys):
    """Where the tail-truncation rule fires (inside S, near the origin) the
    loop follows the unconstrained gain and the accumulated cost matches the
    quadratic tail within 1%.

    Note the rule triggers at x in S with a tiny norm; at S's outer corners
    the policy gain can still saturate the input, so the quadratic is only
    exact deep inside.
    """
    ell = 3
    ctl = MpcController(di2d_prob, di2d_design_eff, ell)
    Kbar = iterate_bellman(di2d_sys, di2d_design_eff.K, ell - 1)
    gain = greedy_gain(di2d_sys, Kbar)
    K_tail = closed_loop_cost(di2d_sys, gain)
    # scale samples toward the origin so every input along the tail is interior
    X = 0.2 * sample_interior(di2d_design_eff.S, 40, seed=8)
    for x in X:
        total = 0.0
        xt = x.copy()
        for _ in range(400):
            step = ctl.solve(xt)
            assert step.feasible
            u = step.u0
            assert contains(di2d_prob.U, u)
            total += xt @ di2d_sys.Q @ xt + u @ di2d_sys.R @ u
            xt = di2d_sys.A @ xt + di2d_sys.B @ u
            if np.linalg.norm(xt) < 1e-9:
                break
        tail = x @ K_tail @ x
        if tail > 1e-12:
            assert total == pytest.approx(tail, rel=0.01)


def test_value_decrease_along_loop(di2d_prob, di2d_design_eff, di2d_sys):
    ell = 3
    ctl = MpcController(di2d_prob, di2d_design_eff, ell)
    x = np.array([-4.0, 1.8])
    prev = None
    for _ in range(40):
        step = ctl.solve(x)
        assert step.feasible
        stage = x @ di2d_sys.Q @ x + step.u0 @ di2d_sys.R @ step.u0
        if prev is not None:
            # standard MPC decrease: V(x+) <= V(x) - stage(x)
            assert step.value <= prev - prev_stage + 1e-6
        prev, prev_stage = step.value, stage
        x = di2d_sys.A @ x + di2d_sys.B @ step.u0


def test_recursive_feasibility_from_grid(di2d_prob, di2d_design_eff, di2d_sys):
    grid = feasible_region_grid(di2d_prob, di2d_design_eff, 3, grid_spec=SMALL_GRID)
    ctl = MpcController(di2d_prob, di2d_design_eff, 3)
    rng = np.random.default_rng(0)
    pts = [
        (x, y)
        for iy, y in enumerate(grid.ys)
        for ix, x in enumerate(grid.xs)
        if grid.feasible[iy, ix]
    ]
    for x0 in rng.choice(np.asarray(pts), size=25, replace=False):
        x = np.array(x0, dtype=float)
        for _ in range(60):
            step = ctl.solve(x)
            assert step.feasible, f"lost feasibility from {x0} at {x}"
            x = di2d_sys.A @ x + di2d_sys.B @ step.u0


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

def test_region_points_inside_state_set(di2d_prob, di2d_design_eff):
    grid = feasible_region_grid(di2d_prob, di2d_design_eff, 3, grid_spec=SMALL_GRID)
    for iy, y in enumerate(grid.ys):
        for ix, x in enumerate(grid.xs):
            if grid.feasible[iy, ix]:
                assert contains(di2d_prob.Xhat, np.array([x, y]))
            else:
                assert math.isinf(grid.cost[iy, ix])


def test_region_amplified_contains_optimal(di2d_prob, di2d_design_eff,
                                           di2d_design_opt):
    g_eff = feasible_region_grid(di2d_prob, di2d_design_eff, 3, grid_spec=SMALL_GRID)
    g_opt = feasible_region_grid(di2d_prob, di2d_design_opt, 3, grid_spec=SMALL_GRID)
    assert not (g_opt.feasible & ~g_eff.feasible).any()
    assert g_eff.feasible.sum() > g_opt.feasible.sum()


def test_region_shrunken_terminal_subset(di2d_prob, di2d_design_opt):
    # scaling the terminal set toward the origin keeps it invariant; the
    # region stays inside the state box
    d = di2d_design_opt
    tiny = TerminalDesign(
        K=d.K, S=HPolytope(d.S.H, 1e-6 * d.S.h), gain=d.gain, zeta=d.zeta
    )
    grid = feasible_region_grid(di2d_prob, tiny, 8, grid_spec={"resolution": 11})
    assert grid.feasible.any()
    for iy, y in enumerate(grid.ys):
        for ix, x in enumerate(grid.xs):
            if grid.feasible[iy, ix]:
                assert contains(di2d_prob.Xhat, np.array([x, y]))


def test_submap_properties(di2d_prob, di2d_design_eff):
    sub = suboptimality_map(di2d_prob, di2d_design_eff, 3, grid_spec=SMALL_GRID)
    gaps = sub.rel_gap[np.isfinite(sub.rel_gap)]
    assert gaps.size > 0
    assert (gaps >= -1e-9).all()
    # origin cell is excluded from the relative map
    iy0 = int(np.argmin(np.abs(sub.ys)))
    ix0 = int(np.argmin(np.abs(sub.xs)))
    assert math.isnan(sub.rel_gap[iy0, ix0])
    # the largest loss sits near the origin
    iy, ix = np.unravel_index(np.nanargmax(np.where(np.isfinite(sub.rel_gap),
                                                    sub.rel_gap, -np.inf)),
                              sub.rel_gap.shape)
    assert np.hypot(sub.xs[ix], sub.ys[iy]) <= 2.5


def test_grid_csv_round_trip(di2d_prob, di2d_design_eff, tmp_path):
    grid = feasible_region_grid(
        di2d_prob, di2d_design_eff, 3, grid_spec={"resolution": 9}
    )
    out = tmp_path / "grid.csv"
    grid.to_csv(out)
    lines = out.read_text().splitlines()
    assert lines[0].startswith("#")
    assert "ell=3" in lines[0]
    assert lines[1] == "x1,x2,feasible,cost,rel_gap"
    assert len(lines) == 2 + 9 * 9
    # row-major: first data row is the lower-left corner
    assert lines[2].startswith("-5,-5,")


def test_grid_parallel_matches_serial(di2d_prob, di2d_design_eff):
    a = feasible_region_grid(
        di2d_prob, di2d_design_eff, 3, grid_spec={"resolution": 11}, workers=1
    )
    b = feasible_region_grid(
        di2d_prob, di2d_design_eff, 3, grid_spec={"resolution": 11}, workers=2
    )
    np.testing.assert_array_equal(a.feasible, b.feasible)
    np.testing.assert_array_equal(a.cost, b.cost)


def test_grid_requires_2d(ac4d_prob, ac4d_design_eff):
    with pytest.raises(ValueError):
        feasible_region_grid(ac4d_prob, ac4d_design_eff, 2, grid_spec=SMALL_GRID)


# ---------------------------------------------------------------------------
# trajectory simulation
# ---------------------------------------------------------------------------

def test_trajectory_from_origin(di2d_prob, di2d_design_eff):
    ctl = MpcController(di2d_prob, di2d_design_eff, 3)
    rows = ctl.simulate_trajectory(np.zeros(2), 10)
    assert len(rows) == 10
    for r in rows:
        assert r["feasible"]
        np.testing.assert_allclose(r["x"], np.zeros(2), atol=1e-12)
        if r["u"] is not None:
            np.testing.assert_allclose(r["u"], np.zeros(1), atol=1e-12)


def test_trajectory_records_fields(di2d_prob, di2d_design_eff):
    ctl = MpcController(di2d_prob, di2d_design_eff, 3)
    rows = ctl.simulate_trajectory(np.array([-4.0, 1.8]), 12)
    assert len(rows) == 12
    assert rows[0]["k"] == 0
    assert {"k", "x", "u", "stage", "value", "feasible"} <= set(rows[0])
    values = [r["value"] for r in rows]
    assert values == sorted(values, reverse=True)  # decreasing along the loop
