"""Constrained MPC engine and closed-loop analysis.

The finite-horizon problem with terminal cost x'Kx and terminal set S is
solved as a condensed QP.  The engine evaluates the receding-horizon policy,
simulates closed loops to measure realized infinite-horizon cost, and sweeps
feasibility / suboptimality maps over 2-D grids.

Infeasibility is identified with infinite cost (indicator-function semantics
of the state constraint set).
"""

from __future__ import annotations

import math
import multiprocessing
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .matcore import symmetrize
from .polytope import HPolytope, bounding_box, contains, lp_solve, maximal_invariant_set
from .qp import QpProblem, QpSolution, solve_qp
from .riccati import (
    GainPolicy,
    LqSystem,
    closed_loop_cost,
    greedy_gain,
    in_region_of_decreasing,
    iterate_bellman,
    solve_dare,
    zeta_dare,
)

__all__ = [
    "ConstrainedProblem",
    "TerminalDesign",
    "MpcController",
    "MpcStep",
    "CostMapGrid",
    "mpc_policy",
    "bellman_apply",
    "closed_loop_cost_fn",
    "approx_optimal_cost",
    "feasible_region_grid",
    "suboptimality_map",
    "boundary_points",
]

_SIM_CAP = 10_000
_APPROX_OPT_HORIZON = 100


@dataclass(frozen=True)
class ConstrainedProblem:
    """LQ problem with compact state/input constraint sets (origin interior)."""

    sys: LqSystem
    Xhat: HPolytope
    U: HPolytope

    def __post_init__(self):
        if self.Xhat.dim != self.sys.n:
            raise ValueError("state constraint dimension mismatch")
        if self.U.dim != self.sys.m:
            raise ValueError("input constraint dimension mismatch")
        for name, P in (("state", self.Xhat), ("input", self.U)):
            if not P.origin_interior():
                raise ValueError(f"{name} constraint set must contain the origin strictly")
            for k in range(P.dim):
                e = np.zeros(P.dim)
                e[k] = 1.0
                for s in (1.0, -1.0):
                    if lp_solve(s * e, P).status != "optimal":
                        raise ValueError(f"{name} constraint set must be bounded")

    @property
    def box_radius(self) -> float:
        lo, hi = bounding_box(self.Xhat)
        return float(np.max(np.maximum(np.abs(lo), np.abs(hi))))


@dataclass(frozen=True)
class TerminalDesign:
    """Terminal ingredients (K, S) with the local control law that renders S
    invariant, and the amplification parameter K was designed with."""

    K: np.ndarray
    S: HPolytope
    gain: GainPolicy
    zeta: float = 1.0

    @classmethod
    def for_optimal_cost(cls, prob: ConstrainedProblem) -> "TerminalDesign":
        """K = K* with S the maximal admissible invariant set of u = L*x."""
        Kstar, Lstar = solve_dare(prob.sys)
        S = maximal_invariant_set(Lstar.closed_loop, prob.Xhat, prob.U, Lstar)
        return cls(K=Kstar, S=S, gain=Lstar, zeta=1.0)

    @classmethod
    def for_amplified_cost(cls, prob: ConstrainedProblem, zeta: float) -> "TerminalDesign":
        """K solves the input-weight-amplified fixed point; S is invariant
        under the gain that K is optimal for (the amplified problem's greedy
        gain), which keeps x'Kx a certified decrease function on S:
        D'KD + Q + L'RL = K - (zeta-1) L'RL <= K."""
        sys = prob.sys
        K = zeta_dare(sys, zeta)
        amplified = sys.with_input_weight(zeta * sys.R)
        gain = greedy_gain(amplified, K)
        S = maximal_invariant_set(gain.closed_loop, prob.Xhat, prob.U, gain)
        return cls(K=K, S=S, gain=gain, zeta=float(zeta))

    def validate(self, prob: ConstrainedProblem, n_samples: int = 200, seed: int = 0) -> None:
        """Structural checks: S inside Xhat, S invariant under the gain with
        admissible inputs, K in the unconstrained region of decreasing."""
        from .polytope import sample_interior

        for i in range(prob.Xhat.nrows):
            r = lp_solve(prob.Xhat.H[i], self.S)
            if r.status != "optimal" or r.value > prob.Xhat.h[i] + 1e-7:
                raise ValueError("terminal set is not contained in the state constraints")
        if not in_region_of_decreasing(prob.sys, self.K):
            raise ValueError("terminal cost is outside the region of decreasing")
        D = self.gain.closed_loop
        X = sample_interior(self.S, n_samples, seed=seed)
        for x in X:
            if not contains(self.S, D @ x, tol=1e-7):
                raise ValueError("terminal set is not invariant under its gain")
            if not contains(prob.U, self.gain.L @ x, tol=1e-7):
                raise ValueError("terminal gain violates input constraints on S")


@dataclass(frozen=True)
class MpcStep:
    feasible: bool
    u0: Optional[np.ndarray]
    value: float
    z: Optional[np.ndarray] = field(default=None, repr=False)
    x_terminal: Optional[np.ndarray] = field(default=None, repr=False)


class MpcController:
    """Precondensed ell-step MPC for one (problem, design, horizon) triple.

    The QP blocks that do not depend on the initial state (Hessian,
    constraint normals, prediction maps) are built once; each query assembles
    only the affine parts.  When the unconstrained finite-horizon solution
    happens to satisfy every constraint it is returned directly (it is then
    the QP optimum by strict convexity), which makes closed-loop tails cheap.
    """

    def __init__(self, prob: ConstrainedProblem, design: TerminalDesign, ell: int):
        if ell < 1:
            raise ValueError("horizon must be >= 1")
        self.prob = prob
        self.design = design
        self.ell = ell
        sys = prob.sys
        n, m = sys.n, sys.m
        A, B = sys.A, sys.B
        K = symmetrize(design.K)

        Apow = [np.eye(n)]
        for _ in range(ell):
            Apow.append(A @ Apow[-1])
        Phi = np.vstack(Apow)
        Gamma = np.zeros(((ell + 1) * n, ell * m))
        for k in range(1, ell + 1):
            for j in range(k):
                Gamma[k * n : (k + 1) * n, j * m : (j + 1) * m] = Apow[k - 1 - j] @ B
        Qbar = np.zeros(((ell + 1) * n, (ell + 1) * n))
        for k in range(ell):
            Qbar[k * n : (k + 1) * n, k * n : (k + 1) * n] = sys.Q
        Qbar[ell * n :, ell * n :] = K
        Rbar = np.kron(np.eye(ell), sys.R)

        self._P = 2.0 * (Gamma.T @ Qbar @ Gamma + Rbar)
        self._q_map = 2.0 * (Gamma.T @ Qbar @ Phi)  # q = q_map @ x0
        self._off_map = Phi.T @ Qbar @ Phi  # offset = x0' off_map x0

        Xhat, U, S = prob.Xhat, prob.U, design.S
        G_rows, gmap_rows, gconst_rows = [], [], []
        for k in range(ell):
            sl = slice(k * n, (k + 1) * n)
            G_rows.append(Xhat.H @ Gamma[sl])
            gmap_rows.append(-Xhat.H @ Phi[sl])
            gconst_rows.append(Xhat.h)
        for k in range(ell):
            sel = np.zeros((m, ell * m))
            sel[:, k * m : (k + 1) * m] = np.eye(m)
            G_rows.append(U.H @ sel)
            gmap_rows.append(np.zeros((U.nrows, n)))
            gconst_rows.append(U.h)
        sl = slice(ell * n, (ell + 1) * n)
        G_rows.append(S.H @ Gamma[sl])
        gmap_rows.append(-S.H @ Phi[sl])
        gconst_rows.append(S.h)
        self._G = np.vstack(G_rows)
        self._g_map = np.vstack(gmap_rows)  # g = g_const + g_map @ x0
        self._g_const = np.concatenate(gconst_rows)
        self._Gamma = Gamma
        self._Phi = Phi

        # unconstrained finite-horizon solution: gain ladder and value matrix
        ladder = []
        Kj = K
        for _ in range(ell):
            ladder.append(greedy_gain(sys, Kj).L)
            Kj = iterate_bellman(sys, Kj, 1)
        self._gain_ladder = ladder  # ladder[j] is greedy at F^j(K)
        self._value_matrix = Kj  # F^ell(K)
        self._Kbar = iterate_bellman(sys, K, ell - 1)
        self._policy_gain = greedy_gain(sys, self._Kbar)
        self._tail_cost: Optional[np.ndarray] = None

    @property
    def policy_gain(self) -> GainPolicy:
        """Greedy gain at F^(ell-1)(K): the unconstrained receding-horizon law."""
        return self._policy_gain

    @property
    def tail_cost(self) -> np.ndarray:
        """Infinite-horizon cost matrix of the unconstrained policy gain."""
        if self._tail_cost is None:
            self._tail_cost = closed_loop_cost(self.prob.sys, self._policy_gain)
        return self._tail_cost

    def _unconstrained_candidate(self, x0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        sys = self.prob.sys
        z = np.empty(self.ell * sys.m)
        x = x0
        for k in range(self.ell):
            u = self._gain_ladder[self.ell - 1 - k] @ x
            z[k * sys.m : (k + 1) * sys.m] = u
            x = sys.A @ x + sys.B @ u
        return z, x

    def shift_candidate(self, step: MpcStep) -> Optional[np.ndarray]:
        """Horizon-shifted feasible candidate for the successor state: drop
        the first control, append the terminal gain's move (feasible because
        the terminal set is invariant under that gain)."""
        if step.z is None or step.x_terminal is None:
            return None
        m = self.prob.sys.m
        out = np.empty_like(step.z)
        out[:-m] = step.z[m:]
        out[-m:] = self.design.gain.L @ step.x_terminal
        return out

    def qp_at(self, x0) -> QpProblem:
        x0 = np.asarray(x0, dtype=float).ravel()
        return QpProblem(
            P=self._P,
            q=self._q_map @ x0,
            G=self._G,
            g=self._g_const + self._g_map @ x0,
            objective_offset=float(x0 @ self._off_map @ x0),
        )

    def solve(self, x0, z_warm: Optional[np.ndarray] = None) -> MpcStep:
        x0 = np.asarray(x0, dtype=float).ravel()
        g = self._g_const + self._g_map @ x0
        z_unc, x_term = self._unconstrained_candidate(x0)
        if np.all(self._G @ z_unc <= g + 1e-10):
            value = float(x0 @ self._value_matrix @ x0)
            m = self.prob.sys.m
            return MpcStep(True, z_unc[:m].copy(), value, z_unc, x_term)
        qp = QpProblem(
            P=self._P, q=self._q_map @ x0, G=self._G, g=g,
            objective_offset=float(x0 @ self._off_map @ x0),
        )
        sol: QpSolution = solve_qp(qp, z0=z_warm)
        if sol.status == "infeasible":
            return MpcStep(False, None, math.inf, None)
        if sol.status != "optimal":
            raise ArithmeticError(
                f"QP did not converge (status {sol.status}, "
                f"primal {sol.primal_residual:.2e}, dual {sol.dual_residual:.2e})"
            )
        n, m = self.prob.sys.n, self.prob.sys.m
        sl = slice(self.ell * n, (self.ell + 1) * n)
        x_term = self._Phi[sl] @ x0 + self._Gamma[sl] @ sol.z
        return MpcStep(True, sol.z[:m].copy(), sol.objective, sol.z, x_term)

    def simulate_cost(self, x0, ball_tol: Optional[float] = None) -> float:
        """Realized infinite-horizon closed-loop cost from x0 (inf if any
        step is infeasible).

        Simulates x+ = Ax + B u(x) accumulating stage costs until the state
        is inside the terminal set with ||x|| below a small threshold, then
        adds the quadratic tail of the unconstrained receding-horizon gain.
        """
        sys = self.prob.sys
        x = np.asarray(x0, dtype=float).ravel()
        if ball_tol is None:
            ball_tol = 1e-6 * self.prob.box_radius
        total = 0.0
        prev: Optional[MpcStep] = None
        for _ in range(_SIM_CAP):
            if contains(self.design.S, x) and float(np.linalg.norm(x)) <= ball_tol:
                return total + float(x @ self.tail_cost @ x)
            warm = self.shift_candidate(prev) if prev is not None else None
            step = self.solve(x, z_warm=warm)
            if not step.feasible:
                return math.inf
            u = step.u0
            total += float(x @ sys.Q @ x + u @ sys.R @ u)
            x = sys.A @ x + sys.B @ u
            prev = step
        raise ArithmeticError(
            f"closed loop did not reach the terminal ball in {_SIM_CAP} steps"
        )

    def simulate_trajectory(self, x0, max_steps: int = 200) -> list[dict]:
        """Step records (k, x, u, stage cost, horizon value) for exactly
        max_steps steps, stopping early only on an infeasible step."""
        sys = self.prob.sys
        x = np.asarray(x0, dtype=float).ravel()
        out = []
        prev: Optional[MpcStep] = None
        for k in range(max_steps):
            warm = self.shift_candidate(prev) if prev is not None else None
            step = self.solve(x, z_warm=warm)
            if not step.feasible:
                out.append({"k": k, "x": x.copy(), "u": None, "stage": math.inf,
                            "value": math.inf, "feasible": False})
                break
            u = step.u0
            out.append({
                "k": k, "x": x.copy(), "u": u.copy(),
                "stage": float(x @ sys.Q @ x + u @ sys.R @ u),
                "value": step.value, "feasible": True,
            })
            x = sys.A @ x + sys.B @ u
            prev = step
        return out


_controller_cache: dict[tuple[int, int, int], MpcController] = {}


def _controller(prob: ConstrainedProblem, design: TerminalDesign, ell: int) -> MpcController:
    key = (id(prob), id(design), ell)
    ctl = _controller_cache.get(key)
    if ctl is None:
        ctl = MpcController(prob, design, ell)
        _controller_cache[key] = ctl
    return ctl


def mpc_policy(prob: ConstrainedProblem, design: TerminalDesign, ell: int, x) -> MpcStep:
    """First optimal control and optimal value of the ell-step QP at x.

    Infeasible x yields MpcStep(feasible=False, value=inf).
    """
    return _controller(prob, design, ell).solve(x)


def bellman_apply(prob: ConstrainedProblem, design: TerminalDesign, x) -> float:
    """One-step Bellman value: stage cost plus terminal cost after one move.

    min_u  x'Qx + u'Ru + (Ax+Bu)'K(Ax+Bu)  s.t. u in U, Ax+Bu in S,
    with value +inf when x is outside the state constraints or no u is
    feasible.
    """
    return _controller(prob, design, 1).solve(x).value


def closed_loop_cost_fn(prob: ConstrainedProblem, design: TerminalDesign, ell: int, x0) -> float:
    """Realized cost of the ell-step receding-horizon policy from x0."""
    return _controller(prob, design, ell).simulate_cost(x0)


def approx_optimal_cost(prob: ConstrainedProblem, design: TerminalDesign, x0) -> float:
    """Upper approximation of the optimal cost: the ell=100 closed loop."""
    return _controller(prob, design, _APPROX_OPT_HORIZON).simulate_cost(x0)


@dataclass
class CostMapGrid:
    """Row-major grid of feasibility verdicts and costs over a 2-D box."""

    xs: np.ndarray
    ys: np.ndarray
    feasible: np.ndarray  # bool (len(ys), len(xs))
    cost: np.ndarray  # float, +inf where infeasible
    rel_gap: np.ndarray  # float, NaN where not computed
    meta: dict

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            kv = ";".join(f"{k}={v}" for k, v in sorted(self.meta.items()))
            f.write(f"# {kv}\n")
            f.write("x1,x2,feasible,cost,rel_gap\n")
            for iy, y in enumerate(self.ys):
                for ix, x in enumerate(self.xs):
                    c = self.cost[iy, ix]
                    r = self.rel_gap[iy, ix]
                    f.write(
                        f"{x:.12g},{y:.12g},{int(self.feasible[iy, ix])},"
                        f"{c:.12g},{r:.12g}\n"
                    )


def _grid_axes(prob: ConstrainedProblem, grid_spec) -> tuple[np.ndarray, np.ndarray]:
    if prob.sys.n != 2:
        raise ValueError("grid sweeps are implemented for 2-D state spaces")
    resolution = int(grid_spec.get("resolution", 101))
    bounds = grid_spec.get("bounds")
    if bounds is None:
        lo, hi = bounding_box(prob.Xhat)
    else:
        lo, hi = np.asarray(bounds[0], float), np.asarray(bounds[1], float)
    xs = np.linspace(lo[0], hi[0], resolution)
    ys = np.linspace(lo[1], hi[1], resolution)
    return xs, ys


# Grid sweeps run as a map over rows.  Each row is independent (pure QP
# solves), so the map may be executed by a process pool; rows are reduced in
# index order, making the output identical for any worker count.
_ROW_STATE: dict = {}


def _init_row_state(prob, design, ell, xs, ys, kind) -> None:
    os.environ.setdefault("OMP_NUM_THREADS", "1")
    _ROW_STATE["ctl"] = MpcController(prob, design, ell)
    _ROW_STATE["ctl_opt"] = (
        MpcController(prob, design, _APPROX_OPT_HORIZON) if kind == "submap" else None
    )
    _ROW_STATE["xs"] = xs
    _ROW_STATE["ys"] = ys
    _ROW_STATE["kind"] = kind


def _sweep_row(iy: int):
    ctl: MpcController = _ROW_STATE["ctl"]
    xs = _ROW_STATE["xs"]
    y = _ROW_STATE["ys"][iy]
    feas = np.zeros(xs.size, dtype=bool)
    cost = np.full(xs.size, math.inf)
    rel = np.full(xs.size, math.nan)
    if _ROW_STATE["kind"] == "region":
        for ix, x in enumerate(xs):
            step = ctl.solve(np.array([x, y]))
            feas[ix] = step.feasible
            if step.feasible:
                cost[ix] = step.value
        return iy, feas, cost, rel
    ctl_opt: MpcController = _ROW_STATE["ctl_opt"]
    for ix, x in enumerate(xs):
        pt = np.array([x, y])
        J = ctl.simulate_cost(pt)
        feas[ix] = math.isfinite(J)
        cost[ix] = J
        if not math.isfinite(J) or (x == 0.0 and y == 0.0):
            continue
        Jopt = ctl_opt.simulate_cost(pt)
        if Jopt > 0 and math.isfinite(Jopt):
            rel[ix] = abs(J - Jopt) / Jopt
    return iy, feas, cost, rel


def _resolve_workers(workers: Optional[int]) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("LQMPC_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _run_sweep(prob, design, ell, grid_spec, kind, workers) -> CostMapGrid:
    xs, ys = _grid_axes(prob, grid_spec or {})
    nw = min(_resolve_workers(workers), ys.size)
    rows: list
    if nw <= 1:
        _init_row_state(prob, design, ell, xs, ys, kind)
        try:
            rows = [_sweep_row(iy) for iy in range(ys.size)]
        finally:
            _ROW_STATE.clear()
    else:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(
            nw, initializer=_init_row_state,
            initargs=(prob, design, ell, xs, ys, kind),
        ) as pool:
            rows = pool.map(_sweep_row, range(ys.size), chunksize=1)
    nf = np.zeros((ys.size, xs.size), dtype=bool)
    cost = np.full((ys.size, xs.size), math.inf)
    rel = np.full((ys.size, xs.size), math.nan)
    for iy, f, c, r in sorted(rows, key=lambda t: t[0]):
        nf[iy], cost[iy], rel[iy] = f, c, r
    return CostMapGrid(
        xs=xs, ys=ys, feasible=nf, cost=cost, rel_gap=rel,
        meta={"kind": kind, "ell": ell, "zeta": design.zeta, "resolution": xs.size},
    )


def feasible_region_grid(
    prob: ConstrainedProblem, design: TerminalDesign, ell: int, grid_spec=None,
    workers: Optional[int] = None,
) -> CostMapGrid:
    """Feasibility verdict (and QP value) of the ell-step problem per grid point."""
    return _run_sweep(prob, design, ell, grid_spec, "region", workers)


def suboptimality_map(
    prob: ConstrainedProblem, design: TerminalDesign, ell: int, grid_spec=None,
    workers: Optional[int] = None,
) -> CostMapGrid:
    """Relative closed-loop suboptimality |J_pol - J_opt| / J_opt per grid point.

    J_pol is the realized ell-step receding-horizon cost; J_opt the ell=100
    approximation of the optimal cost.  The origin cell is excluded (0/0).
    """
    return _run_sweep(prob, design, ell, grid_spec, "submap", workers)


def boundary_points(
    prob: ConstrainedProblem,
    design: TerminalDesign,
    ell: int,
    grid: CostMapGrid,
    bisections: int = 5,
) -> np.ndarray:
    """Feasibility-boundary refinement along grid edges (bisection)."""
    ctl = _controller(prob, design, ell)

    def feas(pt) -> bool:
        return ctl.solve(pt).feasible

    pts = []
    F = grid.feasible
    for iy in range(F.shape[0]):
        for ix in range(F.shape[1]):
            for dy, dx in ((0, 1), (1, 0)):
                jy, jx = iy + dy, ix + dx
                if jy >= F.shape[0] or jx >= F.shape[1]:
                    continue
                if F[iy, ix] == F[jy, jx]:
                    continue
                a = np.array([grid.xs[ix], grid.ys[iy]])
                b = np.array([grid.xs[jx], grid.ys[jy]])
                fa = F[iy, ix]
                for _ in range(bisections):
                    mid = 0.5 * (a + b)
                    if feas(mid) == fa:
                        a = mid
                    else:
                        b = mid
                pts.append(0.5 * (a + b))
    return np.array(pts) if pts else np.zeros((0, 2))
