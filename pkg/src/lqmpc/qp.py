"""Dense convex quadratic programming and the condensed MPC formulation.

minimize    0.5 z'Pz + q'z         (+ a fixed offset, for reporting)
subject to  G z <= g,   E z = e

The solver is a primal active-set method for (strictly) convex dense
problems: a Phase-1 LP supplies a feasible start (or a Farkas certificate of
infeasibility), then equality-constrained subproblems are solved on a working
set until all multipliers are nonnegative.  Optimal returns carry certified
KKT residuals.

`condense_mpc` eliminates the states of the finite-horizon constrained LQ
problem by forward substitution, producing a dense QP in the stacked controls
z = (u_0, ..., u_{ell-1}).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import qr as scipy_qr
from scipy.optimize import linprog

from .matcore import min_eigenvalue, symmetrize
from .polytope import HPolytope
from .riccati import LqSystem

__all__ = [
    "QP_FEAS_TOL",
    "QP_DUAL_TOL",
    "QP_COMP_TOL",
    "QpProblem",
    "QpSolution",
    "solve_qp",
    "condense_mpc",
]

QP_FEAS_TOL = 1e-8
QP_DUAL_TOL = 1e-8
QP_COMP_TOL = 1e-8

_TIKHONOV = 1e-10
_ACT_TOL = 1e-9


@dataclass(frozen=True)
class QpProblem:
    """Dense convex QP data; E/e may be empty (shape (0, n))."""

    P: np.ndarray
    q: np.ndarray
    G: np.ndarray
    g: np.ndarray
    E: np.ndarray = field(default=None)  # type: ignore[assignment]
    e: np.ndarray = field(default=None)  # type: ignore[assignment]
    objective_offset: float = 0.0

    def __post_init__(self):
        P = symmetrize(self.P)
        q = np.asarray(self.q, dtype=float).ravel()
        n = q.size
        if P.shape != (n, n):
            raise ValueError(f"P shape {P.shape} does not match q length {n}")
        G = np.zeros((0, n)) if self.G is None else np.atleast_2d(np.asarray(self.G, float))
        g = np.zeros(0) if self.g is None else np.asarray(self.g, float).ravel()
        if G.size == 0:
            G = G.reshape(0, n)
        E = np.zeros((0, n)) if self.E is None else np.atleast_2d(np.asarray(self.E, float))
        e = np.zeros(0) if self.e is None else np.asarray(self.e, float).ravel()
        if E.size == 0:
            E = E.reshape(0, n)
        if G.shape != (g.size, n):
            raise ValueError("inconsistent inequality dimensions")
        if E.shape != (e.size, n):
            raise ValueError("inconsistent equality dimensions")
        if min_eigenvalue(P) < -1e-9 * max(1.0, float(np.linalg.norm(P, 2))):
            raise ValueError("P must be positive semidefinite")
        for name, val in (("P", P), ("q", q), ("G", G), ("g", g), ("E", E), ("e", e)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.q.size


@dataclass(frozen=True)
class QpSolution:
    status: str  # "optimal" | "infeasible" | "max_iter"
    z: Optional[np.ndarray]
    duals_ineq: Optional[np.ndarray]
    duals_eq: Optional[np.ndarray]
    objective: float
    primal_residual: float
    dual_residual: float
    comp_residual: float
    farkas: Optional[np.ndarray] = None  # y >= 0, G'y (+E part) = 0, g'y < 0
    regularized: bool = False
    iterations: int = 0


def _phase1(p: QpProblem) -> tuple[Optional[np.ndarray], Optional[np.ndarray]]:
    """Feasible point for {Gz<=g, Ez=e}, or (None, farkas_certificate)."""
    n = p.n
    mi = p.g.size
    if mi == 0 and p.e.size == 0:
        return np.zeros(n), None
    # min t  s.t.  Gz - t <= g,  Ez = e,  t >= 0
    c = np.r_[np.zeros(n), 1.0]
    A_ub = np.hstack([p.G, -np.ones((mi, 1))]) if mi else None
    b_ub = p.g if mi else None
    A_eq = np.hstack([p.E, np.zeros((p.e.size, 1))]) if p.e.size else None
    b_eq = p.e if p.e.size else None
    res = linprog(
        c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
        bounds=[(None, None)] * n + [(0, None)], method="highs",
    )
    if res.status != 0:
        # Inconsistent equalities without a usable ray; signal infeasible.
        return None, np.zeros(mi)
    t = res.x[-1]
    if t <= QP_FEAS_TOL:
        return res.x[:n], None
    y = -np.asarray(res.ineqlin.marginals) if mi else np.zeros(0)
    y = np.maximum(y, 0.0)
    return None, y


def _kkt_residuals(p: QpProblem, z, mu, nu) -> tuple[float, float, float]:
    r_prim = 0.0
    if p.g.size:
        r_prim = max(r_prim, float(np.max(p.G @ z - p.g)))
    if p.e.size:
        r_prim = max(r_prim, float(np.max(np.abs(p.E @ z - p.e))))
    grad = p.P @ z + p.q
    if p.g.size:
        grad = grad + p.G.T @ mu
    if p.e.size:
        grad = grad + p.E.T @ nu
    r_dual = float(np.linalg.norm(grad, np.inf)) if grad.size else 0.0
    r_comp = 0.0
    if p.g.size:
        r_comp = float(np.max(np.abs(mu * (p.G @ z - p.g))))
    return max(r_prim, 0.0), r_dual, r_comp


def _independent_rows(M: np.ndarray) -> list[int]:
    """Indices of a maximal linearly independent subset of M's rows
    (pivoted QR on the transpose)."""
    if M.shape[0] == 0:
        return []
    _, R, piv = scipy_qr(M.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] <= 0.0:
        return []
    rank = int(np.sum(diag > max(M.shape) * np.finfo(float).eps * diag[0]))
    return sorted(int(i) for i in piv[:rank])


def _null_space_step(P, grad, C, n):
    """Minimizing step restricted to {s : Cs = 0}.

    Computed through a complete QR of C', so the returned step satisfies
    C @ step = 0 to machine precision (raw KKT solves drift off the working
    set when it is large and ill-conditioned, which stalls the outer loop).
    """
    k = C.shape[0]
    if k == 0:
        Z = np.eye(n)
    else:
        Qf, _ = np.linalg.qr(C.T, mode="complete")
        Z = Qf[:, k:]
    if Z.shape[1] == 0:
        return np.zeros(n)
    H = Z.T @ P @ Z
    rhs = -(Z.T @ grad)
    try:
        y = np.linalg.solve(H, rhs)
        # one round of iterative refinement; the reduced Hessian of a long
        # condensed horizon can be very ill-conditioned
        y += np.linalg.solve(H, rhs - H @ y)
    except np.linalg.LinAlgError:
        y, *_ = np.linalg.lstsq(H, rhs, rcond=None)
    return Z @ y


def solve_qp(p: QpProblem, z0: Optional[np.ndarray] = None, max_iter: int = 0) -> QpSolution:
    """Solve the QP by a primal active-set method.

    `z0` may supply a feasible warm start (verified; ignored when violated).
    Returns status "optimal" with certified KKT residuals, "infeasible" with
    a Farkas certificate, or "max_iter" with the last iterate's residuals.
    """
    n = p.n
    P = p.P
    regularized = False
    if n and min_eigenvalue(P) < _TIKHONOV:
        P = P + _TIKHONOV * np.eye(n)
        regularized = True
    mi, me = p.g.size, p.e.size
    if max_iter <= 0:
        max_iter = 50 + 10 * (mi + me + n)

    if z0 is not None:
        z0 = np.asarray(z0, dtype=float).ravel()
        ok = z0.size == n
        if ok and mi:
            ok = bool(np.all(p.G @ z0 <= p.g + QP_FEAS_TOL))
        if ok and me:
            ok = bool(np.max(np.abs(p.E @ z0 - p.e)) <= QP_FEAS_TOL)
        if not ok:
            z0 = None
    warm = z0 is not None
    if z0 is None:
        z0, farkas = _phase1(p)
        if z0 is None:
            return QpSolution(
                status="infeasible", z=None, duals_ineq=None, duals_eq=None,
                objective=float("inf"), primal_residual=float("inf"),
                dual_residual=float("inf"), comp_residual=float("inf"),
                farkas=farkas, regularized=regularized,
            )

    z = z0.astype(float)
    # Independent equality rows (duplicates are redundant once feasibility
    # is established).
    eq_keep = _independent_rows(p.E) if me else []
    E = p.E[eq_keep] if me else p.E
    # Working-set initialization: a verified warm start is usually near the
    # optimum, so its active rows are a good guess.  A Phase-1 point is an
    # LP vertex with up to n spurious tight rows; starting empty and letting
    # the ratio test build the set is far cheaper than unwinding those.
    work: list[int] = []
    if warm:
        active = [i for i in range(mi) if p.G[i] @ z >= p.g[i] - _ACT_TOL]
        if active:
            GA = p.G[active]
            if E.shape[0]:
                # independence relative to E: test rows projected onto E's
                # null space
                Qe, _ = np.linalg.qr(E.T, mode="complete")
                Ze = Qe[:, E.shape[0]:]
                keep = _independent_rows(GA @ Ze)
            else:
                keep = _independent_rows(GA)
            work = [active[k] for k in keep]

    row_scale = np.linalg.norm(p.G, axis=1) if mi else np.zeros(0)
    mu_full = np.zeros(mi)
    nu_full = np.zeros(me)
    iters = 0
    while iters < max_iter:
        iters += 1
        C = np.vstack([E, p.G[work]]) if (E.shape[0] or work) else np.zeros((0, n))
        grad = P @ z + p.q
        step = _null_space_step(P, grad, C, n)

        at_minimizer = (
            np.linalg.norm(step, np.inf) <= 1e-11 * max(1.0, np.linalg.norm(z, np.inf))
        )
        if not at_minimizer:
            # Ratio test over rows outside the working set.  The null-space
            # step keeps working rows at equality, so any blocking row is
            # linearly independent of the working set and appended directly.
            alpha, blocker = 1.0, -1
            if mi:
                in_work = np.zeros(mi, dtype=bool)
                if work:
                    in_work[work] = True
                Gs = p.G @ step
                thresh = 1e-13 * np.maximum(1.0, row_scale * np.linalg.norm(step))
                viable = np.flatnonzero(~in_work & (Gs > thresh))
                if viable.size:
                    room = np.maximum(p.g[viable] - p.G[viable] @ z, 0.0)
                    ratios = room / Gs[viable]
                    j = int(np.argmin(ratios))
                    if ratios[j] < 1.0:
                        alpha, blocker = float(ratios[j]), int(viable[j])
            z = z + alpha * step
            if blocker >= 0:
                work.append(blocker)
                continue
            # A full (unblocked) step lands on the subproblem minimizer for
            # this working set; fall through to the multiplier check rather
            # than re-deriving stationarity numerically, which can stall on
            # ill-conditioned reduced Hessians.
            grad = P @ z + p.q

        if C.shape[0]:
            lam, *_ = np.linalg.lstsq(C.T, -grad, rcond=None)
        else:
            lam = np.zeros(0)
        lam_w = lam[E.shape[0]:]
        if lam_w.size == 0 or np.min(lam_w) >= -QP_DUAL_TOL:
            mu_full[:] = 0.0
            for idx, li in zip(work, lam_w):
                mu_full[idx] = max(li, 0.0)
            nu_full[:] = 0.0
            for idx, li in zip(eq_keep, lam[: E.shape[0]]):
                nu_full[idx] = li
            rp, rd, rc = _kkt_residuals(p, z, mu_full, nu_full)
            obj = float(0.5 * z @ p.P @ z + p.q @ z + p.objective_offset)
            return QpSolution(
                status="optimal", z=z, duals_ineq=mu_full, duals_eq=nu_full,
                objective=obj, primal_residual=rp, dual_residual=rd,
                comp_residual=rc, regularized=regularized, iterations=iters,
            )
        work.pop(int(np.argmin(lam_w)))

    mu_full[:] = 0.0
    nu_full[:] = 0.0
    rp, rd, rc = _kkt_residuals(p, z, mu_full, nu_full)
    return QpSolution(
        status="max_iter", z=z, duals_ineq=mu_full, duals_eq=nu_full,
        objective=float(0.5 * z @ p.P @ z + p.q @ z + p.objective_offset),
        primal_residual=rp, dual_residual=rd, comp_residual=rc,
        regularized=regularized, iterations=iters,
    )


def condense_mpc(
    sys: LqSystem,
    Xhat: HPolytope,
    U: HPolytope,
    S: HPolytope,
    K,
    ell: int,
    x0,
) -> QpProblem:
    """Dense QP of the ell-step constrained LQ problem in z = (u_0..u_{ell-1}).

    States are eliminated: x_k = A^k x0 + sum_j A^{k-1-j} B u_j.  The QP
    objective (including its reported offset) equals

        sum_{k=0}^{ell-1} (x_k'Q x_k + u_k'R u_k) + x_ell' K x_ell,

    and the constraints encode x_k in Xhat for k = 0..ell-1, u_k in U, and
    x_ell in S.  An x0 outside Xhat yields an infeasible QP through the k=0
    constraint row (no special-casing).
    """
    if ell < 1:
        raise ValueError("horizon must be >= 1")
    x0 = np.asarray(x0, dtype=float).ravel()
    n, m = sys.n, sys.m
    if x0.size != n:
        raise ValueError(f"x0 has {x0.size} entries, expected {n}")
    if Xhat.dim != n or S.dim != n or U.dim != m:
        raise ValueError("constraint-set dimensions do not match the system")
    K = symmetrize(K)
    if K.shape != (n, n):
        raise ValueError(f"terminal cost shape {K.shape}, expected {(n, n)}")

    A, B = sys.A, sys.B
    # prediction matrices: X = Phi x0 + Gamma z, stacking x_0..x_ell
    Apow = [np.eye(n)]
    for _ in range(ell):
        Apow.append(A @ Apow[-1])
    Phi = np.vstack(Apow)
    Gamma = np.zeros(((ell + 1) * n, ell * m))
    for k in range(1, ell + 1):
        for j in range(k):
            Gamma[k * n : (k + 1) * n, j * m : (j + 1) * m] = Apow[k - 1 - j] @ B

    Qblocks = [sys.Q] * ell + [K]
    Qbar = np.zeros(((ell + 1) * n, (ell + 1) * n))
    for k, Qk in enumerate(Qblocks):
        Qbar[k * n : (k + 1) * n, k * n : (k + 1) * n] = Qk
    Rbar = np.kron(np.eye(ell), sys.R)

    P = 2.0 * (Gamma.T @ Qbar @ Gamma + Rbar)
    Phix = Phi @ x0
    q = 2.0 * (Gamma.T @ Qbar @ Phix)
    offset = float(Phix @ Qbar @ Phix)

    G_rows = []
    g_rows = []
    for k in range(ell):  # x_k in Xhat, k = 0..ell-1
        sl = slice(k * n, (k + 1) * n)
        G_rows.append(Xhat.H @ Gamma[sl])
        g_rows.append(Xhat.h - Xhat.H @ Phix[sl])
    for k in range(ell):  # u_k in U
        sel = np.zeros((m, ell * m))
        sel[:, k * m : (k + 1) * m] = np.eye(m)
        G_rows.append(U.H @ sel)
        g_rows.append(U.h)
    sl = slice(ell * n, (ell + 1) * n)  # x_ell in S
    G_rows.append(S.H @ Gamma[sl])
    g_rows.append(S.h - S.H @ Phix[sl])

    return QpProblem(
        P=P, q=q, G=np.vstack(G_rows), g=np.concatenate(g_rows),
        objective_offset=offset,
    )
