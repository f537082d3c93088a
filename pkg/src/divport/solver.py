"""Dense convex-QP and box-constrained log-barrier solvers.

``solve_qp`` minimizes 0.5 x'Qx + c'x subject to equality, inequality, and
box constraints with a Mehrotra predictor-corrector primal-dual interior
point method. ``solve_box_log_barrier`` minimizes 0.5 y'Vy - sum(log y) on
0 < y <= d with exact cyclic coordinate updates.

Both solvers are pure functions of their inputs with a fixed iteration
order, so identical inputs produce bit-identical outputs. The returned
``kkt_residual`` is recomputable from the problem data and the solution
alone; nothing needs to be trusted about solver internals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotPositiveDefinite, NotPSD

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 50_000

#: smallest eigenvalue allowed for a "PSD" quadratic term (absolute)
QP_PSD_TOL = 1e-10

#: iterations without primal-residual progress before declaring infeasible
STALL_WINDOW = 1_000

OPTIMAL = "optimal"
MAX_ITERATIONS = "max_iterations"
INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class QuadraticProgram:
    """min 0.5 x'Qx + c'x  s.t.  A_eq x = b_eq, G_in x <= h_in, lower <= x <= upper.

    ``lower``/``upper`` may be scalars, vectors, or None (unbounded). Use
    ``None`` entries via +-inf in vectors.
    """

    Q: np.ndarray
    c: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    G_in: np.ndarray | None = None
    h_in: np.ndarray | None = None
    lower: np.ndarray | float | None = None
    upper: np.ndarray | float | None = None

    def __post_init__(self):
        q = np.asarray(self.Q, dtype=float)
        n = q.shape[0]
        if q.shape != (n, n):
            raise ValueError("Q must be square")
        scale = np.abs(q).max()
        if scale > 0 and np.abs(q - q.T).max() > 1e-12 * scale:
            raise ValueError("Q must be symmetric (1e-12 relative)")
        if self.A_eq is not None and np.asarray(self.A_eq).shape[0] >= n:
            raise ValueError("equality set must have fewer rows than variables")
        lo, up = self._bounds_vectors()
        if np.any(lo > up):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n(self) -> int:
        return np.asarray(self.Q).shape[0]

    def _bounds_vectors(self):
        n = np.asarray(self.Q).shape[0]
        lo = self.lower
        up = self.upper
        lo = np.full(n, -np.inf) if lo is None else np.broadcast_to(
            np.asarray(lo, dtype=float), (n,)).copy()
        up = np.full(n, np.inf) if up is None else np.broadcast_to(
            np.asarray(up, dtype=float), (n,)).copy()
        return lo, up


@dataclass(frozen=True)
class SolverSolution:
    """Solution record; ``status == "optimal"`` implies kkt_residual <= tol.

    ``ineq_duals`` follows the stacked inequality order produced by
    ``combined_inequalities`` (general rows, then upper bounds, then lower
    bounds).
    """

    x: np.ndarray
    objective: float
    status: str
    kkt_residual: float
    iterations: int = 0
    eq_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ineq_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))


def combined_inequalities(prob: QuadraticProgram):
    """Stack G_in x <= h_in with the finite box constraints into (G, h).

    Row order: G_in rows, then x_i <= upper_i for finite uppers, then
    -x_i <= -lower_i for finite lowers.
    """
    n = prob.n
    lo, up = prob._bounds_vectors()
    blocks_g, blocks_h = [], []
    if prob.G_in is not None and np.asarray(prob.G_in).size:
        blocks_g.append(np.asarray(prob.G_in, dtype=float).reshape(-1, n))
        blocks_h.append(np.asarray(prob.h_in, dtype=float).ravel())
    fin_up = np.flatnonzero(np.isfinite(up))
    if fin_up.size:
        eye = np.zeros((fin_up.size, n))
        eye[np.arange(fin_up.size), fin_up] = 1.0
        blocks_g.append(eye)
        blocks_h.append(up[fin_up])
    fin_lo = np.flatnonzero(np.isfinite(lo))
    if fin_lo.size:
        eye = np.zeros((fin_lo.size, n))
        eye[np.arange(fin_lo.size), fin_lo] = -1.0
        blocks_g.append(eye)
        blocks_h.append(-lo[fin_lo])
    if not blocks_g:
        return np.zeros((0, n)), np.zeros(0)
    return np.vstack(blocks_g), np.concatenate(blocks_h)


def qp_residuals(prob: QuadraticProgram, x, y, z, g=None, h=None):
    """(primal, dual, comp) residuals at a candidate point.

    primal: worst absolute constraint violation (per constraint).
    dual:   Lagrangian stationarity, relative to |Q||x| + |c|.
    comp:   average complementarity slack, relative to 1 + |objective|.
    """
    q = np.asarray(prob.Q, dtype=float)
    c = np.zeros(prob.n) if prob.c is None else np.asarray(prob.c, dtype=float)
    if g is None:
        g, h = combined_inequalities(prob)
    primal = 0.0
    grad = q @ x + c
    if prob.A_eq is not None:
        a = np.asarray(prob.A_eq, dtype=float).reshape(-1, prob.n)
        b = np.asarray(prob.b_eq, dtype=float).ravel()
        primal = max(primal, float(np.abs(a @ x - b).max(initial=0.0)))
        grad = grad + a.T @ y
    slack = h - g @ x if g.size else np.zeros(0)
    if g.size:
        primal = max(primal, float((-slack).max(initial=0.0)))
        grad = grad + g.T @ z
    scale = max(float(np.abs(q).max(initial=0.0)) * float(np.abs(x).max(initial=0.0))
                + float(np.abs(c).max(initial=0.0)), 1e-15)
    dual = float(np.abs(grad).max(initial=0.0)) / scale
    obj = 0.5 * float(x @ q @ x) + float(c @ x)
    comp = 0.0
    if g.size:
        comp = float(np.maximum(slack, 0.0) @ z) / max(1, len(h)) / (1.0 + abs(obj))
    return primal, dual, comp


def solve_qp(prob: QuadraticProgram, tol: float = DEFAULT_TOL,
             max_iter: int = DEFAULT_MAX_ITER,
             trace: list | None = None) -> SolverSolution:
    """Solve a convex QP; returns status optimal/max_iterations/infeasible.

    Raises:
        NotPSD: Q has an eigenvalue below -1e-10.

    The reported objective is 0.5 x'Qx + c'x (note the half; callers wanting
    to minimize x'Vx pass Q = 2V). ``trace``, when given, collects one
    (iteration, primal, dual, comp) tuple per interior-point step.
    """
    q = np.asarray(prob.Q, dtype=float)
    n = prob.n
    if np.linalg.eigvalsh(q)[0] < -QP_PSD_TOL:
        raise NotPSD("quadratic term has eigenvalue below -1e-10")
    c = np.zeros(n) if prob.c is None else np.asarray(prob.c, dtype=float).ravel()
    if prob.A_eq is not None:
        a = np.asarray(prob.A_eq, dtype=float).reshape(-1, n)
        b = np.asarray(prob.b_eq, dtype=float).ravel()
    else:
        a = np.zeros((0, n))
        b = np.zeros(0)
    g, h = combined_inequalities(prob)
    ne, m = a.shape[0], g.shape[0]

    def finish(x, y, z, iters):
        primal, dual, comp = qp_residuals(prob, x, y, z, g, h)
        kkt = max(primal, dual, comp)
        status = OPTIMAL if kkt <= tol else MAX_ITERATIONS
        obj = 0.5 * float(x @ q @ x) + float(c @ x)
        return SolverSolution(x, obj, status, kkt, iters, y, z)

    # equality-only (or unconstrained) problems: one KKT solve
    if m == 0:
        kkt_mat = np.block([[q, a.T], [a, np.zeros((ne, ne))]])
        rhs = np.concatenate([-c, b])
        try:
            sol = np.linalg.solve(kkt_mat, rhs)
        except np.linalg.LinAlgError:
            return SolverSolution(np.zeros(n), 0.0, INFEASIBLE, np.inf, 0)
        return finish(sol[:n], sol[n:], np.zeros(0), 1)

    # starting point: regularized equality-constrained solve, slacks shifted
    # strictly positive
    k0 = np.block([[q + np.eye(n), a.T], [a, np.zeros((ne, ne))]])
    try:
        sol0 = np.linalg.solve(k0, np.concatenate([-c, b]))
        x = sol0[:n]
        y = sol0[n:]
    except np.linalg.LinAlgError:
        x = np.zeros(n)
        y = np.zeros(ne)
    st = h - g @ x
    shift = max(0.0, -1.5 * float(st.min())) + 0.1
    s = st + shift
    z = np.full(m, max(0.1, shift))

    best = None
    best_primal = np.inf
    last_improve = 0
    iters = 0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        while iters < max_iter:
            iters += 1
            rd = q @ x + c + a.T @ y + g.T @ z
            re = a @ x - b
            ri = g @ x + s - h
            mu = float(s @ z) / m
            primal, dual, comp = qp_residuals(prob, x, y, z, g, h)
            kkt = max(primal, dual, comp)
            if trace is not None:
                trace.append((iters, primal, dual, comp))
            if best is None or kkt < best[0]:
                best = (kkt, x.copy(), y.copy(), z.copy())
            if kkt <= tol:
                return finish(x, y, z, iters)
            if primal < 0.9 * best_primal:
                best_primal = primal
                last_improve = iters
            elif iters - last_improve >= min(STALL_WINDOW, max(50, max_iter // 10)):
                break

            w = z / s
            kkt_mat = np.block([[q + (g.T * w) @ g, a.T],
                                [a, np.zeros((ne, ne))]])

            # affine scaling (predictor) direction
            rhs = np.concatenate([-rd - g.T @ ((z * ri - s * z) / s), -re])
            try:
                d = np.linalg.solve(kkt_mat, rhs)
            except np.linalg.LinAlgError:
                kkt_mat = kkt_mat + 1e-12 * np.eye(n + ne)
                try:
                    d = np.linalg.solve(kkt_mat, rhs)
                except np.linalg.LinAlgError:
                    break
            dx = d[:n]
            ds = -ri - g @ dx
            dz = (-s * z - z * ds) / s
            a_p = _max_step(s, ds)
            a_d = _max_step(z, dz)
            mu_aff = float((s + a_p * ds) @ (z + a_d * dz)) / m
            sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0

            # corrector with centering
            rc = -s * z - ds * dz + sigma * mu
            rhs = np.concatenate([-rd - g.T @ ((z * ri - rc) / s), -re])
            try:
                d = np.linalg.solve(kkt_mat, rhs)
            except np.linalg.LinAlgError:
                break
            dx = d[:n]
            dy = d[n:]
            ds = -ri - g @ dx
            dz = (rc - z * ds) / s
            alpha = min(_max_step(s, ds), _max_step(z, dz))
            x = x + alpha * dx
            y = y + alpha * dy
            s = s + alpha * ds
            z = z + alpha * dz
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(s))
                    and np.all(np.isfinite(z))):
                break

    # no certificate: classify by the best primal feasibility seen
    kkt, bx, by, bz = best if best is not None else (np.inf, x, y, z)
    primal, _, _ = qp_residuals(prob, bx, by, bz, g, h)
    status = INFEASIBLE if primal > max(1e3 * tol, 1e-6) else MAX_ITERATIONS
    return SolverSolution(bx, 0.5 * float(bx @ q @ bx) + float(c @ bx),
                          status, kkt, iters, by, bz)


def _max_step(v, dv, frac: float = 0.99):
    """Largest step in [0,1] keeping v + alpha*dv >= (1-frac)*v elementwise."""
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, frac * np.min(-v[neg] / dv[neg])))


def barrier_gradient(v_mat: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of 0.5 y'Vy - sum(log y)."""
    return v_mat @ y - 1.0 / y


def solve_box_log_barrier(v_mat: np.ndarray, d: float,
                          tol: float = DEFAULT_TOL,
                          max_iter: int = DEFAULT_MAX_ITER,
                          trace: list | None = None) -> SolverSolution:
    """Minimize 0.5 y'Vy - sum(log y) over 0 < y <= d by cyclic coordinate
    descent; every coordinate update is the exact scalar minimizer
    y_i = (-r_i + sqrt(r_i^2 + 4 V_ii)) / (2 V_ii), r_i = sum_{j!=i} V_ij y_j,
    clipped to the bound.

    Optimality certificate (projected gradient): for every i either
    |g_i| <= tol or (y_i == d and g_i <= tol), with g = Vy - 1/y.

    Raises:
        NotPositiveDefinite: V is not strictly positive definite; the
            objective would be unbounded below and the risk-parity
            fixed point does not exist.
    """
    v_mat = np.asarray(v_mat, dtype=float)
    n = v_mat.shape[0]
    if d <= 0:
        raise ValueError("upper bound d must be positive")
    eigs = np.linalg.eigvalsh(v_mat)
    if eigs[0] <= 1e-12 * max(1.0, float(eigs[-1])):
        raise NotPositiveDefinite(
            f"matrix is not strictly positive definite (min eigenvalue {eigs[0]:.3e})")
    diag = np.diag(v_mat).copy()
    y = np.full(n, min(1.0, d / 2.0))
    v = v_mat @ y
    iters = 0
    while iters < max_iter:
        iters += 1
        for i in range(n):
            yi = y[i]
            r = v[i] - diag[i] * yi
            ynew = (-r + np.sqrt(r * r + 4.0 * diag[i])) / (2.0 * diag[i])
            if ynew > d:
                ynew = d
            delta = ynew - yi
            if delta != 0.0:
                y[i] = ynew
                v += v_mat[:, i] * delta
        v = v_mat @ y  # refresh accumulated residual before certifying
        grad = v - 1.0 / y
        resid = float(np.abs(grad).max())
        converged = bool(np.all((np.abs(grad) <= tol)
                                | ((y >= d) & (grad <= tol))))
        if trace is not None:
            trace.append((iters, resid))
        if converged:
            obj = 0.5 * float(y @ v) - float(np.log(y).sum())
            return SolverSolution(y, obj, OPTIMAL, resid, iters)
    obj = 0.5 * float(y @ (v_mat @ y)) - float(np.log(y).sum())
    return SolverSolution(y, obj, MAX_ITERATIONS, resid, iters)
