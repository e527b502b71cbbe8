"""Small dense convex QCQP solver used by all block subproblems.

A :class:`ConvexSubproblem` minimizes ``x^H Q x - 2 Re{q^H x} + c`` over a
complex or real vector subject to any mix of

* affine half-spaces          ``Re{a^H x} <= b``
* (partial) norm balls        ``|| x[idx] - center || <= r``
* general second-order cones  ``|| S x - s || <= r``
* convex quadratics           ``x^H B x - 2 Re{p^H x} + d <= 0`` (B PSD)
* boxes on real coordinates   ``lower <= x <= upper``

Complex problems are lowered to an equivalent real problem of twice the
dimension (:func:`realify`). Instances whose constraints are only affine
rows, balls, and boxes go through a dense ADMM splitting with a cached
factorization; everything else (and any ADMM stall) is handed to a conic
interior-point solver.
"""

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max_iterations"
NUMERICAL_FAILURE = "numerical_failure"

DEFAULT_TOLERANCE = 1e-8
DEFAULT_MAX_ITERATIONS = 200


@dataclass
class AffineConstraint:
    """Re{a^H x} <= b."""
    a: np.ndarray
    b: float


@dataclass
class BallConstraint:
    """||x[indices] - center|| <= radius; indices=None means all coordinates."""
    indices: tuple
    radius: float
    center: np.ndarray = None


@dataclass
class NormBallConstraint:
    """||S x - s|| <= radius."""
    S: np.ndarray
    s: np.ndarray
    radius: float


@dataclass
class QuadConstraint:
    """x^H B x - 2 Re{p^H x} + d <= 0 with B Hermitian PSD."""
    B: np.ndarray
    p: np.ndarray
    d: float


@dataclass
class BoxConstraint:
    """lower <= x <= upper elementwise; only valid on real problems."""
    lower: np.ndarray
    upper: np.ndarray


@dataclass
class SolveStatus:
    status: str
    objective_value: float = math.nan
    primal_residual: float = math.nan
    iterations: int = 0


@dataclass
class ConvexSubproblem:
    """One convex instance: x^H Q x - 2 Re{q^H x} + c over the constraints."""

    dimension: int
    Q: np.ndarray
    q: np.ndarray
    c: float = 0.0
    constraints: list = field(default_factory=list)
    is_complex: bool = True

    def __post_init__(self):
        dtype = complex if self.is_complex else float
        self.Q = np.asarray(self.Q, dtype=dtype).reshape(self.dimension,
                                                         self.dimension)
        self.q = np.asarray(self.q, dtype=dtype).reshape(self.dimension)
        self.validate()

    def validate(self):
        if not np.all(np.isfinite(self.Q.view(float))) or \
           not np.all(np.isfinite(self.q.view(float))):
            raise ValueError("objective data must be finite")
        herm_gap = np.max(np.abs(self.Q - self.Q.conj().T))
        scale = max(np.max(np.abs(self.Q)), 1e-30)
        if herm_gap > 1e-9 * scale:
            raise ValueError("Q must be Hermitian/symmetric")
        mineig = float(np.linalg.eigvalsh((self.Q + self.Q.conj().T) / 2)[0])
        if mineig < -1e-9 * scale:
            raise ValueError(f"Q must be PSD (min eigenvalue {mineig:g})")
        for con in self.constraints:
            if isinstance(con, BoxConstraint) and self.is_complex:
                raise ValueError("box constraints require a real problem")

    def objective(self, x: np.ndarray) -> float:
        x = np.asarray(x)
        return float(np.real(x.conj() @ self.Q @ x)
                     - 2.0 * np.real(np.vdot(self.q, x)) + self.c)

    def violations(self, x: np.ndarray) -> np.ndarray:
        """Signed violation of each constraint (positive = infeasible)."""
        out = []
        for con in self.constraints:
            if isinstance(con, AffineConstraint):
                out.append(float(np.real(np.vdot(con.a, x)) - con.b))
            elif isinstance(con, BallConstraint):
                idx = _ball_indices(con, self.dimension)
                v = x[idx] - (0 if con.center is None else con.center)
                out.append(float(np.linalg.norm(v) - con.radius))
            elif isinstance(con, NormBallConstraint):
                out.append(float(np.linalg.norm(con.S @ x - con.s) - con.radius))
            elif isinstance(con, QuadConstraint):
                val = (np.real(x.conj() @ con.B @ x)
                       - 2.0 * np.real(np.vdot(con.p, x)) + con.d)
                out.append(float(val))
            elif isinstance(con, BoxConstraint):
                xr = np.real(x)
                out.append(float(max(np.max(xr - con.upper),
                                     np.max(con.lower - xr))))
            else:
                raise TypeError(f"unknown constraint {type(con).__name__}")
        return np.asarray(out) if out else np.zeros(0)

    def max_violation(self, x: np.ndarray) -> float:
        v = self.violations(x)
        return float(np.max(v)) if v.size else 0.0


def _ball_indices(con: BallConstraint, dim: int) -> np.ndarray:
    if con.indices is None:
        return np.arange(dim)
    return np.asarray(con.indices, dtype=int)


# ---------------------------------------------------------------------------
# realification


def _real_quadratic(Q: np.ndarray) -> np.ndarray:
    """Real block form: z^T Qr z = x^H Q x for z = [Re x; Im x]."""
    re, im = np.real(Q), np.imag(Q)
    top = np.hstack([re, -im])
    bot = np.hstack([im, re])
    Qr = np.vstack([top, bot])
    return (Qr + Qr.T) / 2.0


def _real_vector(v: np.ndarray) -> np.ndarray:
    return np.concatenate([np.real(v), np.imag(v)])


def realify(problem: ConvexSubproblem) -> ConvexSubproblem:
    """Equivalent real problem over z = [Re x; Im x] (dimension doubles)."""
    if not problem.is_complex:
        return problem
    n = problem.dimension
    cons = []
    for con in problem.constraints:
        if isinstance(con, AffineConstraint):
            cons.append(AffineConstraint(_real_vector(con.a), con.b))
        elif isinstance(con, BallConstraint):
            idx = _ball_indices(con, n)
            center = None
            if con.center is not None:
                center = _real_vector(np.asarray(con.center, complex))
            cons.append(BallConstraint(tuple(idx) + tuple(idx + n),
                                       con.radius, center))
        elif isinstance(con, NormBallConstraint):
            S = np.asarray(con.S, complex)
            Sr = np.vstack([np.hstack([np.real(S), -np.imag(S)]),
                            np.hstack([np.imag(S), np.real(S)])])
            cons.append(NormBallConstraint(Sr, _real_vector(con.s), con.radius))
        elif isinstance(con, QuadConstraint):
            cons.append(QuadConstraint(_real_quadratic(con.B),
                                       _real_vector(con.p), con.d))
        else:
            raise TypeError(f"cannot realify {type(con).__name__}")
    return ConvexSubproblem(2 * n, _real_quadratic(problem.Q),
                            _real_vector(problem.q), problem.c, cons,
                            is_complex=False)


def _derealify(z: np.ndarray) -> np.ndarray:
    n = z.shape[0] // 2
    return z[:n] + 1j * z[n:]


# ---------------------------------------------------------------------------
# public solve


def solve(problem: ConvexSubproblem, tolerance: float = DEFAULT_TOLERANCE,
          max_iterations: int = DEFAULT_MAX_ITERATIONS, warm_start=None):
    """Minimize the subproblem; returns ``(x, SolveStatus)``.

    ``max_iterations`` caps the interior-point iterations of the conic
    backend; the ADMM fast path runs up to ``50 * max_iterations`` of its
    much cheaper sweeps before falling back.
    """
    if problem.is_complex:
        rp = realify(problem)
        ws = _real_vector(np.asarray(warm_start, complex)) \
            if warm_start is not None else None
        z, status = solve(rp, tolerance, max_iterations, ws)
        x = _derealify(z)
        status.objective_value = problem.objective(x)
        return x, status

    if not problem.constraints:
        return _solve_unconstrained(problem)

    x, status = None, None
    if _admm_applicable(problem):
        x, status = _solve_admm(problem, tolerance, 50 * max_iterations,
                                warm_start)
    if x is None or status.status != OPTIMAL:
        x, status = _solve_conic(problem, tolerance, max_iterations, warm_start)
    return x, status


def _solve_unconstrained(problem: ConvexSubproblem):
    # stationarity: Q x = q (gradient of x^T Q x - 2 q^T x vanishes)
    Q, q = problem.Q, problem.q
    scale = max(np.max(np.abs(Q)), 1e-300)
    x, *_ = np.linalg.lstsq(Q / scale, q / scale, rcond=None)
    grad = Q @ x - q
    if np.linalg.norm(grad) > 1e-6 * max(np.linalg.norm(q), scale):
        return x, SolveStatus(NUMERICAL_FAILURE, problem.objective(x), 0.0, 0)
    return x, SolveStatus(OPTIMAL, problem.objective(x), 0.0, 1)


# ---------------------------------------------------------------------------
# ADMM fast path: quadratic objective, affine rows + balls + box


def _admm_applicable(problem: ConvexSubproblem) -> bool:
    return all(isinstance(c, (AffineConstraint, BallConstraint, BoxConstraint))
               for c in problem.constraints)


def _project_simple(z, balls, box):
    z = z.copy()
    if box is not None:
        np.clip(z, box.lower, box.upper, out=z)
    for idx, radius, center in balls:
        v = z[idx] - center
        nv = np.linalg.norm(v)
        if nv > radius:
            z[idx] = center + v * (radius / nv)
    return z


def _solve_admm(problem: ConvexSubproblem, tolerance, max_sweeps, warm_start):
    d = problem.dimension
    obj_scale = max(np.max(np.abs(problem.Q)), np.max(np.abs(problem.q)), 1e-30)
    Q = problem.Q / obj_scale
    q = problem.q / obj_scale

    rows, rhs = [], []
    balls, box = [], None
    for con in problem.constraints:
        if isinstance(con, AffineConstraint):
            nrm = np.linalg.norm(con.a)
            if nrm < 1e-300:
                if con.b < -tolerance:
                    return None, SolveStatus(INFEASIBLE)
                continue
            rows.append(np.real(con.a) / nrm)
            rhs.append(con.b / nrm)
        elif isinstance(con, BallConstraint):
            idx = _ball_indices(con, d)
            center = np.zeros(idx.size) if con.center is None \
                else np.real(con.center)
            balls.append((idx, con.radius, center))
        else:
            if box is None:
                box = con
            else:
                box = BoxConstraint(np.maximum(box.lower, con.lower),
                                    np.minimum(box.upper, con.upper))
    A = np.asarray(rows) if rows else np.zeros((0, d))
    b = np.asarray(rhs)

    sigma = max(float(np.trace(Q)) / d, 1e-3)
    z = np.zeros(d) if warm_start is None else np.real(np.asarray(warm_start))
    z = _project_simple(z, balls, box)
    u, du = z.copy(), np.zeros(d)
    s = np.minimum(A @ z, b)
    ds = np.zeros(b.shape[0])

    def factor(sig):
        K = 2.0 * Q + sig * np.eye(d) + sig * (A.T @ A)
        return np.linalg.cholesky(K)

    chol = factor(sigma)
    eps_abs = min(tolerance, 1e-9)
    eps_rel = min(tolerance, 1e-9)
    it = 0
    while it < max_sweeps:
        for _ in range(10):
            it += 1
            rhs_vec = 2.0 * q + sigma * (u - du) + sigma * (A.T @ (s - ds))
            z = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs_vec))
            Az = A @ z
            u_prev, s_prev = u, s
            u = _project_simple(z + du, balls, box)
            s = np.minimum(Az + ds, b)
            du = du + z - u
            ds = ds + Az - s
        r_prim = max(_inf_norm(z - u), _inf_norm(Az - s))
        r_dual = sigma * max(_inf_norm(u - u_prev),
                             _inf_norm(A.T @ (s - s_prev)))
        scale_p = max(_inf_norm(z), _inf_norm(u), 1.0)
        scale_d = max(_inf_norm(2.0 * Q @ z - 2.0 * q), 1.0)
        if (r_prim <= eps_abs + eps_rel * scale_p
                and r_dual <= eps_abs + eps_rel * scale_d):
            x = _project_simple(z, balls, box)
            resid = problem.max_violation(x)
            return x, SolveStatus(OPTIMAL, problem.objective(x),
                                  max(resid, 0.0), it)
        if r_prim > 100 * r_dual and sigma < 1e6:
            sigma *= 5.0
            du /= 5.0
            ds /= 5.0
            chol = factor(sigma)
        elif r_dual > 100 * r_prim and sigma > 1e-6:
            sigma /= 5.0
            du *= 5.0
            ds *= 5.0
            chol = factor(sigma)
    return None, SolveStatus(MAX_ITERATIONS, iterations=it)


def _inf_norm(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


# ---------------------------------------------------------------------------
# conic fallback


def _solve_conic(problem: ConvexSubproblem, tolerance, max_iterations,
                 warm_start):
    import cvxpy as cp

    d = problem.dimension
    z = cp.Variable(d)
    if warm_start is not None:
        z.value = np.real(np.asarray(warm_start))
    obj_scale = max(np.max(np.abs(problem.Q)), np.max(np.abs(problem.q)), 1e-30)
    Q = np.real(problem.Q) / obj_scale
    q = np.real(problem.q) / obj_scale
    expr = cp.quad_form(z, (Q + Q.T) / 2, assume_PSD=True) - 2.0 * q @ z

    cons = []
    for con in problem.constraints:
        if isinstance(con, AffineConstraint):
            nrm = max(np.linalg.norm(con.a), 1e-300)
            cons.append((np.real(con.a) / nrm) @ z <= con.b / nrm)
        elif isinstance(con, BallConstraint):
            idx = _ball_indices(con, d)
            center = np.zeros(idx.size) if con.center is None \
                else np.real(con.center)
            cons.append(cp.norm(z[idx] - center) <= con.radius)
        elif isinstance(con, NormBallConstraint):
            cons.append(cp.norm(np.real(con.S) @ z - np.real(con.s))
                        <= con.radius)
        elif isinstance(con, QuadConstraint):
            scale = max(np.max(np.abs(con.B)), np.max(np.abs(con.p)),
                        abs(con.d), 1e-30)
            B = np.real(con.B) / scale
            cons.append(cp.quad_form(z, (B + B.T) / 2, assume_PSD=True)
                        - 2.0 * (np.real(con.p) / scale) @ z
                        + con.d / scale <= 0)
        elif isinstance(con, BoxConstraint):
            lo_mask = np.isfinite(con.lower)
            hi_mask = np.isfinite(con.upper)
            if np.any(lo_mask):
                cons.append(z[lo_mask] >= con.lower[lo_mask])
            if np.any(hi_mask):
                cons.append(z[hi_mask] <= con.upper[hi_mask])

    cvx_problem = cp.Problem(cp.Minimize(expr), cons)
    attempts = [
        (cp.CLARABEL, dict(max_iter=max(max_iterations, 50),
                           tol_gap_abs=tolerance / 10,
                           tol_gap_rel=tolerance / 10,
                           tol_feas=tolerance / 10)),
        (cp.SCS, dict(eps=max(tolerance, 1e-9), max_iters=50_000)),
    ]
    last_status = NUMERICAL_FAILURE
    for solver, opts in attempts:
        try:
            cvx_problem.solve(solver=solver, **opts)
        except cp.error.SolverError:
            continue
        if cvx_problem.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) \
                and z.value is not None:
            x = np.asarray(z.value)
            resid = problem.max_violation(x)
            status = OPTIMAL if cvx_problem.status == cp.OPTIMAL \
                else NUMERICAL_FAILURE
            if status == OPTIMAL and resid > 10 * tolerance:
                status = NUMERICAL_FAILURE
            its = _solver_iterations(cvx_problem)
            return x, SolveStatus(status, problem.objective(x), resid, its)
        if cvx_problem.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return np.zeros(d), SolveStatus(INFEASIBLE)
        last_status = NUMERICAL_FAILURE
    return np.zeros(d), SolveStatus(last_status)


def _solver_iterations(cvx_problem) -> int:
    stats = cvx_problem.solver_stats
    if stats is not None and stats.num_iters is not None:
        return int(stats.num_iters)
    return 0


# ---------------------------------------------------------------------------
# debug dump


def dump_subproblem(problem: ConvexSubproblem, path):
    """Write the instance as structured text (row-major matrix lists)."""
    def enc(arr):
        arr = np.asarray(arr)
        if np.iscomplexobj(arr):
            return {"re": np.real(arr).ravel().tolist(),
                    "im": np.imag(arr).ravel().tolist(),
                    "shape": list(arr.shape)}
        return {"values": arr.ravel().tolist(), "shape": list(arr.shape)}

    doc = {
        "dimension": problem.dimension,
        "is_complex": problem.is_complex,
        "objective": {"Q": enc(problem.Q), "q": enc(problem.q),
                      "constant": problem.c},
        "constraints": [],
    }
    for con in problem.constraints:
        entry = {"kind": type(con).__name__}
        for name, value in vars(con).items():
            if isinstance(value, np.ndarray):
                entry[name] = enc(value)
            elif isinstance(value, tuple):
                entry[name] = list(value)
            else:
                entry[name] = value
        doc["constraints"].append(entry)
    if isinstance(path, io.IOBase):
        json.dump(doc, path, indent=1)
    else:
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)
