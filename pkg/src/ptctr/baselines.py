"""Reference methods compared against the continuation solver.

* :func:`penalty_solve` -- quadratic penalty method, ``f + sigma ||A x - b||^2``
  minimised by BFGS for a growing sequence of ``sigma``.
* :func:`penalty_conditioning` -- spectral condition number of the penalty
  Hessian ``H_sigma = hess f + 2 sigma A^T A``.
* :func:`gradient_flow_solve` -- explicit adaptive integration of the
  projected gradient flow ``dx/dt = -P grad f(x)``.  It replaces the implicit
  BDF integrator of the original comparison; agreement of solutions is
  meaningful, step counts and timings are not.
"""

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .constraints import RankPolicy, apply_projector, project_point, reduce
from .solver import SolveReport, Status


@dataclass(frozen=True)
class PenaltyConfig:
    sigma0: float = 1.0
    growth: float = 10.0
    inner_tol: float = 1e-8
    kkt_tol: float = 1e-6
    feasibility_tol: float = 1e-6
    max_outer: int = 12
    max_inner: int = 400
    # minimum relative step of the inner solver; 0 disables the test
    step_tol: float = 1e-6
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    rank_policy: RankPolicy = field(default_factory=RankPolicy)

    def __post_init__(self):
        if self.growth <= 1.0:
            raise ValueError("growth must exceed 1")
        if min(self.sigma0, self.inner_tol, self.kkt_tol, self.feasibility_tol) <= 0.0:
            raise ValueError("sigma0 and tolerances must be positive")
        if self.step_tol < 0.0:
            raise ValueError("step_tol must be nonnegative")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be positive")

    def to_dict(self):
        d = asdict(self)
        d["rank_policy"] = self.rank_policy.relative_threshold
        return d


@dataclass(frozen=True)
class FlowConfig:
    rtol: float = 1e-6
    atol: float = 1e-6
    tol: float = 1e-6
    max_steps: int = 200_000
    rank_policy: RankPolicy = field(default_factory=RankPolicy)

    def __post_init__(self):
        if min(self.rtol, self.atol, self.tol) <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    def to_dict(self):
        d = asdict(self)
        d["rank_policy"] = self.rank_policy.relative_threshold
        return d


@dataclass(frozen=True)
class OuterRecord:
    sigma: float
    f: float
    kkt_residual: float
    feasibility_residual: float
    inner_iterations: int
    inner_converged: bool


def _bfgs_minimize(fun, grad, x, tol, max_iter, c1, shrink, max_backtracks, step_tol=0.0):
    """Inverse-Hessian BFGS with backtracking Armijo line search.

    Returns ``(x, f, g, iterations, converged, nfev, ngev)``.  Stops early
    (``converged=False``) when the line search cannot produce a decrease or
    an accepted step is shorter than ``step_tol * (1 + ||x||)``.
    """
    fx, gx = fun(x), grad(x)
    nfev = ngev = 1
    n = x.size
    H = None
    for it in range(max_iter):
        if np.max(np.abs(gx)) <= tol:
            return x, fx, gx, it, True, nfev, ngev
        p = -gx if H is None else -(H @ gx)
        slope = float(gx @ p)
        if slope >= 0.0:
            # lost descent through rounding; restart from steepest descent
            H = None
            p, slope = -gx, -float(gx @ gx)
        step = 1.0
        for _ in range(max_backtracks):
            x_new = x + step * p
            f_new = fun(x_new)
            nfev += 1
            if f_new <= fx + c1 * step * slope:
                break
            step *= shrink
        else:
            return x, fx, gx, it, False, nfev, ngev
        g_new = grad(x_new)
        ngev += 1
        s, y = x_new - x, g_new - gx
        ys = float(y @ s)
        if ys > 1e-10 * np.linalg.norm(y) * np.linalg.norm(s):
            if H is None:
                H = np.eye(n) * (ys / float(y @ y))
            rho = 1.0 / ys
            Hy = H @ y
            # (I - rho s y^T) H (I - rho y s^T) + rho s s^T, expanded
            H += (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
            H -= rho * (np.outer(Hy, s) + np.outer(s, Hy))
        x, fx, gx = x_new, f_new, g_new
        if not math.isfinite(fx):
            return x, fx, gx, it + 1, False, nfev, ngev
        if np.linalg.norm(s) < step_tol * (1.0 + np.linalg.norm(x)):
            return x, fx, gx, it + 1, np.max(np.abs(gx)) <= tol, nfev, ngev
    return x, fx, gx, max_iter, np.max(np.abs(gx)) <= tol, nfev, ngev


def penalty_solve(problem, config=None, x0=None):
    """Sequential unconstrained minimisation of ``f + sigma ||A x - b||^2``.

    The start point is projected onto the constraint plane, as for the
    continuation solver.  Each subproblem is warm-started at the previous
    minimiser and ``sigma`` grows geometrically until both

        ||P grad f(x)||_inf <= kkt_tol
        ||A x - b||_inf <= feasibility_tol

    hold (the second test is relaxed by the least-squares residual when the
    data are inconsistent) or ``max_outer`` subproblems have been solved.  A run that stops with
    feasibility met but the KKT test failed is flagged ``close``.
    """
    config = config or PenaltyConfig()
    t0 = time.perf_counter()
    raw = problem.constraints
    A, b = raw.A, raw.b
    rc = reduce(raw, config.rank_policy)
    if x0 is None:
        x0 = problem.x0 if problem.x0 is not None else np.ones(raw.n)
    x = project_point(rc, np.asarray(x0, dtype=float))
    # absolute bound plus the least-squares floor of inconsistent data
    feas_bound = config.feasibility_tol + rc.inconsistency

    nfev = ngev = iterations = 0
    history = []
    sigma = config.sigma0
    status = Status.ITERATION_LIMIT
    message = f"penalty loop stopped after {config.max_outer} subproblems"
    kkt = feas = float("inf")
    for _ in range(config.max_outer):
        def fun(z, sigma=sigma):
            r = A @ z - b
            return float(problem.f(z)) + sigma * float(r @ r)

        def grad(z, sigma=sigma):
            return np.asarray(problem.grad(z), dtype=float) + (2.0 * sigma) * (A.T @ (A @ z - b))

        x, _, _, it, inner_ok, fe, ge = _bfgs_minimize(
            fun, grad, x, config.inner_tol, config.max_inner,
            config.armijo, config.backtrack, config.max_backtracks, config.step_tol)
        iterations += it
        nfev += fe
        ngev += ge + 1
        g = np.asarray(problem.grad(x), dtype=float)
        if not np.all(np.isfinite(g)):
            status, message = Status.NUMERICAL_FAILURE, "non-finite gradient"
            break
        kkt = float(np.max(np.abs(apply_projector(rc, g))))
        feas = float(np.max(np.abs(A @ x - b)))
        history.append(OuterRecord(sigma, float(problem.f(x)), kkt, feas, it, inner_ok))
        if kkt <= config.kkt_tol and feas <= feas_bound:
            status, message = Status.CONVERGED, ""
            break
        sigma *= config.growth

    f_star = float(problem.f(x))
    close = status is not Status.CONVERGED and feas <= feas_bound
    if close:
        message = "close: feasible but KKT tolerance not reached"
    report = SolveReport(
        status=status, x_star=x, f_star=f_star, kkt_residual=kkt,
        feasibility_residual=feas, iterations=iterations,
        accepted_steps=len(history), rejected_steps=0, gradient_evals=ngev,
        function_evals=nfev, elapsed_time=time.perf_counter() - t0,
        solver="penalty", problem=getattr(problem, "name", ""), rank=rc.rank,
        close=close, message=message, history=history)
    return report


def _fd_hessian(grad, x, h=1e-5):
    n = x.size
    H = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h * max(1.0, abs(x[i]))
        H[:, i] = (grad(x + e) - grad(x - e)) / (2.0 * e[i])
    return 0.5 * (H + H.T)


def penalty_conditioning(problem, sigmas, x=None):
    """Condition number of ``H_sigma = hess f(x) + 2 sigma A^T A`` per ``sigma``.

    The probe point defaults to the projection of ``problem.x0`` onto the
    constraint plane.  The Hessian of ``f`` comes from ``problem.hess`` or,
    failing that, central differences of the gradient.  A numerically
    singular ``H_sigma`` reports ``inf``.

    Returns
    -------
    list of (sigma, condition)
    """
    raw = problem.constraints
    if x is None:
        rc = reduce(raw)
        start = problem.x0 if problem.x0 is not None else np.ones(raw.n)
        x = project_point(rc, start)
    x = np.asarray(x, dtype=float)
    if problem.hess is not None:
        H0 = np.asarray(problem.hess(x), dtype=float)
    else:
        H0 = _fd_hessian(problem.grad, x)
    AtA = raw.A.T @ raw.A
    out = []
    for sigma in sigmas:
        mu = np.abs(np.linalg.eigvalsh(H0 + 2.0 * float(sigma) * AtA))
        top, bottom = mu.max(), mu.min()
        if top == 0.0 or bottom <= mu.size * np.finfo(float).eps * top:
            cond = math.inf
        else:
            cond = float(top / bottom)
        out.append((float(sigma), cond))
    return out


# Bogacki-Shampine 3(2) tableau
_BS_C = (0.5, 0.75)
_BS_B3 = np.array([2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0, 0.0])
_BS_B2 = np.array([7.0 / 24.0, 0.25, 1.0 / 3.0, 0.125])


def gradient_flow_solve(problem, config=None, x0=None, h0=None):
    """Integrate ``dx/dt = -P grad f(x)`` with an explicit embedded 3(2) pair.

    Every accepted step is re-projected onto the constraint plane and must
    lower ``f``; a step that does not is rejected and retried with half the
    step length.  Integration stops once ``||P grad f||_inf <= config.tol``.
    """
    config = config or FlowConfig()
    t0 = time.perf_counter()
    raw = problem.constraints
    rc = reduce(raw, config.rank_policy)
    if x0 is None:
        x0 = problem.x0 if problem.x0 is not None else np.ones(raw.n)
    x = project_point(rc, np.asarray(x0, dtype=float))

    def rhs(z):
        return -apply_projector(rc, np.asarray(problem.grad(z), dtype=float))

    fx = float(problem.f(x))
    k1 = rhs(x)
    nfev, ngev = 1, 1
    accepted = rejected = 0
    history = []
    h = h0 if h0 is not None else min(1e-2, 1.0 / max(np.linalg.norm(k1), 1e-300))
    status = Status.ITERATION_LIMIT
    message = f"step budget of {config.max_steps} exhausted"
    t = 0.0
    while accepted + rejected < config.max_steps:
        if np.max(np.abs(k1)) <= config.tol:
            status, message = Status.CONVERGED, ""
            break
        k2 = rhs(x + h * _BS_C[0] * k1)
        k3 = rhs(x + h * _BS_C[1] * k2)
        x3 = x + h * (_BS_B3[0] * k1 + _BS_B3[1] * k2 + _BS_B3[2] * k3)
        k4 = rhs(x3)
        ngev += 3
        x2 = x + h * (_BS_B2[0] * k1 + _BS_B2[1] * k2 + _BS_B2[2] * k3 + _BS_B2[3] * k4)
        scale = config.atol + config.rtol * np.maximum(np.abs(x), np.abs(x3))
        err = float(np.sqrt(np.mean(((x3 - x2) / scale) ** 2)))
        if not np.all(np.isfinite(x3)):
            err = math.inf
        if err <= 1.0:
            x_new = project_point(rc, x3)
            f_new = float(problem.f(x_new))
            nfev += 1
            if f_new < fx:
                t += h
                x, fx = x_new, f_new
                k1 = rhs(x)
                ngev += 1
                accepted += 1
                history.append((t, fx))
                factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** (-1.0 / 3.0)))
                h *= factor
                continue
            factor = 0.5
        else:
            factor = max(0.2, 0.9 * err ** (-1.0 / 3.0)) if math.isfinite(err) else 0.2
        rejected += 1
        h *= factor
        if h < 1e-300:
            status, message = Status.NUMERICAL_FAILURE, "step size underflow"
            break

    g = np.asarray(problem.grad(x), dtype=float)
    kkt = float(np.max(np.abs(apply_projector(rc, g))))
    feas = float(np.max(np.abs(raw.residual(x))))
    note = "explicit Bogacki-Shampine 3(2) flow integrator; qualitative stand-in for a BDF integrator"
    return SolveReport(
        status=status, x_star=x, f_star=fx, kkt_residual=kkt,
        feasibility_residual=feas, iterations=accepted + rejected,
        accepted_steps=accepted, rejected_steps=rejected, gradient_evals=ngev,
        function_evals=nfev, elapsed_time=time.perf_counter() - t0,
        solver="flow", problem=getattr(problem, "name", ""), rank=rc.rank,
        message=f"{message}; {note}" if message else note, history=history)
