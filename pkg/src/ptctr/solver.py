"""Continuation method with trust-region ("trusty") time-stepping.

The solver follows the projected gradient flow ``dx/dt = -P grad f(x)`` with a
linearised implicit Euler step

    (I/dt + B_k) d_k = -p_k,        x_{k+1} = x_k + P d_k,

where ``p_k = P g_k`` is the projected gradient and ``B_k`` a BFGS matrix.  The
step size ``dt`` plays the role of a trust-region radius: it is enlarged or
reduced according to the agreement ratio between the actual decrease of ``f``
and the decrease predicted by the quadratic model
``q_k(x) = f_k + (x - x_k)^T g_k + 1/2 (x - x_k)^T B_k (x - x_k)``.
"""

import enum
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.linalg

from .constraints import RankPolicy, apply_projector, project_point, reduce


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    ITERATION_LIMIT = "IterationLimit"
    NUMERICAL_FAILURE = "NumericalFailure"


class NumericalFailure(RuntimeError):
    """Non-finite objective data or a broken factorisation."""


# ratio used when the step is rejected before being evaluated
REJECTED_RATIO = -1.0
MODEL_REDUCTION_FLOOR = 1e-300


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and trust-region constants.

    ``epsilon`` bounds ``||P g||_inf`` at termination; ``feasibility_tol``
    bounds ``||A x - b||_inf / (1 + ||b||_inf)`` on top of the least-squares
    floor of inconsistent data.
    """

    epsilon: float = 1e-6
    eta_a: float = 1e-6
    eta_1: float = 0.25
    gamma_1: float = 2.0
    eta_2: float = 0.75
    gamma_2: float = 0.5
    dt0_cap: float = 1e-2
    max_iterations: int = 500
    max_dt: float = 1e8
    feasibility_tol: float = 1e-6
    curvature_floor: float = 1e-10
    # below ``cancellation_level * eps * (1 + |f|)`` predicted reductions are
    # compared with a gradient-based actual reduction instead of f(x_k) - f(x+)
    cancellation_level: float = 100.0
    rank_policy: RankPolicy = field(default_factory=RankPolicy)

    def __post_init__(self):
        if not 0.0 < self.eta_a < self.eta_1 < self.eta_2 < 1.0:
            raise ValueError("need 0 < eta_a < eta_1 < eta_2 < 1")
        if not self.gamma_1 > 1.0 > self.gamma_2 > 0.0:
            raise ValueError("need gamma_1 > 1 > gamma_2 > 0")
        if self.epsilon <= 0.0 or self.feasibility_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be a positive integer")
        if self.dt0_cap <= 0.0 or self.max_dt <= 0.0:
            raise ValueError("time-step bounds must be positive")

    def to_dict(self):
        d = asdict(self)
        d["rank_policy"] = self.rank_policy.relative_threshold
        return d


@dataclass(frozen=True)
class SolverState:
    x: np.ndarray
    f: float
    g: np.ndarray
    pg: np.ndarray
    B: np.ndarray
    dt: float
    k: int


@dataclass(frozen=True)
class IterateRecord:
    k: int
    f: float
    pg_norm: float
    dt: float
    rho: float
    accepted: bool
    predicted_reduction: float
    actual_reduction: float
    step_norm: float = float("nan")
    pd_ok: bool = True


@dataclass
class SolveReport:
    status: Status
    x_star: np.ndarray
    f_star: float
    kkt_residual: float
    feasibility_residual: float
    iterations: int
    accepted_steps: int
    rejected_steps: int
    gradient_evals: int
    function_evals: int
    elapsed_time: float
    solver: str = "ptctr"
    problem: str = ""
    rank: int = 0
    multipliers: np.ndarray | None = None
    close: bool = False
    message: str = ""
    history: list = field(default_factory=list, repr=False)

    @property
    def converged(self):
        return self.status is Status.CONVERGED

    def summary(self):
        """JSON-friendly dict without the iterate vector or history."""
        return {
            "problem": self.problem,
            "solver": self.solver,
            "status": self.status.value,
            "close": self.close,
            "f_star": self.f_star,
            "kkt_residual": self.kkt_residual,
            "feasibility_residual": self.feasibility_residual,
            "iterations": self.iterations,
            "accepted_steps": self.accepted_steps,
            "rejected_steps": self.rejected_steps,
            "gradient_evals": self.gradient_evals,
            "function_evals": self.function_evals,
            "elapsed_seconds": self.elapsed_time,
            "rank": self.rank,
            "message": self.message,
        }


def initial_time_step(pg0, cap=1e-2):
    """``min(cap, 1 / ||p_0||)``; a zero gradient gives ``cap``."""
    norm = float(np.linalg.norm(pg0))
    if norm == 0.0:
        return cap
    return min(cap, 1.0 / norm)


def adjust_time_step(dt, rho, config=SolverConfig()):
    """Trust-region style update of the time step.

    ``|1 - rho| <= eta_1`` enlarges by ``gamma_1``, ``|1 - rho| >= eta_2``
    shrinks by ``gamma_2``; otherwise ``dt`` is kept.  The result is clamped
    to ``config.max_dt``.
    """
    if dt <= 0.0:
        raise ValueError("time step must be positive")
    dev = abs(1.0 - rho)
    if dev <= config.eta_1:
        dt = config.gamma_1 * dt
    elif dev >= config.eta_2:
        dt = config.gamma_2 * dt
    return min(dt, config.max_dt)


class _Coupling:
    """Cached ``C = V^T B V`` and ``D = V^T B P B V`` for the shifted PD test.

    In the basis ``[V_r, N]`` (``N`` spanning the null space of ``V_r^T``)

        tau I + B - P B P = [[tau I + C, V^T B N], [N^T B V, tau I]],

    so for ``tau > 0`` it is positive definite iff the ``r x r`` Schur
    complement ``tau I + C - D / tau`` is.  Both blocks follow a BFGS update by
    low-rank corrections, which keeps the test at ``O(n^2 + r^3)`` per
    iteration instead of a second ``n x n`` factorisation.
    """

    def __init__(self, C, D):
        self.C = C
        self.D = D

    @classmethod
    def from_matrix(cls, B, V):
        G = B @ V
        C = V.T @ G
        Gp = G - V @ C
        C = 0.5 * (C + C.T)
        D = Gp.T @ Gp
        return cls(C, D)

    @classmethod
    def identity(cls, r):
        return cls(np.eye(r), np.zeros((r, r)))

    def schur_factor(self, tau):
        r = self.C.shape[0]
        if r == 0:
            return True
        S = self.C - self.D / tau
        S.flat[:: r + 1] += tau
        try:
            scipy.linalg.cho_factor(S, overwrite_a=True, check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            return False
        return True

    def updated(self, B_old, V, u, a, y, c):
        """Coupling blocks for ``B_old - u u^T / a + y y^T / c``."""
        alpha = V.T @ u
        beta = V.T @ y
        X = np.column_stack([u - V @ alpha, y - V @ beta])
        Y = np.column_stack([-alpha / a, beta / c])
        W = V.T @ (B_old @ X)
        C = self.C - np.outer(alpha, alpha) / a + np.outer(beta, beta) / c
        WY = W @ Y.T
        D = self.D + WY + WY.T + Y @ (X.T @ X) @ Y.T
        return _Coupling(C, 0.5 * (D + D.T))


def _shifted_factor(B, tau):
    M = B.copy()
    M.flat[:: M.shape[0] + 1] += tau
    try:
        return scipy.linalg.cho_factor(M, overwrite_a=True, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        return None


def pd_check(dt, B, rc, coupling=None):
    """Test ``I/dt + B > 0`` and ``I/dt + B - P^T B P > 0``.

    Parameters
    ----------
    dt : float
        Time step, ``> 0``.
    B : ndarray, shape (n, n)
        Symmetric matrix.
    rc : ReducedConstraints
        Supplies ``P = I - V_r V_r^T``.
    coupling : optional
        Cached projector blocks; computed from ``B`` when omitted.

    Returns
    -------
    ok : bool
    factor : tuple or None
        Cholesky factor of ``I/dt + B`` (``scipy.linalg.cho_factor`` form)
        when ``ok``, for reuse in the predictor solve.
    """
    tau = 1.0 / dt
    if not math.isfinite(tau) or tau <= 0.0:
        return False, None
    factor = _shifted_factor(B, tau)
    if factor is None:
        return False, None
    if coupling is None:
        coupling = _Coupling.from_matrix(B, rc.basis)
    if not coupling.schur_factor(tau):
        return False, None
    return True, factor


def predictor_step(state, rc, factor=None):
    """Implicit-Euler predictor pulled back onto the constraint plane.

    Solves ``(I/dt + B) d = -p`` and returns ``(d, x + P d)``.
    """
    if not np.any(state.pg):
        return np.zeros_like(state.x), state.x.copy()
    if factor is None:
        ok, factor = pd_check(state.dt, state.B, rc)
        if not ok:
            raise NumericalFailure("shifted matrix is not positive definite")
    d = scipy.linalg.cho_solve(factor, -state.pg, check_finite=False)
    if not np.all(np.isfinite(d)):
        raise NumericalFailure("predictor solve produced non-finite values")
    return d, state.x + apply_projector(rc, d)


def model_reduction(g, B, s, Bs=None):
    """``q(x) - q(x + s) = -(g^T s + 1/2 s^T B s)``."""
    if Bs is None:
        Bs = B @ s
    return -(float(g @ s) + 0.5 * float(s @ Bs))


def trust_ratio(state, x_trial, f_trial):
    """Actual over predicted reduction; ``-1`` on a degenerate model or bad ``f``."""
    if not math.isfinite(f_trial):
        return REJECTED_RATIO
    pred = model_reduction(state.g, state.B, x_trial - state.x)
    if not pred > MODEL_REDUCTION_FLOOR:
        return REJECTED_RATIO
    return (state.f - f_trial) / pred


def _noise_floor(f, config):
    return config.cancellation_level * np.finfo(float).eps * (1.0 + abs(f))


def _bfgs_terms(B, s, y, curvature_floor):
    ys = float(y @ s)
    if not ys > curvature_floor * np.linalg.norm(y) * np.linalg.norm(s):
        return None
    u = B @ s
    a = float(s @ u)
    if not a > 0.0:
        raise NumericalFailure("s^T B s <= 0: quasi-Newton matrix lost definiteness")
    return u, a, ys


def bfgs_update(B, s, y, curvature_floor=1e-10):
    """BFGS update ``B - B s s^T B / (s^T B s) + y y^T / (y^T s)``.

    The update is skipped (``B`` returned unchanged, same object) when
    ``y^T s <= curvature_floor * ||y|| ||s||``.
    """
    terms = _bfgs_terms(B, s, y, curvature_floor)
    if terms is None:
        return B
    u, a, c = terms
    return _apply_bfgs(B, u, a, y, c)


def _apply_bfgs(B, u, a, y, c):
    B_new = B - np.outer(u, u / a)
    B_new += np.outer(y, y / c)
    # keep exact symmetry against rounding in the outer products
    B_new += B_new.T
    B_new *= 0.5
    return B_new


def _check_finite(value, what):
    if not np.all(np.isfinite(value)):
        raise NumericalFailure(f"non-finite {what}")


def _reduced_feasible(rc, x, config):
    """Feasibility test on the reduced system, used when the reduction relaxed the data.

    Once ``A x = b`` is inconsistent or singular values were discarded, the raw
    residual varies along the reduced plane and only ``V_r^T x = b_r`` is
    meaningful.
    """
    if rc.consistent and rc.dropped == 0.0:
        return False
    bound = config.feasibility_tol * (1.0 + float(np.max(np.abs(rc.rhs))))
    return float(np.max(np.abs(rc.residual(x)))) <= bound


def solve(problem, config=None, *, x0=None, initial_hessian=None, initial_dt=None,
          callback=None):
    """Minimise ``problem.f`` subject to its linear equality constraints.

    Parameters
    ----------
    problem : ObjectiveProblem
    config : SolverConfig, optional
    x0 : array_like, optional
        Overrides ``problem.x0``; the default start is the vector of ones.
    initial_hessian : ndarray, optional
        ``B_0``; the identity when omitted.
    initial_dt : float, optional
        Overrides the ``min(dt0_cap, 1/||p_0||)`` rule.
    callback : callable, optional
        Called as ``callback(record, before, after)`` after every iteration
        with the :class:`IterateRecord` and the states entering and leaving it.

    Returns
    -------
    SolveReport
    """
    config = config or SolverConfig()
    t_start = time.perf_counter()
    raw = problem.constraints
    rc = reduce(raw, config.rank_policy)
    n = raw.n
    V = rc.basis

    if x0 is None:
        x0 = problem.x0 if problem.x0 is not None else np.ones(n)
    x = project_point(rc, np.asarray(x0, dtype=float))

    nfev = ngev = 0
    history = []
    accepted = rejected = 0
    status, message = None, ""

    try:
        f = float(problem.f(x))
        g = np.asarray(problem.grad(x), dtype=float)
        nfev += 1
        ngev += 1
        _check_finite(f, "objective at the initial point")
        _check_finite(g, "gradient at the initial point")
        pg = apply_projector(rc, g)
        if initial_hessian is None:
            B = np.eye(n)
            coupling = _Coupling.identity(rc.rank)
        else:
            B = np.array(initial_hessian, dtype=float)
            coupling = _Coupling.from_matrix(B, V)
        dt = initial_dt if initial_dt is not None else initial_time_step(pg, config.dt0_cap)
        dt = min(dt, config.max_dt)
        state = SolverState(x, f, g, pg, B, dt, 0)

        while np.max(np.abs(state.pg)) > config.epsilon:
            if state.k >= config.max_iterations:
                status = Status.ITERATION_LIMIT
                message = f"reached {config.max_iterations} iterations"
                break
            ok, factor = pd_check(state.dt, state.B, rc, coupling)
            pred = actual = float("nan")
            g_trial = None
            step_norm = float("nan")
            rho = REJECTED_RATIO
            if ok:
                d, x_trial = predictor_step(state, rc, factor)
                s = x_trial - state.x
                step_norm = float(np.linalg.norm(s))
                f_trial = float(problem.f(x_trial))
                nfev += 1
                g_trial = None
                Bs = state.B @ s
                pred = model_reduction(state.g, state.B, s, Bs)
                if math.isfinite(f_trial):
                    actual = state.f - f_trial
                    if MODEL_REDUCTION_FLOOR < pred < _noise_floor(state.f, config):
                        # f differences are rounding noise here; the trapezoid
                        # rule on gradients has no cancellation
                        g_trial = np.asarray(problem.grad(x_trial), dtype=float)
                        ngev += 1
                        if np.all(np.isfinite(g_trial)):
                            actual = -0.5 * float((state.g + g_trial) @ s)
                    if pred > MODEL_REDUCTION_FLOOR:
                        rho = actual / pred

            if rho <= config.eta_a:
                rejected += 1
                new_dt = adjust_time_step(state.dt, rho, config)
                new_state = replace(state, dt=new_dt, k=state.k + 1)
            else:
                accepted += 1
                if g_trial is None:
                    g_new = np.asarray(problem.grad(x_trial), dtype=float)
                    ngev += 1
                else:
                    g_new = g_trial
                _check_finite(g_new, "gradient")
                pg_new = apply_projector(rc, g_new)
                y = pg_new - state.pg
                terms = _bfgs_terms(state.B, s, y, config.curvature_floor)
                if terms is None:
                    B_new = state.B
                else:
                    u, a, c = terms
                    B_new = _apply_bfgs(state.B, u, a, y, c)
                    coupling = coupling.updated(state.B, V, u, a, y, c)
                new_dt = adjust_time_step(state.dt, rho, config)
                new_state = SolverState(x_trial, f_trial, g_new, pg_new, B_new,
                                        new_dt, state.k + 1)

            record = IterateRecord(
                k=state.k, f=state.f, pg_norm=float(np.linalg.norm(state.pg)),
                dt=state.dt, rho=rho, accepted=rho > config.eta_a,
                predicted_reduction=pred, actual_reduction=actual,
                step_norm=step_norm, pd_ok=ok)
            history.append(record)
            if callback is not None:
                callback(record, state, new_state)
            state = new_state
    except NumericalFailure as exc:
        status = Status.NUMERICAL_FAILURE
        message = str(exc)
        if "state" not in locals():
            state = SolverState(x, float("nan"), np.full(n, np.nan), np.full(n, np.nan),
                                np.eye(n), float("nan"), 0)

    x_star = state.x
    kkt = float(np.max(np.abs(state.pg)))
    feas = float(np.max(np.abs(raw.residual(x_star))))
    feas_bound = config.feasibility_tol * (1.0 + rc.b_scale) + rc.inconsistency
    if status is None:
        if feas <= feas_bound or _reduced_feasible(rc, x_star, config):
            status = Status.CONVERGED
        else:
            status = Status.NUMERICAL_FAILURE
            message = f"feasibility drift {feas:.3e} exceeds {feas_bound:.3e}"
    lam = rc.multipliers(state.g) if np.all(np.isfinite(state.g)) else None

    return SolveReport(
        status=status, x_star=x_star, f_star=state.f, kkt_residual=kkt,
        feasibility_residual=feas, iterations=state.k, accepted_steps=accepted,
        rejected_steps=rejected, gradient_evals=ngev, function_evals=nfev,
        elapsed_time=time.perf_counter() - t_start, solver="ptctr",
        problem=getattr(problem, "name", ""), rank=rc.rank, multipliers=lam,
        message=message, history=history)
