"""Visual-inertial navigation localization simulation.

A camera flies at constant altitude and observes ``N`` ground landmarks in two
consecutive frames.  Pinhole image coordinates from both frames, the altimeter
height difference and the inertial step length give, per frame, a 17-variable
problem

    min  (||(x_{k+1}, y_{k+1}) - (x_k, y_k)|| - dist_hor)^2
    s.t. A_{k+1} w = b_{k+1}                       (20 rows)

with ``w = (x_{k+1}, y_{k+1}, x_l1, y_l1, h_1, ..., x_l5, y_l5, h_5)``.  The
previous frame's estimate enters ``b_{k+1}``, so errors propagate along the
trajectory.
"""

import csv
import math
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .baselines import FlowConfig, PenaltyConfig, gradient_flow_solve, penalty_solve
from .constraints import DegenerateConstraintsError, RankPolicy, RawConstraints, reduce
from .problems import ObjectiveProblem
from .solver import SolverConfig, Status, solve

SOLVERS = ("ptctr", "penalty", "gradient_flow")
CSV_COLUMNS = ("k", "x_true", "y_true", "z_true", "x_est", "y_est", "err_xy",
               "solver_iters", "solver_status")

# landmark layout relative to the observing camera
LANDMARK_SPREAD = 58.75
LANDMARK_HEIGHT = 40.0
# turn frame of the second trajectory
TURN_FRAME = 1800
SQRT_FLOOR = 1e-12


@dataclass(frozen=True)
class VinParams:
    focal_length: float = 24e-3
    altitude: float = 1200.0
    speed: float = 235.0
    period: float = 0.5
    frames: int = 7200
    landmarks: int = 5
    max_iterations: int = 200
    # the scale direction of the frame problem is weakly coupled to the
    # objective, so a 1e-6 KKT test leaves ~1e-5 m of step-length error that
    # accumulates over frames
    epsilon: float = 1e-8
    rank_threshold: float = 1e-10

    def __post_init__(self):
        if min(self.focal_length, self.altitude, self.speed, self.period, self.epsilon) <= 0.0:
            raise ValueError("VinParams values must be positive")
        if self.frames < 2 or self.landmarks < 1 or self.max_iterations < 1:
            raise ValueError("need frames >= 2, landmarks >= 1, max_iterations >= 1")

    @property
    def dist_hor(self):
        return self.speed * self.period


@dataclass(frozen=True)
class NoiseModel:
    """Measurement noise: Gaussian altimeter, uniform step length and angles."""

    altitude_sigma: float = 1.0
    distance_halfwidth: float = 2.57
    angle_halfwidth: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if min(self.altitude_sigma, self.distance_halfwidth, self.angle_halfwidth) < 0.0:
            raise ValueError("noise magnitudes must be nonnegative")

    def rng(self):
        return np.random.default_rng(self.seed)


@dataclass(frozen=True)
class VinFrame:
    """Measurements linking camera ``k`` to camera ``k + 1``.

    ``image_k`` and ``image_next`` hold the ``(x_p, y_p)`` coordinates of every
    landmark as seen from the two cameras, one row per landmark.
    """

    k: int
    camera: np.ndarray
    camera_next: np.ndarray
    landmarks: np.ndarray
    image_k: np.ndarray
    image_next: np.ndarray
    dh: float
    dist_hor: float
    focal_length: float = 24e-3

    def true_w(self):
        """Ground-truth variable vector of the frame problem."""
        w = [self.camera_next[0], self.camera_next[1]]
        for lm in self.landmarks:
            w.extend((lm[0], lm[1], self.camera[2] - lm[2]))
        return np.array(w)


@dataclass
class VinEstimate:
    trajectory: int
    frames: np.ndarray
    truth: np.ndarray
    estimate: np.ndarray
    error: np.ndarray
    iterations: np.ndarray
    statuses: list
    ranks: np.ndarray
    feasible: np.ndarray
    elapsed_time: float
    solver: str = "ptctr"
    messages: list = field(default_factory=list)

    def rows(self):
        for i, k in enumerate(self.frames):
            yield {
                "k": int(k),
                "x_true": float(self.truth[i, 0]),
                "y_true": float(self.truth[i, 1]),
                "z_true": float(self.truth[i, 2]),
                "x_est": float(self.estimate[i, 0]),
                "y_est": float(self.estimate[i, 1]),
                "err_xy": float(self.error[i]),
                "solver_iters": int(self.iterations[i]),
                "solver_status": self.statuses[i],
            }

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            for row in self.rows():
                for key in ("x_true", "y_true", "z_true", "x_est", "y_est", "err_xy"):
                    row[key] = f"{row[key]:.12e}"
                writer.writerow(row)

    def summary(self):
        it = self.iterations
        return {
            "trajectory": self.trajectory,
            "solver": self.solver,
            "frames_solved": int(len(self.frames)),
            "max_error": float(np.max(self.error)),
            "mean_error": float(np.mean(self.error)),
            "final_error": float(self.error[-1]),
            "total_time": self.elapsed_time,
            "iterations_mean": float(np.mean(it)),
            "iterations_max": int(np.max(it)),
            "iterations_total": int(np.sum(it)),
            "status_counts": dict(Counter(self.statuses)),
            "rank_min": int(np.min(self.ranks)),
            "rank_max": int(np.max(self.ranks)),
            "all_feasible": bool(np.all(self.feasible)),
        }


def trajectory(traj_id, k, step=117.5, altitude=1200.0):
    """Ground-truth camera position ``(x, y, z)`` at frame ``k``.

    1: straight north.  2: heading 30 degrees east of north up to the turn
    frame, then north, with the distance term restarting at ``step * k``.
    3: straight, heading 30 degrees east of north.
    """
    if k < 1:
        raise ValueError("frame index must be >= 1")
    d = step * k
    half, root = 0.5, math.sqrt(3.0) / 2.0
    if traj_id == 1:
        return (0.0, d, altitude)
    if traj_id == 2:
        if k <= TURN_FRAME:
            return (half * d, root * d, altitude)
        d_turn = step * TURN_FRAME
        return (half * d_turn, root * d_turn + d, altitude)
    if traj_id == 3:
        return (half * d, root * d, altitude)
    raise ValueError(f"unknown trajectory id {traj_id!r}; expected 1, 2 or 3")


def landmarks(camera, N=5):
    """Landmarks observed from ``camera``, shape ``(N, 3)``."""
    if N < 1:
        raise ValueError("need at least one landmark")
    x, y, _ = camera
    frac = np.arange(1, N + 1) / N
    return np.column_stack([x + LANDMARK_SPREAD * frac, y + LANDMARK_SPREAD * frac,
                            LANDMARK_HEIGHT * frac])


def project_pinhole(camera, landmark, f_c=24e-3, angle_error=None):
    """Image coordinates of ``landmark`` seen from ``camera``.

    ``angle_error`` (scalar or ``(ex, ey)``) perturbs the line-of-sight angles
    before the tangent is taken; ``None`` gives the exact pinhole projection.
    """
    h = camera[2] - landmark[2]
    if not h > 0.0:
        raise ValueError("landmark above camera")
    dx = (camera[0] - landmark[0]) / h
    dy = (camera[1] - landmark[1]) / h
    if angle_error is None:
        return (f_c * dx, f_c * dy)
    ex, ey = np.broadcast_to(np.asarray(angle_error, dtype=float), (2,))
    tx = math.atan(dx) + ex
    ty = math.atan(dy) + ey
    if abs(tx) >= math.pi / 2 or abs(ty) >= math.pi / 2:
        raise ValueError("projection out of view")
    return (f_c * math.tan(tx), f_c * math.tan(ty))


def frame_matrix(frame):
    """Constraint data ``(A, b)`` of the frame problem, without the prior position.

    ``b`` carries zeros where the previous position enters; see
    :func:`assemble_frame_problem`.
    """
    N = frame.landmarks.shape[0]
    n = 2 + 3 * N
    A = np.zeros((4 * N, n))
    b = np.zeros(4 * N)
    fc = frame.focal_length
    for i in range(N):
        r, c = 4 * i, 2 + 3 * i
        xk, yk = frame.image_k[i]
        xn, yn = frame.image_next[i]
        A[r, c], A[r, c + 2] = 1.0, xk / fc
        A[r + 1, c + 1], A[r + 1, c + 2] = 1.0, yk / fc
        A[r + 2, 0], A[r + 2, c], A[r + 2, c + 2] = 1.0, -1.0, -xn / fc
        A[r + 3, 1], A[r + 3, c + 1], A[r + 3, c + 2] = 1.0, -1.0, -yn / fc
        b[r + 2] = frame.dh / fc * xn
        b[r + 3] = frame.dh / fc * yn
    return A, b


def assemble_frame_problem(frame, prev_estimate, x0=None):
    """Build the 17-variable (for five landmarks) problem of one frame.

    Parameters
    ----------
    frame : VinFrame
    prev_estimate : (float, float)
        Position ``(x_k, y_k)`` used in the right-hand side and the objective.
    x0 : array_like, optional
        Start point; defaults to the previous position with every landmark
        directly below it at the camera altitude.
    """
    A, b = frame_matrix(frame)
    px, py = float(prev_estimate[0]), float(prev_estimate[1])
    N = frame.landmarks.shape[0]
    b[0::4] = px
    b[1::4] = py
    dist = float(frame.dist_hor)
    eps2 = SQRT_FLOOR ** 2

    def f(w):
        rho = math.sqrt((w[0] - px) ** 2 + (w[1] - py) ** 2 + eps2)
        return (rho - dist) ** 2

    def grad(w):
        dx, dy = w[0] - px, w[1] - py
        rho = math.sqrt(dx * dx + dy * dy + eps2)
        g = np.zeros_like(w, dtype=float)
        scale = 2.0 * (rho - dist) / rho
        g[0], g[1] = scale * dx, scale * dy
        return g

    if x0 is None:
        x0 = np.concatenate([[px, py], np.tile([px, py, frame.camera[2]], N)])
    return ObjectiveProblem(name=f"vin-frame-{frame.k}", f=f, grad=grad,
                            constraints=RawConstraints(A, b), x0=np.asarray(x0, float))


def make_frame(traj_id, k, params=VinParams(), noise_draws=None):
    """Measurements between frames ``k`` and ``k + 1`` of a trajectory.

    ``noise_draws`` is ``None`` (clean) or a dict with keys ``angles`` (shape
    ``(2, N, 2)``: frame, landmark, axis), ``dh`` and ``dist``.
    """
    step = params.dist_hor
    cam = np.array(trajectory(traj_id, k, step, params.altitude))
    nxt = np.array(trajectory(traj_id, k + 1, step, params.altitude))
    lms = landmarks(cam, params.landmarks)
    fc = params.focal_length
    img_k = np.empty((params.landmarks, 2))
    img_n = np.empty((params.landmarks, 2))
    for i, lm in enumerate(lms):
        err_k = err_n = None
        if noise_draws is not None:
            err_k, err_n = noise_draws["angles"][0, i], noise_draws["angles"][1, i]
        img_k[i] = project_pinhole(cam, lm, fc, err_k)
        img_n[i] = project_pinhole(nxt, lm, fc, err_n)
    dh = nxt[2] - cam[2]
    dist = math.hypot(nxt[0] - cam[0], nxt[1] - cam[1])
    if noise_draws is not None:
        dh += noise_draws["dh"]
        dist += noise_draws["dist"]
    return VinFrame(k, cam, nxt, lms, img_k, img_n, float(dh), float(dist), fc)


def _draw(rng, noise, N):
    # fixed draw order per frame keeps runs reproducible
    angles = rng.uniform(-noise.angle_halfwidth, noise.angle_halfwidth, size=(2, N, 2))
    dh = rng.normal(0.0, noise.altitude_sigma)
    dist = rng.uniform(-noise.distance_halfwidth, noise.distance_halfwidth)
    return {"angles": angles, "dh": dh, "dist": dist}


def _solve_frame(problem, solver, x0, params):
    policy = RankPolicy(params.rank_threshold)
    if solver == "ptctr":
        config = SolverConfig(epsilon=params.epsilon, max_iterations=params.max_iterations,
                              rank_policy=policy)
        return solve(problem, config, x0=x0)
    if solver == "penalty":
        config = PenaltyConfig(kkt_tol=params.epsilon, max_inner=params.max_iterations,
                               rank_policy=policy)
        return penalty_solve(problem, config, x0=x0)
    return gradient_flow_solve(problem, FlowConfig(tol=params.epsilon, rank_policy=policy), x0=x0)


def simulate(traj_id, params=VinParams(), noise=None, solver="ptctr", frames=None):
    """Run the sequential localisation loop over one trajectory.

    Frame ``k`` (``1 <= k < frames``) estimates the position at ``k + 1`` from
    the estimate at ``k``; frame 1 starts from the true initial position.
    Each solve is warm-started at the previous optimum.  A frame that cannot
    be built or solved keeps the last estimate and is recorded as
    ``NumericalFailure``.
    """
    if solver not in SOLVERS:
        raise ValueError(f"unknown solver {solver!r}; expected one of {SOLVERS}")
    if traj_id not in (1, 2, 3):
        raise ValueError(f"unknown trajectory id {traj_id!r}; expected 1, 2 or 3")
    K = params.frames if frames is None else int(frames)
    if K < 2:
        raise ValueError("need at least two frames")
    rng = noise.rng() if noise is not None else None
    N = params.landmarks

    t0 = time.perf_counter()
    start = trajectory(traj_id, 1, params.dist_hor, params.altitude)
    est = np.array(start[:2])
    w = None
    count = K - 1
    truth = np.empty((count, 3))
    estimate = np.empty((count, 2))
    iters = np.zeros(count, dtype=int)
    ranks = np.zeros(count, dtype=int)
    feasible = np.zeros(count, dtype=bool)
    statuses, messages = [], []
    for i, k in enumerate(range(1, K)):
        draws = _draw(rng, noise, N) if rng is not None else None
        status, message = Status.NUMERICAL_FAILURE.value, ""
        try:
            frame = make_frame(traj_id, k, params, draws)
            truth[i] = frame.camera_next
            problem = assemble_frame_problem(frame, est)
            report = _solve_frame(problem, solver, w if w is not None else problem.x0, params)
            iters[i] = report.iterations
            ranks[i] = report.rank
            status, message = report.status.value, report.message
            feasible[i] = _feasible(problem, report.x_star, params)
            if np.all(np.isfinite(report.x_star)) and report.status is not Status.NUMERICAL_FAILURE:
                w = report.x_star
                est = w[:2].copy()
        except (ValueError, DegenerateConstraintsError, np.linalg.LinAlgError) as exc:
            truth[i] = trajectory(traj_id, k + 1, params.dist_hor, params.altitude)
            message = str(exc)
        estimate[i] = est
        statuses.append(status)
        messages.append(message)
    error = np.hypot(estimate[:, 0] - truth[:, 0], estimate[:, 1] - truth[:, 1])
    return VinEstimate(traj_id, np.arange(2, K + 1), truth, estimate, error, iters,
                       statuses, ranks, feasible, time.perf_counter() - t0, solver, messages)


def _feasible(problem, x, params, tol=1e-6):
    """Whether ``x`` satisfies the frame constraints as the solver sees them.

    The raw residual is tested first; for relaxed (inconsistent or truncated)
    systems the reduced residual ``V_r^T x - b_r`` decides.
    """
    if not np.all(np.isfinite(x)):
        return False
    raw = problem.constraints
    rc = reduce(raw, RankPolicy(params.rank_threshold))
    if np.max(np.abs(raw.residual(x))) <= tol * (1.0 + rc.b_scale) + rc.inconsistency:
        return True
    return bool(np.max(np.abs(rc.residual(x))) <= tol * (1.0 + np.max(np.abs(rc.rhs))))
