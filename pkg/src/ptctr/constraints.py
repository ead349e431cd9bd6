"""Preprocessing of linear equality constraints.

Possibly rank-deficient or inconsistent data ``A x = b`` is reduced through a
thin SVD to an orthonormal system ``V_r^T x = b_r``.  When the original system
is inconsistent the reduced one describes the least-squares solution set of
``min ||A x - b||``.  The orthogonal projector onto the null space is
``P = I - V_r V_r^T``; it is applied through ``V_r`` products and never formed
as an ``n x n`` matrix in the solver path.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class DegenerateConstraintsError(ValueError):
    """Raised when the constraint matrix carries no information (A == 0)."""


@dataclass(frozen=True)
class RawConstraints:
    """Dense constraint data ``A x = b`` (``A`` is ``m x n``)."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.ndim != 2 or b.ndim != 1:
            raise ValueError("A must be 2-D and b 1-D")
        if A.shape[0] < 1 or A.shape[1] < 1:
            raise ValueError("constraint matrix must have m >= 1 and n >= 1")
        if A.shape[0] != b.shape[0]:
            raise ValueError(
                f"dimension mismatch: A has {A.shape[0]} rows, b has {b.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    def residual(self, x):
        return self.A @ x - self.b


@dataclass(frozen=True)
class RankPolicy:
    """Numerical rank rule: keep singular values above ``relative_threshold * s_1``."""

    relative_threshold: float = 1e-10

    def __post_init__(self):
        if not 0.0 < self.relative_threshold < 1.0:
            raise ValueError("relative_threshold must lie in (0, 1)")


@dataclass(frozen=True)
class ReducedConstraints:
    """Orthonormal reduced system ``basis^T x = rhs``.

    Attributes
    ----------
    basis : ndarray, shape (n, r)
        First ``r`` right singular vectors of ``A`` (``V_r``).
    rhs : ndarray, shape (r,)
        ``(U^T b)[:r] / s[:r]``.
    rank : int
        Numerical rank ``r``.
    singular_values : ndarray, shape (r,)
        Retained singular values, descending.
    left : ndarray, shape (m, r)
        Matching left singular vectors, kept for multiplier recovery.
    inconsistency : float
        ``||A x_p - b||_inf`` at the minimum-norm least-squares point
        ``x_p = V_r b_r``; zero (to rounding) for consistent systems.
    b_scale : float
        ``||b||_inf`` of the raw data.
    dropped : float
        Largest singular value discarded by the rank rule (0 if none).
    """

    basis: np.ndarray
    rhs: np.ndarray
    rank: int
    singular_values: np.ndarray
    left: np.ndarray = field(repr=False)
    inconsistency: float = 0.0
    b_scale: float = 1.0
    dropped: float = 0.0

    @property
    def n(self):
        return self.basis.shape[0]

    @property
    def consistent(self):
        return self.inconsistency <= 1e-8 * (1.0 + self.b_scale)

    def particular_point(self):
        """Minimum-norm point of the reduced plane, ``V_r b_r``."""
        return self.basis @ self.rhs

    def residual(self, x):
        """Reduced residual ``V_r^T x - b_r``."""
        return self.basis.T @ x - self.rhs

    def multipliers(self, g):
        """Least-squares multipliers ``lambda = -(A A^T)^+ A g``.

        With ``A = U_r S_r V_r^T`` this is ``-U_r S_r^{-1} V_r^T g``, so that
        ``g + A^T lambda = P g``.
        """
        return -self.left @ ((self.basis.T @ g) / self.singular_values)

    def dense_projector(self):
        """Materialise ``I - V_r V_r^T``; diagnostics and tests only."""
        return np.eye(self.n) - self.basis @ self.basis.T


def reduce(raw, policy=RankPolicy()):
    """Reduce ``A x = b`` to an orthonormal system through the thin SVD.

    Parameters
    ----------
    raw : RawConstraints
    policy : RankPolicy, optional
        Singular values ``s_i <= policy.relative_threshold * s_1`` are treated
        as zero.

    Returns
    -------
    ReducedConstraints

    Raises
    ------
    DegenerateConstraintsError
        If ``A`` is identically zero.
    """
    if not isinstance(raw, RawConstraints):
        raise TypeError("reduce expects RawConstraints")
    A, b = raw.A, raw.b
    if not np.any(A):
        raise DegenerateConstraintsError("degenerate constraints: A is all zero")
    U, s, Vt = scipy.linalg.svd(A, full_matrices=False, check_finite=True)
    if not s[0] > 0.0:
        raise DegenerateConstraintsError("degenerate constraints: sigma_1 == 0")
    r = int(np.count_nonzero(s > policy.relative_threshold * s[0]))
    U_r = np.ascontiguousarray(U[:, :r])
    V_r = np.ascontiguousarray(Vt[:r].T)
    s_r = s[:r].copy()
    b_r = (U_r.T @ b) / s_r
    x_p = V_r @ b_r
    inconsistency = float(np.max(np.abs(A @ x_p - b)))
    b_scale = float(np.max(np.abs(b)))
    dropped = float(s[r]) if r < s.size else 0.0
    return ReducedConstraints(V_r, b_r, r, s_r, U_r, inconsistency, b_scale, dropped)


def apply_projector(rc, v):
    """Return ``(I - V_r V_r^T) v`` without forming the projector."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != rc.n:
        raise ValueError(f"expected vector of length {rc.n}, got {v.shape[0]}")
    return v - rc.basis @ (rc.basis.T @ v)


def project_point(rc, x0):
    """Closest point to ``x0`` on the plane ``V_r^T x = b_r``.

    Computed as ``x0 + V_r (b_r - V_r^T x0)``.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (rc.n,):
        raise ValueError(f"expected point of length {rc.n}, got shape {x0.shape}")
    return x0 + rc.basis @ (rc.rhs - rc.basis.T @ x0)
