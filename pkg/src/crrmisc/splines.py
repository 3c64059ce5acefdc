"""B-spline bases on [0, tau] and the monotone coefficient map.

The log cumulative baseline hazard of each cause is a spline
``phi(t) = sum_s c_s B_{s,m}(t)`` whose coefficients are kept strictly
increasing, which makes ``exp(phi)`` nondecreasing.  The optimizer works on
unconstrained ``raw`` vectors mapped through :func:`constrain`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# exp(-745) is the smallest positive double exp() returns
_LOG_TINY = -745.0


@dataclass(frozen=True)
class KnotVector:
    """Knot configuration for an order-``order`` B-spline basis on [0, tau].

    Attributes
    ----------
    interior : tuple of float
        Strictly increasing interior knots in (0, tau).
    tau : float
        Right boundary of the domain. The left boundary is always 0.
    order : int
        Spline order m (degree m - 1).
    """

    interior: tuple
    tau: float
    order: int = 4

    def __post_init__(self):
        interior = tuple(float(v) for v in self.interior)
        object.__setattr__(self, "interior", interior)
        object.__setattr__(self, "tau", float(self.tau))
        if self.tau <= 0 or not np.isfinite(self.tau):
            raise ValueError(f"tau must be positive and finite, got {self.tau}")
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")
        arr = np.asarray(interior)
        if arr.size and (arr[0] <= 0 or arr[-1] >= self.tau):
            raise ValueError("interior knots must lie strictly inside (0, tau)")
        if arr.size > 1 and np.any(np.diff(arr) < 0):
            raise ValueError("interior knots must be nondecreasing")

    @property
    def boundary_low(self) -> float:
        return 0.0

    @property
    def boundary_high(self) -> float:
        return self.tau

    @property
    def n_interior(self) -> int:
        return len(self.interior)

    @property
    def dim(self) -> int:
        """Number of basis functions, ``n_interior + order``."""
        return self.n_interior + self.order

    @property
    def full(self) -> np.ndarray:
        """Full knot sequence with each boundary knot repeated ``order`` times."""
        m = self.order
        return np.concatenate([np.zeros(m), self.interior, np.full(m, self.tau)])

    def to_dict(self) -> dict:
        return {"interior": list(self.interior), "tau": self.tau, "order": self.order}

    @classmethod
    def from_dict(cls, d: dict) -> "KnotVector":
        return cls(tuple(d["interior"]), d["tau"], int(d["order"]))


def make_knots(event_times, n_interior: int, order: int = 4, tau: float | None = None) -> KnotVector:
    """Place interior knots at empirical quantiles of the distinct event times.

    Knot ``q`` sits at quantile ``q / (n_interior + 1)``.  Coincident knots are
    nudged right so the interior sequence is strictly increasing.
    """
    times = np.asarray(event_times, dtype=float).ravel()
    if tau is None:
        tau = float(times.max()) if times.size else 0.0
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if n_interior < 0:
        raise ValueError(f"n_interior must be >= 0, got {n_interior}")
    if n_interior == 0:
        return KnotVector((), tau, order)
    if times.size == 0:
        raise ValueError("event_times must be nonempty")
    if times.min() < 0 or times.max() > tau:
        raise ValueError("event times must lie in [0, tau]")

    distinct = np.unique(times)
    probs = np.arange(1, n_interior + 1) / (n_interior + 1)
    knots = np.quantile(distinct, probs)

    eps = 1e-8 * tau
    out = []
    prev = 0.0
    for v in knots:
        v = max(float(v), prev + eps)
        out.append(v)
        prev = v
    out = np.asarray(out)
    if out[-1] >= tau:
        # pack the offending tail just below tau, preserving strict order
        over = out >= tau - eps
        start = tau - eps * (over.sum() + 1)
        out[over] = start + eps * np.arange(1, over.sum() + 1)
        if np.any(np.diff(out) <= 0) or out[0] <= 0:
            raise ValueError("cannot place distinct interior knots in (0, tau)")
    return KnotVector(tuple(out), tau, order)


def _check_domain(knots: KnotVector, t: np.ndarray) -> None:
    if np.any(~np.isfinite(t)) or np.any(t < 0) or np.any(t > knots.tau):
        bad = t[(~np.isfinite(t)) | (t < 0) | (t > knots.tau)]
        raise ValueError(
            f"time {bad[0]!r} outside spline domain [0, {knots.tau}]; no extrapolation"
        )


def _cox_de_boor(full: np.ndarray, order: int, t: np.ndarray, tau: float) -> np.ndarray:
    """All order-``order`` B-splines at ``t`` by the Cox-de Boor recursion."""
    n_int = len(full) - 1
    left = full[:-1]
    right = full[1:]
    B = ((t[:, None] >= left) & (t[:, None] < right)).astype(float)
    # close the last nonempty interval on the right so t = tau is covered
    last = np.nonzero(right > left)[0][-1]
    at_end = t == tau
    if np.any(at_end):
        B[at_end] = 0.0
        B[at_end, last] = 1.0

    for r in range(2, order + 1):
        n_r = n_int - r + 1
        a = full[:n_r]
        b = full[r - 1 : r - 1 + n_r]
        c = full[1 : 1 + n_r]
        d = full[r : r + n_r]
        den1 = b - a
        den2 = d - c
        w1 = np.divide(t[:, None] - a, den1, out=np.zeros((t.size, n_r)), where=den1 > 0)
        w2 = np.divide(d - t[:, None], den2, out=np.zeros((t.size, n_r)), where=den2 > 0)
        B = w1 * B[:, :n_r] + w2 * B[:, 1 : n_r + 1]
    return B


def basis_matrix(knots: KnotVector, t) -> np.ndarray:
    """Evaluate every basis function at each time in ``t``.

    Returns an array of shape ``(len(t), knots.dim)``.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    _check_domain(knots, t)
    return _cox_de_boor(knots.full, knots.order, t, knots.tau)


def basis_deriv_matrix(knots: KnotVector, t) -> np.ndarray:
    """First derivatives of every basis function, shape ``(len(t), knots.dim)``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    _check_domain(knots, t)
    m = knots.order
    if m == 1:
        return np.zeros((t.size, knots.dim))
    full = knots.full
    lower = _cox_de_boor(full, m - 1, t, knots.tau)  # dim + 1 columns
    dim = knots.dim
    s = np.arange(dim)
    den1 = full[s + m - 1] - full[s]
    den2 = full[s + m] - full[s + 1]
    inv1 = np.divide(m - 1.0, den1, out=np.zeros(dim), where=den1 > 0)
    inv2 = np.divide(m - 1.0, den2, out=np.zeros(dim), where=den2 > 0)
    return lower[:, :dim] * inv1 - lower[:, 1 : dim + 1] * inv2


def basis(knots: KnotVector, t: float) -> np.ndarray:
    """Basis vector ``B_{s,m}(t)`` at a single time."""
    return basis_matrix(knots, [t])[0]


def basis_deriv(knots: KnotVector, t: float) -> np.ndarray:
    """Derivative of the basis vector at a single time."""
    return basis_deriv_matrix(knots, [t])[0]


def constrain(raw) -> np.ndarray:
    """Map an unconstrained vector to a strictly increasing one.

    ``c[0] = raw[0]`` and ``c[s] = c[s-1] + exp(raw[s])``.  Increments are
    floored at ``exp(-745)`` and, where that underflows relative to ``c[s-1]``,
    bumped to the next representable double.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.size == 0:
        return raw.copy()
    inc = np.exp(np.maximum(raw[1:], _LOG_TINY))
    c = raw[0] + np.concatenate([[0.0], np.cumsum(inc)])
    for s in range(1, c.size):
        if c[s] <= c[s - 1]:
            c[s] = np.nextafter(c[s - 1], np.inf)
    return c


def constrain_jacobian(raw) -> np.ndarray:
    """Jacobian ``d constrain(raw) / d raw`` (lower triangular)."""
    raw = np.asarray(raw, dtype=float)
    d = raw.size
    J = np.zeros((d, d))
    if d == 0:
        return J
    J[:, 0] = 1.0
    inc = np.exp(np.maximum(raw[1:], _LOG_TINY))
    for u in range(1, d):
        J[u:, u] = inc[u - 1]
    return J


def constrain_vjp(raw, grad_c) -> np.ndarray:
    """Chain a gradient with respect to ``constrain(raw)`` back to ``raw``."""
    raw = np.asarray(raw, dtype=float)
    grad_c = np.asarray(grad_c, dtype=float)
    tail = np.cumsum(grad_c[::-1])[::-1]
    out = np.empty_like(grad_c)
    out[0] = tail[0]
    out[1:] = np.exp(np.maximum(raw[1:], _LOG_TINY)) * tail[1:]
    return out


def unconstrain(constrained, min_increment: float = 0.0) -> np.ndarray:
    """Inverse of :func:`constrain` for a strictly increasing vector."""
    c = np.asarray(constrained, dtype=float)
    if c.size == 0:
        return c.copy()
    inc = np.diff(c)
    if np.any(inc <= min_increment) and min_increment == 0.0:
        raise ValueError("coefficients must be strictly increasing")
    inc = np.maximum(inc, min_increment) if min_increment > 0 else inc
    return np.concatenate([[c[0]], np.log(inc)])


def spline_value(knots: KnotVector, constrained, t) -> np.ndarray:
    """Evaluate ``sum_s constrained[s] B_s(t)`` at each time in ``t``."""
    return basis_matrix(knots, t) @ np.asarray(constrained, dtype=float)
