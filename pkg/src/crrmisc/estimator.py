"""Sieve maximum pseudo-likelihood fitting."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .likelihood import LikelihoodError, Objective
from .model import Dataset, MisclassModel, Theta, identifiability_check
from .splines import KnotVector, basis_matrix, make_knots, unconstrain

NA_FLOOR = 1e-4
MIN_INCREMENT = 1e-3
STALL_ITERS = 5
MAX_RESTARTS = 10


@dataclass(frozen=True)
class FitConfig:
    """Fitting options.

    ``n_interior`` overrides the knot-count rule; pass an int for all causes or
    a sequence with one count per cause.
    """

    order: int = 4
    n_interior: int | tuple | None = None
    smoothness_p: int = 2
    tol_rel_obj: float = 1e-8
    tol_grad: float = 1e-5
    max_iter: int = 500
    eta: float = 0.0

    def __post_init__(self):
        if self.tol_rel_obj <= 0 or self.tol_grad <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.order < 2:
            raise ValueError("order must be >= 2 so the hazard phi' is not identically zero")
        if isinstance(self.n_interior, list):
            object.__setattr__(self, "n_interior", tuple(self.n_interior))


@dataclass
class FitResult:
    theta: Theta
    loglik: float
    iterations: int
    grad_norm: float
    converged: bool
    knot_report: list
    floored_terms: int
    stop_reason: str = ""
    warnings: list = field(default_factory=list)
    model: MisclassModel | None = None
    gamma: np.ndarray | None = None
    eta: float = 0.0

    @property
    def betas(self) -> np.ndarray:
        return self.theta.betas

    @property
    def k(self) -> int:
        return self.theta.k

    @property
    def tau(self) -> float:
        return self.theta.knots[0].tau


def default_knot_count(n: int, p: int = 2) -> int:
    """``ceil(n ** (1 / (1 + 2p)))`` interior knots."""
    if n < 2 or p < 1:
        raise ValueError("need n >= 2 and p >= 1")
    # round away representation noise so exact powers are not bumped up
    return int(math.ceil(round(n ** (1.0 / (1.0 + 2.0 * p)), 9)))


def choose_knots(dataset: Dataset, config: FitConfig) -> list:
    """One knot vector per cause, placed at quantiles of all observed event times."""
    k = dataset.k
    if config.n_interior is None:
        counts = [default_knot_count(dataset.n, config.smoothness_p)] * k
    elif isinstance(config.n_interior, (int, np.integer)):
        counts = [int(config.n_interior)] * k
    else:
        counts = [int(c) for c in config.n_interior]
        if len(counts) != k:
            raise ValueError(f"n_interior needs {k} entries, got {len(counts)}")
    ev = dataset.event_times
    if ev.size == 0:
        ev = dataset.time
    return [make_knots(ev, c, config.order, dataset.tau) for c in counts]


def nelson_aalen(time, is_event) -> tuple:
    """Nelson-Aalen cumulative hazard at the sorted distinct times."""
    time = np.asarray(time, dtype=float)
    is_event = np.asarray(is_event, dtype=bool)
    grid, inv = np.unique(time, return_inverse=True)
    d = np.bincount(inv, weights=is_event.astype(float), minlength=grid.size)
    leaving = np.bincount(inv, minlength=grid.size)
    at_risk = time.size - np.concatenate([[0], np.cumsum(leaving)[:-1]])
    return grid, np.cumsum(d / at_risk)


def initialize(dataset: Dataset, knots) -> tuple:
    """Starting values: zero betas and splines fitted to log Nelson-Aalen curves.

    Returns ``(theta, warnings)``.  A cause without observed events gets a flat,
    low-hazard spline.
    """
    k, p = dataset.k, dataset.p
    raw = []
    notes = []
    for j in range(k):
        kv = knots[j]
        is_ev = dataset.cause == j + 1
        if not is_ev.any():
            msg = f"cause {j + 1} has no observed events; using a flat low-hazard start"
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            notes.append(msg)
            c = math.log(NA_FLOOR) + MIN_INCREMENT * np.arange(kv.dim)
            raw.append(unconstrain(c))
            continue
        grid, na = nelson_aalen(dataset.time, is_ev)
        target = np.log(np.maximum(na, NA_FLOOR))
        B = basis_matrix(kv, grid)
        c, *_ = np.linalg.lstsq(B, target, rcond=None)
        for s in range(1, c.size):
            c[s] = max(c[s], c[s - 1] + MIN_INCREMENT)
        raw.append(unconstrain(c))
    return Theta(np.zeros((k, p)), raw, list(knots)), notes


def _maximize(obj: Objective, x0, config: FitConfig):
    """BFGS on ``-loglik`` with Wolfe (cubic-interpolating) line searches.

    Stops when the scaled gradient max-norm falls below ``tol_grad``, or when
    the relative objective change stays below ``tol_rel_obj`` for
    ``STALL_ITERS`` consecutive iterations.  A line-search failure or a stall
    with the gradient test unmet restarts from the current point with the
    Hessian approximation reset (a steepest-descent step), at most
    ``MAX_RESTARTS`` times.
    """
    cache = {}

    def fun(x):
        key = x.tobytes()
        if key not in cache:
            cache.clear()
            try:
                f, g = obj.value_and_grad(x)
            except LikelihoodError:
                cache[key] = (math.inf, np.zeros_like(x))
            else:
                cache[key] = (-f, -g)
        return cache[key]

    state = {"f": None, "x": np.array(x0, dtype=float), "iters": 0, "reason": "", "small": 0}

    def callback(intermediate_result):
        x = intermediate_result.x
        f, g = fun(x)
        prev = state["f"]
        state["f"], state["x"] = f, x.copy()
        state["iters"] += 1
        if np.max(np.abs(g)) <= config.tol_grad * (1.0 + abs(f)):
            state["reason"] = "gradient"
            raise StopIteration
        if prev is not None and abs(prev - f) <= config.tol_rel_obj * max(1.0, abs(f)):
            state["small"] += 1
            if state["small"] >= STALL_ITERS:
                state["reason"] = "relative objective change"
                raise StopIteration
        else:
            state["small"] = 0
        if state["iters"] >= config.max_iter:
            state["reason"] = "max_iter"
            raise StopIteration

    f0, g0 = fun(state["x"])
    if not math.isfinite(f0):
        raise LikelihoodError("objective is not finite at the starting values")
    state["f"] = f0
    if np.max(np.abs(g0)) <= config.tol_grad * (1.0 + abs(f0)):
        return state["x"], 0, "gradient"

    restarts = 0
    while True:
        res = minimize(fun, state["x"], jac=True, method="BFGS", callback=callback,
                       options={"maxiter": config.max_iter - state["iters"], "gtol": 0.0})
        reason = state["reason"]
        if reason in ("gradient", "max_iter"):
            break
        if not reason:
            # no callback stop: either scipy's own maxiter or a line-search failure
            if res.fun < state["f"]:
                state["f"], state["x"] = res.fun, res.x.copy()
            if state["iters"] >= config.max_iter or res.status == 1:
                state["reason"] = "max_iter"
                break
            reason = "line search failed"
        if restarts >= MAX_RESTARTS:
            state["reason"] = reason
            break
        restarts += 1
        state["reason"], state["small"] = "", 0
    return state["x"], state["iters"], state["reason"]


def fit(dataset: Dataset, config: FitConfig | None = None, model: MisclassModel | None = None,
        gamma=None, *, knots=None, init: Theta | None = None) -> FitResult:
    """Maximize the log pseudo-likelihood over the spline sieve.

    Parameters
    ----------
    dataset : Dataset
    config : FitConfig, optional
    model : MisclassModel or None
        Misclassification model. ``None`` fits the classical likelihood that
        treats observed causes as true.
    gamma : array_like, optional
        Misclassification parameters (held fixed).
    knots : list of KnotVector, optional
        Sieve to use; chosen from the data by default.
    init : Theta, optional
        Warm start; must live on ``knots``.
    """
    config = config or FitConfig()
    notes = []
    if model is not None and model.links:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            identifiability_check(model, gamma, dataset, config.eta)
        for w in caught:
            notes.append(str(w.message))
            warnings.warn(w.message, w.category, stacklevel=2)

    if knots is None:
        knots = init.knots if init is not None else choose_knots(dataset, config)
    knots = list(knots)
    if init is None:
        init, init_notes = initialize(dataset, knots)
        notes.extend(init_notes)
    elif any(a != b for a, b in zip(init.knots, knots)):
        raise ValueError("warm start lives on a different sieve")
    if any(kv.tau < dataset.tau for kv in knots):
        raise ValueError("knot domain does not cover the observed times")

    obj = Objective(dataset, knots, model, gamma, config.eta)
    x, iters, reason = _maximize(obj, init.pack(), config)
    loglik, g = obj.value_and_grad(x)
    grad_norm = float(np.max(np.abs(g))) if g.size else 0.0
    converged = grad_norm <= config.tol_grad * (1.0 + abs(loglik))
    if not converged:
        notes.append(f"optimizer stopped without converging ({reason})")
    theta = init.unpack(x)
    dphi_min = min(float(np.min(obj.D[j] @ c)) for j, c in enumerate(theta.coefs))
    if dphi_min <= 0:
        notes.append(f"fitted phi' reaches {dphi_min:.3g} <= 0 at an observed time")
    if obj.floored:
        notes.append(f"{obj.floored} event terms hit the log floor")
    return FitResult(
        theta=theta, loglik=loglik, iterations=iters, grad_norm=grad_norm,
        converged=converged, knot_report=list(knots), floored_terms=obj.floored,
        stop_reason=reason, warnings=notes, model=model,
        gamma=None if gamma is None else np.asarray(gamma, dtype=float), eta=config.eta,
    )
