"""Cumulative hazards, survival and cumulative incidence from a fitted model.

Causes are numbered 1..k here, as in the data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .estimator import FitResult
from .splines import basis_deriv_matrix, basis_matrix

DEFAULT_PANELS = 20_000


@dataclass(frozen=True)
class ParametricBaseline:
    """Baseline hazards given in closed form, for checks against known truth.

    ``cumhaz0[j](t)`` and ``hazard0[j](t)`` are vectorized callables for cause
    ``j + 1``; ``betas`` has shape ``(k, p)``.
    """

    betas: np.ndarray
    cumhaz0: Sequence[Callable]
    hazard0: Sequence[Callable]
    tau: float

    @property
    def k(self) -> int:
        return len(self.cumhaz0)

    @classmethod
    def constant(cls, rates, p: int = 1, tau: float = 1.0, betas=None) -> "ParametricBaseline":
        rates = [float(r) for r in rates]
        betas = np.zeros((len(rates), p)) if betas is None else np.atleast_2d(betas)
        return cls(betas,
                   [lambda t, r=r: r * np.asarray(t, dtype=float) for r in rates],
                   [lambda t, r=r: np.full(np.shape(t), r) for r in rates],
                   float(tau))


@dataclass(frozen=True)
class CifCurve:
    cause: int
    z: np.ndarray
    grid: np.ndarray
    values: np.ndarray


def _check(model, t) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(~np.isfinite(t)) or np.any(t < 0) or np.any(t > model.tau):
        raise ValueError(f"prediction times must lie in [0, {model.tau}]")
    return t


def _base(model, j: int, t: np.ndarray):
    """Baseline ``(Lambda_0, lambda_0)`` of 0-based cause ``j`` at ``t``."""
    if isinstance(model, FitResult):
        theta = model.theta
        kv = theta.knots[j]
        c = theta.coefs[j]
        ephi = np.exp(basis_matrix(kv, t) @ c)
        return ephi, ephi * (basis_deriv_matrix(kv, t) @ c)
    return np.asarray(model.cumhaz0[j](t), dtype=float), np.asarray(model.hazard0[j](t), dtype=float)


def _k(model) -> int:
    return model.theta.k if isinstance(model, FitResult) else model.k


def _risk(model, j: int, z) -> float:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    return float(np.exp(model.betas[j] @ z))


def _cause_index(model, cause: int) -> int:
    if not 1 <= cause <= _k(model):
        raise ValueError(f"cause must be in 1..{_k(model)}, got {cause}")
    return cause - 1


def cumulative_hazard(model, cause: int, t, z):
    """``exp(phi_j(t) + beta_j' z)`` for a fit; the closed form otherwise."""
    j = _cause_index(model, cause)
    tt = _check(model, t)
    out = _base(model, j, tt)[0] * _risk(model, j, z)
    return float(out[0]) if np.ndim(t) == 0 else out


def hazard(model, cause: int, t, z):
    j = _cause_index(model, cause)
    tt = _check(model, t)
    out = _base(model, j, tt)[1] * _risk(model, j, z)
    return float(out[0]) if np.ndim(t) == 0 else out


def survival(model, t, z):
    """All-cause survival from time 0, ``exp(-sum_j [Lambda_j(t) - Lambda_j(0)])``.

    The sieve puts ``Lambda_j(0) = exp(phi_j(0)) > 0``; anchoring at 0 keeps the
    survival function and the cumulative incidences on the same footing.
    """
    tt = _check(model, t)
    total = np.zeros_like(tt)
    for j in range(_k(model)):
        L = _base(model, j, np.concatenate([[0.0], tt]))[0] * _risk(model, j, z)
        total += L[1:] - L[0]
    out = np.exp(-total)
    return float(out[0]) if np.ndim(t) == 0 else out


def _fine_grid(grid: np.ndarray, n_panels: int) -> tuple:
    top = float(grid.max())
    base = np.linspace(0.0, top, n_panels + 1) if top > 0 else np.zeros(1)
    fine = np.union1d(base, grid)
    return fine, np.searchsorted(fine, grid)


def cif_all(model, z, grid, n_panels: int = DEFAULT_PANELS) -> list:
    """Cumulative incidence curves of every cause on ``grid``."""
    grid = _check(model, grid)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    if n_panels < 1000:
        raise ValueError("use at least 1000 quadrature panels")
    fine, pos = _fine_grid(grid, n_panels)
    k = _k(model)
    risks = [_risk(model, j, z) for j in range(k)]
    Ls, lams = [], []
    for j in range(k):
        L, lam = _base(model, j, fine)
        Ls.append((L - L[0]) * risks[j])
        lams.append(lam * risks[j])
    S = np.exp(-np.sum(Ls, axis=0))
    zz = np.atleast_1d(np.asarray(z, dtype=float))
    out = []
    for j in range(k):
        F = cumulative_trapezoid(S * lams[j], fine, initial=0.0)
        out.append(CifCurve(j + 1, zz, grid, F[pos]))
    return out


def cif(model, cause: int, z, grid, n_panels: int = DEFAULT_PANELS) -> CifCurve:
    """Cumulative incidence ``int_0^t S(s) lambda_j(s) ds`` on ``grid``.

    Composite trapezoid rule on ``n_panels`` equal panels over
    ``[0, max(grid)]`` refined to include every grid point.
    """
    j = _cause_index(model, cause)
    return cif_all(model, z, grid, n_panels)[j]
