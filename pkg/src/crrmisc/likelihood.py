"""Misclassification-adjusted log pseudo-likelihood and its gradient.

For subject ``i`` with observed cause ``j`` the event term is

    log sum_h Lambda_h(X_i) phi_h'(X_i) pi*_{jh}(X_i, W_i)

and every subject contributes ``-sum_j Lambda_j(X_i)``, where
``Lambda_h(t) = exp(phi_h(t) + beta_h' z)``.  Censored subjects never touch the
classification matrix.
"""

from __future__ import annotations

import math

import numpy as np

from .model import Dataset, MisclassModel, Theta
from .splines import basis_deriv_matrix, basis_matrix, constrain, constrain_vjp

LOG_FLOOR = 1e-300


class LikelihoodError(ArithmeticError):
    """The objective is not finite for some subject."""

    def __init__(self, message, subject=None):
        super().__init__(message)
        self.subject = subject


def phi(theta: Theta, j: int, t) -> np.ndarray | float:
    """Log cumulative baseline hazard of cause ``j`` (0-based) at ``t``."""
    out = basis_matrix(theta.knots[j], t) @ constrain(theta.raw[j])
    return float(out[0]) if np.ndim(t) == 0 else out


def phi_deriv(theta: Theta, j: int, t) -> np.ndarray | float:
    out = basis_deriv_matrix(theta.knots[j], t) @ constrain(theta.raw[j])
    return float(out[0]) if np.ndim(t) == 0 else out


class Objective:
    """Log pseudo-likelihood of one dataset on a fixed sieve, as a function of
    the packed parameter vector.

    Basis values at the observed times and the classification probabilities
    needed by each event term are computed once here; ``value_and_grad`` is
    then cheap enough to call inside an optimizer.  With ``model=None`` the
    classical (no misclassification) likelihood is evaluated through a
    separate path that uses ``lambda_{C*}`` directly.
    """

    def __init__(self, dataset: Dataset, knots, model: MisclassModel | None = None,
                 gamma=None, eta: float = 0.0):
        self.dataset = dataset
        self.knots = list(knots)
        self.model = model
        k = dataset.k
        if len(self.knots) != k:
            raise ValueError(f"need {k} knot vectors, got {len(self.knots)}")
        t = dataset.time
        self.B = [basis_matrix(kv, t) for kv in self.knots]
        self.D = [basis_deriv_matrix(kv, t) for kv in self.knots]
        self.Z = dataset.z
        self.event = dataset.cause > 0
        self.obs = np.where(self.event, dataset.cause - 1, 0)
        self.ev_idx = np.nonzero(self.event)[0]
        if model is not None:
            if model.k != k:
                raise ValueError(f"misclassification model has k={model.k}, data k={k}")
            gamma = np.zeros(0) if gamma is None else gamma
            ev = self.ev_idx
            P = model.matrices(gamma, t[ev], dataset.w[ev], eta, 1)
            # row of the classification matrix for the observed cause: P_obs[e, h]
            self.P_obs = P[np.arange(ev.size), self.obs[ev], :]
        else:
            self.P_obs = None
        p = dataset.p
        self.sizes = [(p, kv.dim) for kv in self.knots]
        self.n_params = sum(a + b for a, b in self.sizes)
        self.floored = 0

    def _split(self, x):
        x = np.asarray(x, dtype=float)
        pos = 0
        out = []
        for p, d in self.sizes:
            out.append((x[pos:pos + p], x[pos + p:pos + p + d]))
            pos += p + d
        return out

    def _parts(self, x):
        parts = self._split(x)
        k = len(parts)
        n = self.dataset.n
        lin = np.empty((n, k))
        dphi = np.empty((n, k))
        coefs = []
        for j, (beta, raw) in enumerate(parts):
            c = constrain(raw)
            coefs.append(c)
            lin[:, j] = self.B[j] @ c + self.Z @ beta
            dphi[:, j] = self.D[j] @ c
        with np.errstate(over="ignore"):
            Lam = np.exp(lin)
        return parts, coefs, Lam, dphi

    def _mix(self, Lam, dphi):
        ev = self.ev_idx
        lam_ev = Lam[ev] * dphi[ev]
        if self.P_obs is None:
            contrib = np.zeros_like(lam_ev)
            rows = np.arange(ev.size)
            contrib[rows, self.obs[ev]] = lam_ev[rows, self.obs[ev]]
        else:
            with np.errstate(invalid="ignore"):
                contrib = lam_ev * self.P_obs
        return contrib

    def contributions(self, x) -> np.ndarray:
        """Per-subject log-likelihood terms."""
        _, _, Lam, dphi = self._parts(x)
        contrib = self._mix(Lam, dphi)
        M = contrib.sum(axis=1)
        self.floored = int(np.count_nonzero(~(M > LOG_FLOOR)))
        with np.errstate(invalid="ignore"):
            out = -Lam.sum(axis=1)
            out[self.ev_idx] += np.log(np.maximum(M, LOG_FLOOR))
        return out

    def value(self, x) -> float:
        c = self.contributions(x)
        if not np.all(np.isfinite(c)):
            i = int(np.nonzero(~np.isfinite(c))[0][0])
            raise LikelihoodError(f"log-likelihood is not finite at subject {i}", subject=i)
        return math.fsum(c)

    def value_and_grad(self, x):
        parts, coefs, Lam, dphi = self._parts(x)
        contrib = self._mix(Lam, dphi)
        ev = self.ev_idx
        M = contrib.sum(axis=1)
        ok = M > LOG_FLOOR
        self.floored = int(np.count_nonzero(~ok))
        with np.errstate(invalid="ignore", divide="ignore"):
            terms = -Lam.sum(axis=1)
            terms[ev] += np.log(np.where(ok, M, LOG_FLOOR))
            wts = np.where(ok[:, None], contrib / M[:, None], 0.0)
        if not np.all(np.isfinite(terms)):
            i = int(np.nonzero(~np.isfinite(terms))[0][0])
            raise LikelihoodError(f"log-likelihood is not finite at subject {i}", subject=i)

        grads = []
        for j, (beta, raw) in enumerate(parts):
            # d/d(linear predictor) of log lambda is 1; d/dc through phi' uses 1/phi'
            a = -Lam[:, j]
            a_ev = a.copy()
            a_ev[ev] += wts[:, j]
            g_beta = self.Z.T @ a_ev
            g_c = self.B[j].T @ a_ev
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(wts[:, j] > 0, wts[:, j] / dphi[ev, j], 0.0)
            g_c += self.D[j][ev].T @ r
            grads.append(g_beta)
            grads.append(constrain_vjp(raw, g_c))
        return math.fsum(terms), np.concatenate(grads)


def log_pseudo_likelihood(dataset: Dataset, theta: Theta, model: MisclassModel | None,
                          gamma=None, eta: float = 0.0) -> float:
    """Misclassification-adjusted log pseudo-likelihood at ``theta``.

    Classification probabilities are evaluated at ``(gamma, eta)`` for the main
    study (``s = 1``).  ``model=None`` gives the classical likelihood.
    """
    return Objective(dataset, theta.knots, model, gamma, eta).value(theta.pack())


def gradient(dataset: Dataset, theta: Theta, model: MisclassModel | None, gamma=None,
             eta: float = 0.0) -> np.ndarray:
    """Analytic gradient in the packed (beta, raw spline) layout of ``theta``."""
    return Objective(dataset, theta.knots, model, gamma, eta).value_and_grad(theta.pack())[1]
