"""Observed data, parameters, and the misclassification model."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .splines import KnotVector, constrain

LOG_T_FLOOR = 1e-12


class IdentifiabilityWarning(UserWarning):
    """Correct-classification probability at or below 0.5 somewhere in the data."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Competing-risks data with possibly misclassified causes.

    Attributes
    ----------
    time : ndarray, shape (n,)
        Observed times ``X = min(T, U)``.
    cause : ndarray of int, shape (n,)
        Observed cause, 0 for right-censored and 1..k otherwise.
    z : ndarray, shape (n, p)
        Covariates of the proportional hazards model.
    k : int
        Number of causes.
    w : ndarray, shape (n, r), optional
        Covariates available to the misclassification design. Defaults to ``z``.
    """

    time: np.ndarray
    cause: np.ndarray
    z: np.ndarray
    k: int = 2
    w: np.ndarray | None = None
    z_names: tuple = ()
    w_names: tuple = ()

    def __post_init__(self):
        time = np.asarray(self.time, dtype=float).ravel()
        cause = np.asarray(self.cause).ravel()
        z = np.asarray(self.z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        w = z if self.w is None else np.asarray(self.w, dtype=float)
        if w.ndim == 1:
            w = w[:, None]
        n = time.size
        if n == 0:
            raise ValueError("dataset must contain at least one subject")
        if cause.size != n or z.shape[0] != n or w.shape[0] != n:
            raise ValueError("time, cause, z and w must have the same number of rows")
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")
        if np.any(~np.isfinite(time)) or np.any(time < 0):
            raise ValueError("observed times must be finite and >= 0")
        if not np.all(np.equal(np.mod(cause, 1), 0)):
            raise ValueError("cause must be integer-valued")
        cause = cause.astype(int)
        if cause.min() < 0 or cause.max() > self.k:
            raise ValueError(f"cause must lie in 0..{self.k}")
        if not np.all(np.isfinite(z)) or not np.all(np.isfinite(w)):
            raise ValueError("covariates must be finite")
        for name, arr in (("time", time), ("cause", cause), ("z", z), ("w", w)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "z_names", tuple(self.z_names))
        object.__setattr__(self, "w_names", tuple(self.w_names))

    @property
    def n(self) -> int:
        return self.time.size

    @property
    def p(self) -> int:
        return self.z.shape[1]

    @property
    def tau(self) -> float:
        return float(self.time.max())

    @property
    def deltas(self) -> np.ndarray:
        """Observed cause indicators, shape ``(n, k)``."""
        return (self.cause[:, None] == np.arange(1, self.k + 1)).astype(float)

    @property
    def event_times(self) -> np.ndarray:
        return self.time[self.cause > 0]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.time[idx], self.cause[idx], self.z[idx], self.k,
                       self.w[idx], self.z_names, self.w_names)


# -- misclassification design rows -------------------------------------------

_SIMPLE_TERMS = ("intercept", "t", "log_t", "t2")
_TRANSFORMS = ("identity", "sqrt", "log", "square")


def _normalize_term(term) -> dict:
    if isinstance(term, str):
        if term not in _SIMPLE_TERMS:
            raise ValueError(f"unknown design term {term!r}")
        return {"kind": term}
    term = dict(term)
    kind = term.get("kind")
    if kind in _SIMPLE_TERMS:
        return {"kind": kind}
    if kind == "window":
        lo = float(term["lo"])
        hi = term.get("hi")
        return {"kind": "window", "lo": lo, "hi": None if hi is None else float(hi)}
    if kind == "covariate":
        transform = term.get("transform", "identity")
        if transform not in _TRANSFORMS:
            raise ValueError(f"unknown covariate transform {transform!r}")
        return {"kind": "covariate", "index": int(term["index"]), "transform": transform}
    raise ValueError(f"unknown design term {term!r}")


def piecewise_linear_terms(breaks) -> list:
    """Window terms ``I(a_l <= t < a_{l+1}) (t - a_l)``, the last window open-ended."""
    breaks = [float(b) for b in breaks]
    out = []
    for i, lo in enumerate(breaks):
        hi = breaks[i + 1] if i + 1 < len(breaks) else None
        out.append({"kind": "window", "lo": lo, "hi": hi})
    return out


@dataclass(frozen=True)
class DesignSpec:
    """Declarative map from ``(t, w)`` to a misclassification design row.

    ``terms`` entries are ``"intercept"``, ``"t"``, ``"log_t"``, ``"t2"``, or dicts
    ``{"kind": "covariate", "index": i, "transform": ...}`` and
    ``{"kind": "window", "lo": a, "hi": b}`` (``hi=None`` for no upper end).
    """

    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(_normalize_term(t) for t in self.terms))

    @property
    def q(self) -> int:
        return len(self.terms)

    def rows(self, t, w) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        w = np.asarray(w, dtype=float)
        if w.ndim == 1:
            w = w.reshape(t.size, -1) if t.size > 1 else w[None, :]
        cols = []
        for term in self.terms:
            kind = term["kind"]
            if kind == "intercept":
                cols.append(np.ones_like(t))
            elif kind == "t":
                cols.append(t)
            elif kind == "log_t":
                cols.append(np.log(np.maximum(t, LOG_T_FLOOR)))
            elif kind == "t2":
                cols.append(t * t)
            elif kind == "window":
                inside = t >= term["lo"]
                if term["hi"] is not None:
                    inside &= t < term["hi"]
                cols.append(np.where(inside, t - term["lo"], 0.0))
            else:
                v = w[:, term["index"]]
                tr = term["transform"]
                if tr == "sqrt":
                    v = np.sqrt(v)
                elif tr == "log":
                    v = np.log(v)
                elif tr == "square":
                    v = v * v
                cols.append(v)
        return np.column_stack(cols) if cols else np.zeros((t.size, 0))

    def to_list(self) -> list:
        return [t["kind"] if t["kind"] in _SIMPLE_TERMS else dict(t) for t in self.terms]


# -- misclassification model ---------------------------------------------------

@dataclass(frozen=True)
class MisclassModel:
    """Column-stochastic classification probabilities ``P(C* = j | C = h, t, w)``.

    Each entry of ``links`` is an ordered pair ``(j, h)`` of 0-based causes with
    ``j != h``; its probability follows a generalized logit in the design row with
    the correct classification ``(h, h)`` as reference category.  Off-diagonal
    entries not listed are structurally zero.  Link ``l`` uses coefficients
    ``gamma[l*q:(l+1)*q]`` where ``q = design.q``.

    ``eta_target`` lists the links shifted by the sensitivity term ``eta * s``;
    ``None`` means every link.
    """

    k: int
    design: DesignSpec = field(default_factory=lambda: DesignSpec(()))
    links: tuple = ()
    eta_target: tuple | None = None

    def __post_init__(self):
        links = tuple((int(j), int(h)) for j, h in self.links)
        for j, h in links:
            if j == h or not (0 <= j < self.k and 0 <= h < self.k):
                raise ValueError(f"invalid link {(j, h)} for k={self.k}")
        if len(set(links)) != len(links):
            raise ValueError("duplicate links")
        object.__setattr__(self, "links", links)
        if self.eta_target is not None:
            target = tuple((int(j), int(h)) for j, h in self.eta_target)
            if any(pair not in links for pair in target):
                raise ValueError("eta_target must be a subset of links")
            object.__setattr__(self, "eta_target", target)

    @property
    def n_gamma(self) -> int:
        return len(self.links) * self.design.q

    @classmethod
    def identity(cls, k: int) -> "MisclassModel":
        return cls(k)

    @classmethod
    def unidirectional(cls, design: DesignSpec, observed: int = 0, true: int = 1,
                       k: int = 2) -> "MisclassModel":
        """True cause ``true`` may be recorded as ``observed``; nothing else flips."""
        return cls(k, design, ((observed, true),))

    def matrices(self, gamma, t, w, eta: float = 0.0, s: int = 1) -> np.ndarray:
        """Classification matrices at each ``(t_i, w_i)``, shape ``(n, k, k)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        n = t.size
        out = np.zeros((n, self.k, self.k))
        if not self.links:
            out[:, np.arange(self.k), np.arange(self.k)] = 1.0
            return out
        gamma = np.asarray(gamma, dtype=float).ravel()
        if gamma.size != self.n_gamma:
            raise ValueError(f"gamma has length {gamma.size}, model needs {self.n_gamma}")
        X = self.design.rows(t, w)
        q = self.design.q
        target = self.links if self.eta_target is None else self.eta_target
        shift = float(eta) * float(s)

        lin = {}
        for l, pair in enumerate(self.links):
            lp = X @ gamma[l * q:(l + 1) * q]
            if pair in target:
                lp = lp + shift
            if not np.all(np.isfinite(lp)):
                bad = int(np.nonzero(~np.isfinite(lp))[0][0])
                raise ValueError(f"non-finite misclassification linear predictor at row {bad}")
            lin[pair] = lp

        for h in range(self.k):
            rows = [j for j in range(self.k) if (j, h) in lin]
            if not rows:
                out[:, h, h] = 1.0
                continue
            if len(rows) == 1:
                (j,) = rows
                out[:, j, h] = expit(lin[(j, h)])
                out[:, h, h] = expit(-lin[(j, h)])
                continue
            L = np.column_stack([np.zeros(n)] + [lin[(j, h)] for j in rows])
            L -= L.max(axis=1, keepdims=True)
            E = np.exp(L)
            P = E / E.sum(axis=1, keepdims=True)
            out[:, h, h] = P[:, 0]
            for c, j in enumerate(rows, start=1):
                out[:, j, h] = P[:, c]
        return out

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "design": self.design.to_list(),
            "links": [list(p) for p in self.links],
            "eta_target": None if self.eta_target is None else [list(p) for p in self.eta_target],
        }


def classification_matrix(model: MisclassModel, gamma, t: float, z, eta: float = 0.0,
                          s: int = 1) -> np.ndarray:
    """The ``k x k`` matrix with entry ``(j, h) = P(C* = j | C = h, t, z)``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    w = np.atleast_1d(np.asarray(z, dtype=float))[None, :]
    return model.matrices(gamma, [t], w, eta, s)[0]


@dataclass(frozen=True)
class IdentifiabilityReport:
    min_diagonal: float
    fraction_violating: float
    warning: str | None


def identifiability_check(model: MisclassModel, gamma, dataset: Dataset,
                          eta: float = 0.0) -> IdentifiabilityReport:
    """Scan ``pi*_{jj}(x_i, w_i)`` over all subjects and causes.

    Warns with :class:`IdentifiabilityWarning` when the minimum is at or
    below 0.5; never raises for that reason.
    """
    P = model.matrices(gamma, dataset.time, dataset.w, eta, 1)
    diag = np.diagonal(P, axis1=1, axis2=2)
    mn = float(diag.min())
    frac = float(np.mean(diag <= 0.5))
    msg = None
    if mn <= 0.5:
        msg = (f"correct-classification probability reaches {mn:.4g} <= 0.5 "
               f"({frac:.2%} of subject-cause pairs); model may not be identifiable")
        warnings.warn(msg, IdentifiabilityWarning, stacklevel=2)
    return IdentifiabilityReport(mn, frac, msg)


@dataclass(frozen=True)
class GammaEstimate:
    """Externally estimated misclassification parameters and their covariance."""

    gamma: np.ndarray
    omega: np.ndarray
    model: MisclassModel | None = None

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float).ravel()
        om = np.asarray(self.omega, dtype=float)
        if om.ndim == 0 and om == 0:
            om = np.zeros((g.size, g.size))
        if om.shape != (g.size, g.size):
            raise ValueError(f"omega must be {g.size}x{g.size}, got {om.shape}")
        if not np.allclose(om, om.T, atol=1e-10, rtol=0):
            raise ValueError("omega must be symmetric")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "omega", 0.5 * (om + om.T))

    @property
    def q(self) -> int:
        return self.gamma.size

    def clipped_omega(self) -> np.ndarray:
        """``omega`` with negative eigenvalues set to zero."""
        if self.q == 0:
            return self.omega.copy()
        vals, vecs = np.linalg.eigh(self.omega)
        if vals.min() < -1e-10 * max(1.0, abs(vals).max()):
            warnings.warn(f"omega has eigenvalue {vals.min():.3g}; clipping to PSD")
        vals = np.clip(vals, 0.0, None)
        return (vecs * vals) @ vecs.T

    def scaled(self, c: float) -> "GammaEstimate":
        return GammaEstimate(self.gamma, c * self.omega, self.model)


@dataclass
class Theta:
    """Per-cause regression coefficients and raw spline coefficients.

    ``betas`` has shape ``(k, p)``; ``raw[j]`` is the unconstrained vector whose
    :func:`~crrmisc.splines.constrain` image gives the increasing coefficients of
    the log cumulative baseline hazard of cause ``j`` on ``knots[j]``.
    """

    betas: np.ndarray
    raw: list
    knots: list

    def __post_init__(self):
        self.betas = np.atleast_2d(np.asarray(self.betas, dtype=float))
        self.raw = [np.asarray(r, dtype=float).ravel() for r in self.raw]
        if not (len(self.raw) == len(self.knots) == self.betas.shape[0]):
            raise ValueError("betas, raw and knots must have one entry per cause")
        for r, kv in zip(self.raw, self.knots):
            if r.size != kv.dim:
                raise ValueError(f"spline coefficients have length {r.size}, basis has {kv.dim}")

    @property
    def k(self) -> int:
        return self.betas.shape[0]

    @property
    def p(self) -> int:
        return self.betas.shape[1]

    @property
    def coefs(self) -> list:
        """Strictly increasing spline coefficients per cause."""
        return [constrain(r) for r in self.raw]

    @property
    def layout(self) -> list:
        """``(beta_slice, raw_slice)`` per cause in the packed vector."""
        out = []
        pos = 0
        for r in self.raw:
            b = slice(pos, pos + self.p)
            pos += self.p
            s = slice(pos, pos + r.size)
            pos += r.size
            out.append((b, s))
        return out

    def pack(self) -> np.ndarray:
        parts = []
        for j in range(self.k):
            parts.append(self.betas[j])
            parts.append(self.raw[j])
        return np.concatenate(parts)

    def unpack(self, x) -> "Theta":
        """New ``Theta`` with this one's layout and the values in ``x``."""
        x = np.asarray(x, dtype=float)
        betas = np.empty_like(self.betas)
        raw = []
        for j, (b, s) in enumerate(self.layout):
            betas[j] = x[b]
            raw.append(x[s].copy())
        return Theta(betas, raw, list(self.knots))

    def copy(self) -> "Theta":
        return Theta(self.betas.copy(), [r.copy() for r in self.raw], list(self.knots))

    def to_dict(self) -> dict:
        return {
            "betas": self.betas.tolist(),
            "raw": [r.tolist() for r in self.raw],
            "knots": [kv.to_dict() for kv in self.knots],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Theta":
        return cls(np.asarray(d["betas"]), [np.asarray(r) for r in d["raw"]],
                   [KnotVector.from_dict(kv) for kv in d["knots"]])
