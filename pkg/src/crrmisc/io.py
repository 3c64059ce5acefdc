"""File formats: data CSV, misclassification-parameter JSON, fit reports.

Data CSV
    Header row; ``time`` (>= 0), ``cause`` (0 = censored, 1..k) and numeric
    covariate columns.

Gamma JSON
    ``{"gamma": [...], "omega": [[...]], "design": [...], "links": [[j, h], ...],
    "eta_target": [[j, h], ...]}`` with 1-based causes in ``links``.  Design
    terms are ``"intercept"``, ``"t"``, ``"log_t"``, ``"t2"``,
    ``{"covariate": name, "transform": "identity" | "sqrt" | "log" | "square"}``,
    ``{"window": [lo, hi]}`` (``hi`` may be null) and
    ``{"piecewise_linear": [a1, a2, ...]}``.  An empty ``links`` list (or an empty
    ``gamma``) means no misclassification.
"""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .model import Dataset, DesignSpec, GammaEstimate, MisclassModel, piecewise_linear_terms

SCHEMA = "crrmisc/1"


class SchemaError(ValueError):
    """Input file does not follow its schema."""


def _float(value: str, where: str) -> float:
    try:
        out = float(value)
    except ValueError:
        raise SchemaError(f"{where}: {value!r} is not a number") from None
    if not math.isfinite(out):
        raise SchemaError(f"{where}: {value!r} is not finite")
    return out


def read_table(text: str, source: str = "data") -> tuple:
    """Parse a data CSV into ``(header, time, cause, columns)``."""
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise SchemaError(f"{source}: empty file")
    header = [h.strip() for h in rows[0]]
    for required in ("time", "cause"):
        if required not in header:
            raise SchemaError(f"{source}: missing required column {required!r}")
    if len(set(header)) != len(header):
        raise SchemaError(f"{source}: duplicate column names")
    if len(rows) < 2:
        raise SchemaError(f"{source}: no data rows")
    values = {h: [] for h in header}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise SchemaError(f"{source} line {lineno}: expected {len(header)} fields, got {len(row)}")
        for h, cell in zip(header, row):
            values[h].append(_float(cell.strip(), f"{source} line {lineno}, column {h!r}"))
    time = np.asarray(values.pop("time"))
    cause = np.asarray(values.pop("cause"))
    for lineno, (t, c) in enumerate(zip(time, cause), start=2):
        if t < 0:
            raise SchemaError(f"{source} line {lineno}: time must be >= 0")
        if c != int(c) or c < 0:
            raise SchemaError(f"{source} line {lineno}: cause must be a nonnegative integer")
    cols = {h: np.asarray(v) for h, v in values.items()}
    return header, time, cause.astype(int), cols


def parse_gamma(doc, columns, k: int) -> tuple:
    """Build ``(GammaEstimate, MisclassModel, w_names)`` from a gamma document.

    ``columns`` lists the names available to covariate terms; ``w_names`` gives
    the ones the design uses, in the order of the ``w`` matrix.
    """
    if not isinstance(doc, dict):
        raise SchemaError("gamma: top level must be an object")
    try:
        gamma = np.asarray(doc.get("gamma", []), dtype=float).ravel()
    except (TypeError, ValueError):
        raise SchemaError("gamma: field 'gamma' must be a list of numbers") from None
    omega_raw = doc.get("omega", [])
    try:
        omega = np.asarray(omega_raw, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError("gamma: field 'omega' must be a numeric matrix") from None
    if gamma.size == 0:
        omega = np.zeros((0, 0))
    elif omega.ndim != 2 or omega.shape != (gamma.size, gamma.size):
        raise SchemaError(
            f"gamma: field 'omega' must be a square {gamma.size}x{gamma.size} matrix, "
            f"got shape {omega.shape}")
    if not np.all(np.isfinite(gamma)) or not np.all(np.isfinite(omega)):
        raise SchemaError("gamma: fields 'gamma' and 'omega' must be finite")
    if omega.size and not np.allclose(omega, omega.T, atol=1e-10, rtol=0):
        raise SchemaError("gamma: field 'omega' must be symmetric")

    columns = list(columns)
    w_names = []
    terms = []
    for term in doc.get("design", []) or []:
        if isinstance(term, str):
            terms.append(term)
            continue
        if not isinstance(term, dict) or len(term) == 0:
            raise SchemaError(f"gamma: invalid design term {term!r}")
        if "covariate" in term:
            name = term["covariate"]
            if name not in columns:
                raise SchemaError(f"gamma: design covariate {name!r} is not a data column")
            if name not in w_names:
                w_names.append(name)
            terms.append({"kind": "covariate", "index": w_names.index(name),
                          "transform": term.get("transform", "identity")})
        elif "window" in term:
            lo, hi = term["window"]
            terms.append({"kind": "window", "lo": lo, "hi": hi})
        elif "piecewise_linear" in term:
            terms.extend(piecewise_linear_terms(term["piecewise_linear"]))
        else:
            raise SchemaError(f"gamma: invalid design term {term!r}")
    try:
        design = DesignSpec(tuple(terms))
    except ValueError as e:
        raise SchemaError(f"gamma: field 'design': {e}") from None

    links = doc.get("links")
    if links is None:
        links = [[1, 2]] if (gamma.size and k == 2) else []
    if gamma.size == 0:
        links = []
    try:
        links0 = tuple((int(j) - 1, int(h) - 1) for j, h in links)
        target = doc.get("eta_target")
        target0 = None if target is None else tuple((int(j) - 1, int(h) - 1) for j, h in target)
        model = MisclassModel(k, design, links0, target0)
    except (TypeError, ValueError) as e:
        raise SchemaError(f"gamma: field 'links': {e}") from None
    if model.n_gamma != gamma.size:
        raise SchemaError(
            f"gamma: field 'gamma' has {gamma.size} entries; "
            f"{len(links0)} link(s) x {design.q} design terms need {model.n_gamma}")
    return GammaEstimate(gamma, omega, model), model, w_names


def load_inputs(data_text: str, gamma_text: str, covariates=None, k: int | None = None):
    """Parse data CSV and gamma JSON into ``(Dataset, GammaEstimate, MisclassModel)``."""
    header, time, cause, cols = read_table(data_text)
    names = list(cols) if covariates is None else list(covariates)
    for name in names:
        if name not in cols:
            raise SchemaError(f"data: unknown covariate column {name!r}")
    if not names:
        raise SchemaError("data: no covariate columns")
    kk = int(cause.max()) if k is None else k
    if kk < 2:
        raise SchemaError("data: the cause column must contain at least causes 1 and 2 (k >= 2)")
    try:
        doc = json.loads(gamma_text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"gamma: invalid JSON ({e})") from None
    gest, model, w_names = parse_gamma(doc, cols, kk)
    z = np.column_stack([cols[n] for n in names])
    w = np.column_stack([cols[n] for n in w_names]) if w_names else np.zeros((time.size, 0))
    data = Dataset(time, cause, z, kk, w, tuple(names), tuple(w_names))
    return data, gest, model


def dataset_to_csv(data: Dataset) -> str:
    """Write ``data`` in the input CSV schema with round-trip float formatting."""
    names = list(data.z_names) or [f"z{i + 1}" for i in range(data.p)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["time", "cause", *names])
    for t, c, z in zip(data.time, data.cause, data.z):
        writer.writerow([repr(float(t)), int(c), *(repr(float(v)) for v in z)])
    return buf.getvalue()


def _clean(obj):
    """JSON-safe copy: numpy to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2) + "\n"
