"""Command-line interface.

Exit codes: 0 success, 1 usage or schema error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io as cio
from .estimator import FitConfig, FitResult, fit
from .inference import BootstrapError, bootstrap_variance, nonparametric_bootstrap
from .likelihood import LikelihoodError
from .model import Theta, identifiability_check
from .predict import cif_all
from .simulate import Scenario, generate_dataset, run_study

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None


def _write(text: str, output: str | None) -> None:
    if output is None or output == "-":
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def _floats(spec: str, what: str) -> list:
    try:
        vals = [float(v) for v in spec.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{what} must be a comma-separated list of numbers") from None
    if not vals:
        raise UsageError(f"{what} must not be empty")
    return vals


def _config(args, eta=None) -> FitConfig:
    return FitConfig(order=args.order, n_interior=args.knots,
                     eta=args.eta if eta is None else eta)


def _estimates(data, res: FitResult, se=None, ci=None) -> list:
    names = list(data.z_names) or [f"z{i + 1}" for i in range(data.p)]
    rows = []
    flat = res.betas.ravel()
    for idx, b in enumerate(flat):
        j, c = divmod(idx, data.p)
        row = {"cause": j + 1, "covariate": names[c], "beta": b,
               "hazard_ratio": float(np.exp(b)), "se": None, "ci_lower": None,
               "ci_upper": None, "hr_ci_lower": None, "hr_ci_upper": None}
        if se is not None:
            row["se"] = se[idx]
        if ci is not None:
            lo, hi = ci[idx]
            row.update(ci_lower=lo, ci_upper=hi, hr_ci_lower=float(np.exp(lo)),
                       hr_ci_upper=float(np.exp(hi)))
        rows.append(row)
    return rows


def _fit_block(res: FitResult) -> dict:
    return {"loglik": res.loglik, "converged": res.converged, "iterations": res.iterations,
            "grad_norm": res.grad_norm, "stop_reason": res.stop_reason,
            "floored_terms": res.floored_terms}


def _report(command, data, gest, model, res, eta, notes, boot=None, ci_method="normal") -> dict:
    ident = None
    if model.links:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ident = identifiability_check(model, gest.gamma, data, eta)
    se = ci = None
    out = {
        "schema": cio.SCHEMA,
        "command": command,
        "data": {"n": data.n, "k": data.k, "covariates": list(data.z_names), "tau": data.tau},
        "misclassification": {"gamma": gest.gamma, "omega": gest.omega,
                              "model": model.to_dict(), "design_columns": list(data.w_names),
                              "eta": eta},
        "identifiability": None if ident is None else {
            "min_diagonal": ident.min_diagonal, "fraction_violating": ident.fraction_violating},
        "fit": _fit_block(res),
    }
    if boot is not None:
        se = boot.se
        ci = boot.confidence_intervals(res.betas.ravel(), method=ci_method)
        out["bootstrap"] = {"B": boot.B, "seed": boot.seed, "failures": boot.failures,
                            "interval_method": ci_method, "sigma_hat": boot.sigma_hat,
                            "replicate_betas": boot.replicate_betas}
    out["estimates"] = _estimates(data, res, se, ci)
    out["knots"] = [kv.to_dict() for kv in res.knot_report]
    out["theta"] = res.theta.to_dict()
    out["warnings"] = list(dict.fromkeys(notes))
    return out


def _run_quiet(fn, *a, **kw):
    """Call ``fn`` collecting warning messages instead of printing them."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = fn(*a, **kw)
    return out, [str(w.message) for w in caught]


def _inputs(args):
    covs = None if args.covariates is None else [c for c in args.covariates.split(",") if c]
    return cio.load_inputs(_read(args.data), _read(args.gamma), covs)


def cmd_fit(args) -> int:
    data, gest, model = _inputs(args)
    res, notes = _run_quiet(fit, data, _config(args), model, gest.gamma)
    _write(cio.dumps(_report("fit", data, gest, model, res, args.eta, notes + res.warnings)),
           args.output)
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    data, gest, model = _inputs(args)
    config = _config(args)
    res, notes = _run_quiet(fit, data, config, model, gest.gamma)
    runner = nonparametric_bootstrap if args.plain else bootstrap_variance
    gamma_arg = gest.gamma if args.plain else gest
    boot, more = _run_quiet(runner, data, config, model, gamma_arg, args.B, args.seed, point=res)
    report = _report("bootstrap", data, gest, model, res, args.eta, notes + res.warnings + more,
                     boot, "percentile" if args.percentile else "normal")
    _write(cio.dumps(report), args.output)
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    data, gest, model = _inputs(args)
    grid = _floats(args.eta_grid, "--eta-grid")
    uniq = list(dict.fromkeys(grid))
    notes = []
    if len(uniq) < len(grid):
        notes.append("duplicate eta values removed from the grid")
    fits = []
    dump = []
    for eta in uniq:
        entry = {"eta": eta}
        try:
            res, w = _run_quiet(fit, data, _config(args, eta), model, gest.gamma)
            boot = None
            if args.B:
                boot, more = _run_quiet(bootstrap_variance, data, _config(args, eta), model,
                                        gest, args.B, args.seed, point=res)
                w += more
            rep = _report("sensitivity", data, gest, model, res, eta, w + res.warnings, boot)
            entry.update(fit=rep["fit"], estimates=rep["estimates"], warnings=rep["warnings"])
        except (LikelihoodError, BootstrapError, ValueError) as e:
            entry.update(fit=None, estimates=None, warnings=[f"fit failed: {e}"])
        fits.append(entry)
        if args.dump_pi:
            P = model.matrices(gest.gamma, data.time, data.w, eta, 1)
            dump.append((eta, P))
    out = {"schema": cio.SCHEMA, "command": "sensitivity", "grid": uniq,
           "data": {"n": data.n, "k": data.k, "covariates": list(data.z_names), "tau": data.tau},
           "fits": fits, "warnings": notes}
    if args.dump_pi:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        pairs = [(j, h) for j in range(data.k) for h in range(data.k)]
        w.writerow(["eta", "subject", "time", *(f"pi_{j + 1}{h + 1}" for j, h in pairs)])
        for eta, P in dump:
            for i in range(data.n):
                w.writerow([repr(eta), i, repr(float(data.time[i])),
                            *(repr(float(P[i, j, h])) for j, h in pairs)])
        Path(args.dump_pi).write_text(buf.getvalue())
    _write(cio.dumps(out), args.output)
    return EXIT_OK


def fit_from_report(doc: dict) -> FitResult:
    """Rebuild the fitted model stored in a fit or bootstrap report."""
    if doc.get("schema") != cio.SCHEMA:
        raise cio.SchemaError(f"fit report: expected schema {cio.SCHEMA!r}")
    try:
        theta = Theta.from_dict(doc["theta"])
        f = doc["fit"]
    except (KeyError, TypeError, ValueError) as e:
        raise cio.SchemaError(f"fit report: malformed theta ({e})") from None
    return FitResult(theta=theta, loglik=f["loglik"], iterations=f["iterations"],
                     grad_norm=f["grad_norm"], converged=f["converged"],
                     knot_report=list(theta.knots), floored_terms=f["floored_terms"],
                     stop_reason=f.get("stop_reason", ""))


def cmd_predict(args) -> int:
    try:
        doc = json.loads(_read(args.fit))
    except json.JSONDecodeError as e:
        raise cio.SchemaError(f"fit report: invalid JSON ({e})") from None
    res = fit_from_report(doc)
    names = doc["data"]["covariates"]
    z = np.zeros(len(names))
    if args.z:
        for item in args.z.split(","):
            if not item.strip():
                continue
            name, _, value = item.partition("=")
            name = name.strip()
            if name not in names:
                raise UsageError(f"unknown covariate {name!r}; expected one of {names}")
            try:
                z[names.index(name)] = float(value)
            except ValueError:
                raise UsageError(f"covariate {name!r} needs a numeric value") from None
    if args.grid:
        grid = np.asarray(_floats(args.grid, "--grid"))
    else:
        grid = np.linspace(0.0, res.tau, args.grid_n)
    if np.any(grid < 0) or np.any(grid > res.tau):
        raise UsageError(f"grid must lie within [0, {res.tau}]")
    if np.any(np.diff(grid) <= 0):
        raise UsageError("grid must be strictly increasing")
    causes = list(range(1, res.k + 1)) if not args.cause else [int(c) for c in args.cause.split(",")]
    for c in causes:
        if not 1 <= c <= res.k:
            raise UsageError(f"cause must be in 1..{res.k}")
    curves = cif_all(res, z, grid)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", *(f"cif_cause_{c}" for c in causes)])
    for i, t in enumerate(grid):
        w.writerow([repr(float(t)), *(repr(float(curves[c - 1].values[i])) for c in causes)])
    _write(buf.getvalue(), args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.scenario not in (1, 2, 3):
        raise UsageError(f"--scenario must be 1, 2 or 3, got {args.scenario}")
    scenario = Scenario.preset(args.scenario, args.gamma0)
    if args.emit_data:
        data, _ = generate_dataset(scenario, args.n, args.seed)
        _write(cio.dataset_to_csv(data), args.output)
        return EXIT_OK
    summary, _ = _run_quiet(run_study, scenario, args.n, args.reps, args.B,
                            FitConfig(order=args.order, n_interior=args.knots), args.seed,
                            n_jobs=args.jobs)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["coefficient", "true", "mean", "bias_pct", "mcsd", "ase", "cp", "re"]
    w.writerow(["scenario", "gamma0", "n", "replications", "converged", *cols])
    for row in summary.table():
        w.writerow([args.scenario, repr(args.gamma0), args.n, args.reps, summary.converged,
                    *("" if row[c] is None else (row[c] if isinstance(row[c], str) else repr(float(row[c])))
                      for c in cols)])
    _write(buf.getvalue(), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crrmisc", description=(
        "Proportional cause-specific hazards with misclassified causes of failure."))
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_args(p):
        p.add_argument("data", help="data CSV with time, cause and covariate columns")
        p.add_argument("gamma", help="misclassification parameters JSON")
        p.add_argument("--covariates", help="comma-separated covariate columns (default: all)")
        p.add_argument("--order", type=int, default=4, help="spline order (default 4, cubic)")
        p.add_argument("--knots", type=int, default=None, help="interior knot count override")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("-o", "--output", default=None)

    p = sub.add_parser("fit", help="fit the model and emit a JSON report")
    data_args(p)
    p.add_argument("--eta", type=float, default=0.0, help="sensitivity parameter")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bootstrap", help="fit plus bootstrap standard errors")
    data_args(p)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--B", type=int, default=100, help="bootstrap replications (default 100)")
    p.add_argument("--plain", action="store_true",
                   help="hold gamma fixed (plain nonparametric bootstrap)")
    p.add_argument("--percentile", action="store_true", help="percentile intervals")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("sensitivity", help="refit over a grid of sensitivity parameters")
    data_args(p)
    p.add_argument("--eta-grid", default="-0.5,-0.25,0,0.25,0.5")
    p.add_argument("--B", type=int, default=0, help="bootstrap replications per eta for CIs")
    p.add_argument("--dump-pi", default=None, help="write classification probabilities here")
    p.set_defaults(func=cmd_sensitivity, eta=0.0)

    p = sub.add_parser("predict", help="cumulative incidence curves from a fit report")
    p.add_argument("fit", help="JSON report from `fit` or `bootstrap`")
    p.add_argument("--cause", default=None, help="comma-separated causes (default: all)")
    p.add_argument("--z", default=None, help='covariate values, e.g. "age=40,male=1"')
    p.add_argument("--grid", default=None, help="comma-separated times in [0, tau]")
    p.add_argument("--grid-n", type=int, default=101, help="uniform grid size if --grid absent")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="Monte Carlo study or one simulated dataset")
    p.add_argument("--scenario", type=int, default=1)
    p.add_argument("--gamma0", type=float, default=-2.0)
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--B", type=int, default=0, help="bootstrap replications per dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--knots", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--emit-data", action="store_true", help="write one dataset CSV instead")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits on --help (0) and on usage errors (EXIT_USAGE)
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, cio.SchemaError) as e:
        print(f"crrmisc: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (LikelihoodError, BootstrapError, np.linalg.LinAlgError) as e:
        print(f"crrmisc: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"crrmisc: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
