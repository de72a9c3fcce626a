"""Batch command line: ``semgraph fit`` and ``semgraph path``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .graph import EvaluationError, GraphError
from .inference import infer
from .model import default_start
from .objectives import ObjectiveError, ObjectiveSpec, PenaltyTerm, build_objective
from .optim import FitResult, OptimizerConfig, Status, fit, penalty_path
from .syntax import LoweredModel, ModelSpecError, ModelSyntaxError, load_model

log = logging.getLogger("semgraph")

EXIT_OK, EXIT_ERROR, EXIT_MAXITER = 0, 1, 2


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    names: list[str]
    cov: np.ndarray
    n: int
    raw: np.ndarray | None = None

    def subset(self, names) -> np.ndarray:
        idx = [self.names.index(v) for v in names]
        return self.cov[np.ix_(idx, idx)]


def _read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        values = []
        for name, cell in zip(header, row):
            cell = cell.strip()
            if cell == "" or cell.upper() in ("NA", "NAN"):
                raise DataError(f"{path}:{lineno}: missing value for {name!r}")
            try:
                values.append(float(cell))
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric value {cell!r} for {name!r}") from None
        body.append(values)
    if not body:
        raise DataError(f"{path}: no data rows")
    data = np.array(body)
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite values")
    return header, data


def load_data(path, cov: bool = False, n: int | None = None) -> Dataset:
    """Read raw data (sample covariance with divisor n-1) or a covariance matrix."""
    names, data = _read_csv(path)
    if cov:
        if n is None:
            raise DataError("covariance input requires --n")
        if data.shape != (len(names), len(names)):
            raise DataError(f"{path}: covariance matrix must be {len(names)}x{len(names)}")
        scale = max(np.max(np.abs(data)), 1.0)
        if np.max(np.abs(data - data.T)) > 1e-10 * scale:
            raise DataError(f"{path}: covariance matrix is not symmetric")
        S = 0.5 * (data + data.T)
        raw = None
    else:
        if n is not None and n != data.shape[0]:
            raise DataError(f"--n {n} does not match the {data.shape[0]} data rows")
        n = data.shape[0]
        if n < 2:
            raise DataError("need at least two observations")
        S = np.cov(data, rowvar=False, ddof=1).reshape(len(names), len(names))
        raw = data
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        if cov:
            raise DataError("covariance matrix is not positive definite") from None
        log.warning("sample covariance matrix is not positive definite")
    if n <= len(names):
        log.warning("n = %d is not larger than the number of variables (%d)", n, len(names))
    return Dataset(list(names), S, int(n), raw)


def _penalties(args, strength=None) -> tuple[PenaltyTerm, ...]:
    """Penalty from the flags; ``strength`` overrides lambda1 (lambda2 for ridge)."""
    if args.penalty == "none":
        return ()
    target = args.target
    if target.lower() not in ("lambda", "b0", "psi", "theta"):
        target = tuple(t.strip() for t in target.split(",") if t.strip())
    l1, l2 = args.lambda1, args.lambda2
    if strength is not None:
        if args.penalty == "ridge":
            l2 = strength
        else:
            l1 = strength
    return (PenaltyTerm(args.penalty, target, lambda1=l1, lambda2=l2, pi=args.pi),)


def _num(x):
    x = float(x)
    return x if np.isfinite(x) else None


def _optimizer_config(args) -> OptimizerConfig:
    return OptimizerConfig(
        method=args.optimizer,
        step_size=args.lr,
        max_iter=args.max_iter,
        tol_grad=args.tol_grad,
        tol_obj=args.tol_obj,
    )


def _report(args, model: LoweredModel, data: Dataset, S, objective: ObjectiveSpec,
            config: OptimizerConfig, result: FitResult, extra_config=None) -> dict:
    spec = model.spec
    se = None
    fit_block = None
    notes = []
    if not objective.penalized and objective.base == "ml" and result.status is not Status.FAILED:
        try:
            rep = infer(spec, S, data.n, result.theta_hat, objective)
            se = rep.se
            notes.extend(rep.warnings)
            fit_block = {"chi2": rep.chi2, "df": rep.df, "p": rep.p_value,
                         "aic": _num(rep.aic), "bic": _num(rep.bic), "loglik": _num(rep.loglik)}
        except (EvaluationError, ValueError) as exc:
            notes.append(f"inference: {exc}")
    rows = []
    for i, (label, (matrix, r, c)) in enumerate(zip(spec.labels, spec.locations())):
        est = float(result.theta_hat[i])
        zeroed = objective.penalized and abs(est) < args.zero_threshold
        rows.append({
            "label": label,
            "matrix": matrix,
            "row": r,
            "col": c,
            "estimate": 0.0 if zeroed else _num(est),
            "se": None if se is None or not np.isfinite(se[i]) else float(se[i]),
            "zeroed": bool(zeroed),
        })
    cfg = {
        "command": args.command,
        "model": str(args.model),
        "data": str(args.data),
        "cov": bool(args.cov),
        "n": data.n,
        "observed": list(model.observed),
        "latents": list(model.latents),
        "objective": objective.base,
        "penalties": [asdict(p) for p in objective.penalties],
        "optimizer": asdict(config),
        "zero_threshold": args.zero_threshold,
        "trace": bool(args.trace),
        "start": "default",
    }
    cfg.update(extra_config or {})
    out = {
        "config": cfg,
        "parameters": rows,
        "fit": fit_block,
        "convergence": {
            "status": result.status.value,
            "reason": result.reason,
            "iterations": result.iterations,
            "grad_inf_norm": _num(result.grad_inf_norm),
            "objective": _num(result.objective),
        },
        "warnings": notes,
    }
    if args.trace:
        out["trace"] = [_num(v) for v in result.objective_trace]
    return out


def _write_tsv(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        multi = len(reports) > 1
        header = (["fit"] if multi else []) + ["label", "matrix", "row", "col", "estimate", "se", "zeroed"]
        w.writerow(header)
        for k, rep in enumerate(reports):
            for row in rep["parameters"]:
                se = "" if row["se"] is None else repr(row["se"])
                line = [row["label"], row["matrix"], row["row"], row["col"], repr(row["estimate"]), se,
                        str(row["zeroed"]).lower()]
                w.writerow(([k] if multi else []) + line)


def _exit_code(results) -> int:
    if any(r.status is Status.FAILED for r in results):
        return EXIT_ERROR
    if any(r.status is Status.MAXITER for r in results):
        return EXIT_MAXITER
    return EXIT_OK


def _prepare(args):
    data = load_data(args.data, cov=args.cov, n=args.n)
    text = Path(args.model).read_text(encoding="utf-8")
    model = load_model(text, data.names)
    S = data.subset(model.observed)
    return data, model, S


def run(args) -> int:
    data, model, S = _prepare(args)
    spec = model.spec
    config = _optimizer_config(args)
    theta0 = default_start(spec, S)

    if args.command == "fit":
        objective = ObjectiveSpec(args.objective, _penalties(args))
        graph = build_objective(spec, S, objective)
        result = fit(graph, theta0, config)
        reports = [_report(args, model, data, S, objective, config, result)]
        payload = reports[0]
        results = [result]
    else:
        if args.penalty == "none":
            raise ObjectiveError("path mode needs a penalty (--penalty)")
        lambdas = [float(v) for v in args.lambdas.split(",") if v.strip()]
        objectives = {lam: ObjectiveSpec(args.objective, _penalties(args, lam)) for lam in lambdas}
        results = penalty_path(
            lambda lam: build_objective(spec, S, objectives[lam]),
            lambdas, theta0, config, warm_start=not args.cold,
        )
        reports = [
            _report(args, model, data, S, objectives[lam], config, res,
                    {"lambdas": lambdas, "path_lambda": lam, "warm_start": not args.cold})
            for lam, res in zip(lambdas, results)
        ]
        payload = reports

    text = json.dumps(payload, indent=2, allow_nan=False)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text + "\n")
    if args.tsv:
        _write_tsv(args.tsv, reports)
    return _exit_code(results)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semgraph", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    defaults = OptimizerConfig()
    for name in ("fit", "path"):
        p = sub.add_parser(name, help=f"{name} a model")
        p.add_argument("--model", required=True, type=Path, help="model description file")
        p.add_argument("--data", required=True, type=Path, help="CSV with a header row")
        p.add_argument("--cov", action="store_true", help="treat --data as a covariance matrix")
        p.add_argument("--n", type=int, default=None, help="sample size (required with --cov)")
        p.add_argument("--objective", choices=("ml", "gls", "lad"), default="ml")
        p.add_argument("--penalty", choices=("none", "lasso", "ridge", "elasticnet", "spikeslab"),
                       default="none")
        p.add_argument("--target", default="lambda",
                       help="lambda|b0|psi|theta or comma-separated parameter labels")
        p.add_argument("--lambda1", type=float, default=0.0)
        p.add_argument("--lambda2", type=float, default=0.0)
        p.add_argument("--pi", type=float, default=0.5)
        p.add_argument("--optimizer", choices=("adam", "momentum", "gd"), default=defaults.method)
        p.add_argument("--lr", type=float, default=defaults.step_size)
        p.add_argument("--max-iter", type=int, default=defaults.max_iter)
        p.add_argument("--tol-grad", type=float, default=defaults.tol_grad)
        p.add_argument("--tol-obj", type=float, default=defaults.tol_obj)
        p.add_argument("--zero-threshold", type=float, default=1e-3)
        p.add_argument("--out", type=Path, default=None, help="JSON output (default stdout)")
        p.add_argument("--tsv", type=Path, default=None, help="also write the parameter table as TSV")
        p.add_argument("--trace", action="store_true", help="include the objective trace")
        if name == "path":
            p.add_argument("--lambdas", required=True,
                           help="comma-separated penalty strengths (lambda1; lambda2 for ridge)")
            p.add_argument("--cold", action="store_true", help="start every fit from default values")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="semgraph: %(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except DataError as exc:
        msg = f"data: {exc}"
    except (ModelSyntaxError, ModelSpecError) as exc:
        msg = f"syntax: {exc}"
    except ObjectiveError as exc:
        msg = f"objectives: {exc}"
    except (GraphError, EvaluationError) as exc:
        msg = f"graph: {exc}"
    except OSError as exc:
        msg = f"io: {exc}"
    except ValueError as exc:
        msg = f"error: {exc}"
    print(f"semgraph: {msg}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
