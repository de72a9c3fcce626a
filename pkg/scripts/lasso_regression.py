"""Lasso-penalized regression fitted as a structural model, across a grid of strengths."""
import argparse
import json

import numpy as np

from semgraph.model import default_start
from semgraph.objectives import ObjectiveSpec, PenaltyTerm, build_objective
from semgraph.optim import OptimizerConfig, fit, penalty_path
from semgraph.syntax import load_model


def simulate(seed: int, n: int, active: int, null: int):
    rng = np.random.default_rng(seed)
    beta = np.linspace(0.2, 0.6, active) * np.where(np.arange(active) % 2 == 0, -1, 1)
    beta = np.concatenate([beta, np.zeros(null)])
    X = rng.normal(size=(n, active + null))
    y = X @ beta + rng.normal(size=n)
    return X, y, beta


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--lambdas", default="0.05,0.1,0.2,0.4")
    ap.add_argument("--zero-threshold", type=float, default=1e-3)
    args = ap.parse_args()

    X, y, beta = simulate(args.seed, args.n, 10, 10)
    names = [f"x{i}" for i in range(1, X.shape[1] + 1)]
    model = load_model("y ~ " + " + ".join(names), names + ["y"])
    S = np.cov(np.column_stack([X, y]), rowvar=False)
    idx = [model.labels.index(f"y ~ {v}") for v in names]

    ml = fit(build_objective(model.spec, S), default_start(model.spec, S))
    lambdas = [float(v) for v in args.lambdas.split(",")]
    results = penalty_path(
        lambda lam: build_objective(model.spec, S, ObjectiveSpec("ml", (PenaltyTerm("lasso", "b0", lam),))),
        lambdas, ml.theta_hat, OptimizerConfig(step_size=0.001, max_iter=20000),
    )
    out = {"truth": beta.tolist(), "ml": ml.theta_hat[idx].round(6).tolist(), "path": []}
    for lam, res in zip(lambdas, results):
        est = res.theta_hat[idx]
        est = np.where(np.abs(est) < args.zero_threshold, 0.0, est)
        out["path"].append({
            "lambda": lam,
            "estimates": est.round(6).tolist(),
            "zeroed_active": int(np.sum(est[:10] == 0)),
            "zeroed_null": int(np.sum(est[10:] == 0)),
            "status": res.status.value,
        })
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
