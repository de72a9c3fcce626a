"""Lasso path and spike-and-slab fit for a one-factor model with five null loadings."""
import argparse
import json

import numpy as np

from semgraph.model import default_start
from semgraph.objectives import ObjectiveSpec, PenaltyTerm, build_objective
from semgraph.optim import OptimizerConfig, fit, penalty_path
from semgraph.syntax import load_model

LOADINGS = np.array([0.5, 0.45, -0.35, -0.4, -0.5, 0, 0, 0, 0, 0])


def sample_cov(seed: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    resid = np.where(LOADINGS != 0, 0.25, 1.0)
    f = rng.normal(size=n)
    X = np.outer(f, LOADINGS) + rng.normal(size=(n, LOADINGS.size)) * np.sqrt(resid)
    return np.cov(X, rowvar=False)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=300)
    ap.add_argument("--lambdas", default="0.05,0.1,0.2,0.3")
    ap.add_argument("--zero-threshold", type=float, default=1e-3)
    args = ap.parse_args()

    names = [f"x{i}" for i in range(1, 11)]
    model = load_model("F =~ " + " + ".join(names) + "\nF ~~ 1*F", names)
    S = sample_cov(args.seed, args.n)
    idx = model.spec.indices_in("lambda")
    cfg = OptimizerConfig(step_size=0.001, max_iter=20000)

    def summary(theta):
        est = theta[idx]
        est = np.where(np.abs(est) < args.zero_threshold, 0.0, est)
        return {"loadings": est.round(4).tolist(), "zero_count": int(np.sum(est == 0))}

    ml = fit(build_objective(model.spec, S), default_start(model.spec, S))
    lambdas = [float(v) for v in args.lambdas.split(",")]
    path = penalty_path(
        lambda lam: build_objective(model.spec, S, ObjectiveSpec("ml", (PenaltyTerm("lasso", "lambda", lam),))),
        lambdas, ml.theta_hat, cfg,
    )
    ss = fit(build_objective(model.spec, S, ObjectiveSpec("ml", (PenaltyTerm("spikeslab", "lambda", 0.55, 0.05, 0.5),))),
             ml.theta_hat, cfg)
    out = {
        "truth": LOADINGS.tolist(),
        "ml": summary(ml.theta_hat),
        "lasso_path": [{"lambda": lam, **summary(r.theta_hat)} for lam, r in zip(lambdas, path)],
        "spike_slab": summary(ss.theta_hat),
    }
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
