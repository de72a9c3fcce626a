"""Iterations needed by GD, momentum and Adam on an ill-conditioned quadratic."""
import argparse
import json

import numpy as np

from semgraph.optim import OptimizerConfig, OptimizerState, step_adam, step_gd, step_momentum


def run(method: str, lr: float, horizon: int, tol: float) -> dict:
    cfg = OptimizerConfig(method=method, step_size=lr)
    theta = np.array([-0.9, -0.9])
    state = OptimizerState.zeros(2)
    path = [theta.tolist()]
    hit = None
    for t in range(1, horizon + 1):
        grad = np.array([2 * theta[0], 10 * theta[1]])  # f = x^2 + 5 y^2
        if method == "gd":
            theta = step_gd(theta, grad, cfg)
        elif method == "momentum":
            theta, state = step_momentum(theta, grad, state, cfg)
        else:
            theta, state = step_adam(theta, grad, state, cfg, t)
        path.append(theta.tolist())
        if hit is None and np.max(np.abs(theta)) < tol:
            hit = t
    return {"iterations_to_tol": hit, "final": theta.tolist(), "path": path}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lr", type=float, default=0.01)
    ap.add_argument("--horizon", type=int, default=2000)
    ap.add_argument("--tol", type=float, default=1e-3)
    ap.add_argument("--keep-path", action="store_true")
    args = ap.parse_args()
    out = {}
    for method in ("gd", "momentum", "adam"):
        res = run(method, args.lr, args.horizon, args.tol)
        if not args.keep_path:
            res.pop("path")
        out[method] = res
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
