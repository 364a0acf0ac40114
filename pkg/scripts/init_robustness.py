"""Best cost reached from several initial controls on the bundled simple-car scene."""
import argparse

import numpy as np

from nhttc.cli import load_scenario, resolve_scenario_path
from nhttc.optimizer import OptimizerConfig, optimize
from nhttc.sim import initial_problem

INITS = [(0.0, 0.0), (0.3, 0.0), (-0.3, 0.0), (0.15, 0.6), (0.15, -0.6)]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--scenario", default="random_car")
    p.add_argument("--iters", type=int, nargs="+", default=[10, 50, 165, 400])
    args = p.parse_args()
    problem = initial_problem(load_scenario(resolve_scenario_path(args.scenario)), 0)
    top = max(args.iters)
    print("u0," + ",".join(f"best@{n}" for n in args.iters) + ",u_best")
    finals = []
    for u0 in INITS:
        u, trace = optimize(problem, u0, OptimizerConfig.iterations(top))
        finals.append([trace.best_costs[n] for n in args.iters])
        print(f"\"{u0}\"," + ",".join(f"{c:.6f}" for c in finals[-1])
              + f",\"({u[0]:.4f}, {u[1]:.4f})\"")
    finals = np.array(finals)
    spread = (finals.max(axis=0) - finals.min(axis=0)) / finals.mean(axis=0)
    print("spread/mean," + ",".join(f"{s:.4f}" for s in spread))


if __name__ == "__main__":
    main()
