"""Mean best-so-far cost against iteration count over random scenes (CSV to stdout)."""
import argparse

import numpy as np

from nhttc.dynamics import ModelKind
from nhttc.optimizer import OptimizerConfig, optimize
from nhttc.sim import generate_random_scenario, initial_problem


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--scenes", type=int, default=100)
    p.add_argument("--iters", type=int, default=300)
    p.add_argument("--kind", default=None, help="one kind for every scene (default: cycle)")
    args = p.parse_args()
    kinds = [ModelKind.parse(args.kind)] if args.kind else list(ModelKind)
    traces = []
    for seed in range(args.scenes):
        scenario = generate_random_scenario(seed, kind=kinds[seed % len(kinds)])
        _, trace = optimize(initial_problem(scenario, 0), (0.0, 0.0),
                            OptimizerConfig.iterations(args.iters))
        traces.append(trace.best_costs)
    best = np.array(traces)
    finite = np.isfinite(best).all(axis=0)
    print("iteration,mean_best_cost,median_best_cost")
    for k in range(args.iters + 1):
        mean = best[:, k].mean() if finite[k] else float("inf")
        print(f"{k},{mean:.10g},{np.median(best[:, k]):.10g}")


if __name__ == "__main__":
    main()
