"""Subgradient iterations completed per plan step under a wall-clock budget.

Each plan step includes the obstacle precompute of its frame; the first frame
is discarded as warm-up.
"""
import argparse

import numpy as np

from nhttc.dynamics import ModelKind
from nhttc.sim import World, generate_random_scenario, step_world


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--budget-ms", type=float, default=5.0)
    p.add_argument("--frames", type=int, default=50)
    p.add_argument("--obstacles", type=int, default=40)
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args()
    print(f"{'kind':<16}{'median':>8}{'min':>6}{'max':>6}   iterations in {args.budget_ms} ms, "
          f"{args.obstacles} obstacles")
    for kind in ModelKind:
        scenario = generate_random_scenario(args.seed, n_obstacles=args.obstacles, kind=kind)
        scenario = scenario.with_budget(ms=args.budget_ms)
        world = World.initial(scenario)
        world, _ = step_world(world, scenario)
        its = []
        for _ in range(args.frames):
            world, rec = step_world(world, scenario)
            its.append(rec.iterations[0])
        print(f"{kind.name:<16}{int(np.median(its)):>8}{min(its):>6}{max(its):>6}")


if __name__ == "__main__":
    main()
