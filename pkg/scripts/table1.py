"""Collision-free frame percentage on the random obstacle scene, per kind and budget.

Budgets are iteration counts standing in for wall-clock budgets (165 iterations
~ 5 ms), so results do not depend on machine speed.

    python scripts/table1.py --seeds 100 --frames 1000 --kinds v scar --iters 33 165 330
"""
import argparse
import time

from nhttc.sim import collision_free_fractions


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--frames", type=int, default=1000)
    p.add_argument("--kinds", nargs="+", default=["v", "a", "dd", "sdd", "car", "scar"])
    p.add_argument("--iters", nargs="+", type=int, default=[33, 165, 330])
    args = p.parse_args()
    print(f"{'kind':<6}" + "".join(f"{n:>8} it" for n in args.iters))
    for kind in args.kinds:
        row = []
        for n in args.iters:
            t0 = time.perf_counter()
            frac = collision_free_fractions(kind, n, range(args.seeds), args.frames)
            row.append(f"{100 * frac.mean():6.2f}% ({100 * frac.std():.1f}) "
                       f"[{time.perf_counter() - t0:.0f} s]")
        print(f"{kind:<6}" + "  ".join(row), flush=True)


if __name__ == "__main__":
    main()
