"""Time the compiled geometry kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on the same inputs under both backends; outputs are
checked for agreement before timings are reported.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from monodream.kernels import BACKENDS
from monodream.world import WorldConfig, generate_floorplan


def _cases(seed: int = 0):
    plan = generate_floorplan(seed, WorldConfig())
    rng = np.random.default_rng(seed)
    free = np.argwhere(plan.planning_grid == 0)
    walls = plan.wall_array
    angles = np.radians(np.linspace(0.0, 360.0, 256, endpoint=False))
    origins = [plan.cell_center(*free[i]) for i in rng.integers(len(free), size=16)]
    pairs = [tuple(int(v) for v in np.concatenate([free[i], free[j]]))
             for i, j in rng.integers(len(free), size=(8, 2))]
    grid = np.ascontiguousarray(plan.planning_grid, dtype=np.uint8)
    return {
        # one panorama strip per origin
        "cast_rays": lambda k: [k.cast_rays(x, y, angles, walls, 10.0)[0] for x, y in origins],
        "segment_clearance": lambda k: [k.segment_clearance(a[0], a[1], b[0], b[1], walls)
                                        for a in origins for b in origins],
        "grid_astar": lambda k: [k.grid_astar(grid, *p) for p in pairs],
    }


def _same(a, b) -> bool:
    if a is None or b is None:
        return a is b
    if isinstance(a, (list, tuple)):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=0, atol=1e-9)


def _best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if "cython" not in BACKENDS:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation` first")
        return 1
    print(f"{'kernel':<20}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, run in _cases(args.seed).items():
        ref, fast = run(BACKENDS["python"]), run(BACKENDS["cython"])
        if not _same(ref, fast):
            print(f"{name}: backends disagree")
            return 2
        t_py = _best_of(lambda: run(BACKENDS["python"]), args.repeat)
        t_cy = _best_of(lambda: run(BACKENDS["cython"]), args.repeat)
        print(f"{name:<20}{t_py * 1e3:>12.2f}{t_cy * 1e3:>12.2f}{t_py / t_cy:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
