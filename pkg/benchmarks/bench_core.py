"""Time the compiled Pareto kernels against the numpy reference.

    python benchmarks/bench_core.py [--samples 4096] [--front 48] [--candidates 256]

The shapes mirror one acquisition chunk: S sampled fronts of n points and a
chunk of candidate outcomes scored against every front's boxes.
"""

import argparse
import timeit

import numpy as np

from nasbo import _core_py

try:
    from nasbo import _core
except ImportError:  # extension not built
    _core = None


def _time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench(mod, Y, Yc, ref, repeat):
    boxes = mod.staircase_boxes(Y, ref)
    return {
        "staircase_boxes": _time(lambda: mod.staircase_boxes(Y, ref), repeat),
        "hvi_sum": _time(lambda: mod.hvi_sum(*boxes, Yc), repeat),
        "hypervolume_batch": _time(lambda: mod.hypervolume_batch(Y, ref), repeat),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=4096)
    ap.add_argument("--front", type=int, default=48)
    ap.add_argument("--candidates", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    Y = np.ascontiguousarray(rng.random((a.samples, a.front, 2)))
    Yc = np.ascontiguousarray(rng.random((a.samples, a.candidates, 2)))
    ref = np.array([1.0, 1.0])
    py = bench(_core_py, Y, Yc, ref, a.repeat)
    print(f"S={a.samples} n={a.front} C={a.candidates}")
    print(f"{'kernel':<20}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}")
    cy = bench(_core, Y, Yc, ref, a.repeat) if _core is not None else {}
    for k, t in py.items():
        if k in cy:
            print(f"{k:<20}{t:>12.4f}{cy[k]:>12.4f}{t / cy[k]:>9.1f}x")
        else:
            print(f"{k:<20}{t:>12.4f}{'n/a':>12}{'':>10}")


if __name__ == "__main__":
    main()
