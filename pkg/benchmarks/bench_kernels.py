"""Compare the compiled and numpy kernel backends.

Usage: python benchmarks/bench_kernels.py [--frames 30] [--repeat 50]

Times each kernel on the residual blocks of a synthetic window, then a full
GPO and BA solve per backend.
"""

import argparse
import timeit

import numpy as np

from gpoinit import kernels
from gpoinit.baselines import BaMode, BundleAdjustmentProblem, init_dbscan, initial_ba_state
from gpoinit.gpo import GpoProblem, initial_state, solve_gpo
from gpoinit.solver import SolverConfig, solve
from gpoinit.synth import SceneConfig, generate_scene


def bench(fn, repeat):
    """Best-of-5 mean time of ``fn`` in milliseconds."""
    t = timeit.repeat(fn, number=repeat, repeat=5)
    return 1e3 * min(t) / repeat


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=30)
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()

    window, _ = generate_scene(SceneConfig(frames=args.frames, noise_px=1.0, seed=0))
    init = init_dbscan(window)
    ids = [lm.id for lm in init.landmarks]
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy backend is available")

    rows = []
    for name, mod in backends.items():
        gp = GpoProblem(window, backend=mod)
        x = initial_state(window)
        bp = BundleAdjustmentProblem(window, ids, BaMode.BA, backend=mod)
        bx = initial_ba_state(init, bp.track_ids, BaMode.BA)
        r, JP, JC, _ = bp._eval(bx, True)
        J = np.ascontiguousarray(bp._blocks(bx, JP, JC))
        rows.append((name, {
            "gpo_linearize": bench(lambda: gp._eval(x, True), args.repeat),
            "ba_linearize": bench(lambda: bp._eval(bx, True), args.repeat),
            "normal_equations": bench(
                lambda: mod.accumulate_normal_equations(J, r, bp.cols, bp.nparams), args.repeat),
            "gpo_solve": bench(lambda: solve_gpo(window, backend=mod), 5),
            "ba_solve": bench(lambda: solve(bp, bx, SolverConfig()), 5),
        }))

    print(f"{args.frames} frames, {gp.residual_count} GPO residuals, "
          f"{bp.residual_count} BA residuals; times in ms")
    keys = list(rows[0][1])
    print(f"{'kernel':<18}" + "".join(f"{n:>12}" for n, _ in rows)
          + ("     speedup" if len(rows) > 1 else ""))
    for k in keys:
        line = f"{k:<18}" + "".join(f"{t[k]:>12.3f}" for _, t in rows)
        if len(rows) > 1:
            line += f"{rows[0][1][k] / rows[1][1][k]:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
