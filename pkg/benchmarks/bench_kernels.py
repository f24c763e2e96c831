"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--end-to-end]

Compile time is paid once before timing. Each row reports the best of
``--repeat`` calls and the max abs difference between backends. With
``--end-to-end`` a short sequence is also tracked under each backend in a
subprocess (the backend is fixed at import time).
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from featslam.kernels import _numba, _numpy


def best_of(fn, args, repeat):
    fn(*args)  # warm-up / compile
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def max_diff(a, b):
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    both_nan = np.isnan(a) & np.isnan(b)
    d = np.abs(np.where(both_nan, 0.0, a - b))
    return float(np.max(d)) if d.size else 0.0


def make_cases(rng):
    cam = np.array([525.0, 525.0, 319.5, 239.5])
    n = 20000
    R = np.repeat(np.eye(3)[None], n, axis=0)
    t = rng.normal(scale=0.1, size=(n, 3))
    P = rng.uniform([-2, -1.5, 1.5], [2, 1.5, 4.5], size=(n, 3))
    uv = rng.uniform([0, 0], [640, 480], size=(n, 2))

    F = rng.normal(size=(3, 3))
    xi = rng.uniform(0, 640, size=(n, 2))
    xj = rng.uniform(0, 640, size=(n, 2))

    px = rng.uniform([0, 0], [640, 480], size=(5000, 2))

    # a window: 5 cameras, 800 landmarks, 3000 observations
    n_cams, n_lms, m = 5, 800, 3000
    cam_idx = rng.integers(-1, n_cams, size=m).astype(np.int64)
    lm_idx = rng.integers(0, n_lms, size=m).astype(np.int64)
    Jc = rng.normal(size=(m, 2, 6))
    Jl = rng.normal(size=(m, 2, 3))
    r = rng.normal(size=(m, 2))
    w = rng.uniform(0.5, 1.0, size=m)
    blocks = _numpy.accumulate_blocks(Jc, Jl, r, w, cam_idx, lm_idx, n_cams, n_lms)
    Hcc, bc, Hll, bl, Hcl = blocks
    Hll_inv = np.linalg.inv(Hll + 1e-3 * np.eye(3))

    return [
        ("point_jacobians", "point_jacobians", (cam, R, t, P, uv), n),
        ("epipolar_distances", "epipolar_distances", (F, xi, xj), n),
        ("grid_stats", "grid_stats", (px, 640, 480, 3, 3), len(px)),
        ("accumulate_blocks", "accumulate_blocks", (Jc, Jl, r, w, cam_idx, lm_idx, n_cams, n_lms), m),
        ("schur_reduce", "schur_reduce", (Hcc, bc, Hll_inv, bl, Hcl, cam_idx, lm_idx), m),
    ]


def end_to_end():
    code = (
        "import time; from featslam import sim, pipeline, awareness, kernels;"
        "w = sim.generate_world(sim.WorldConfig(seed=3, n_frames=60)); K = w.config.camera;"
        "fr = sim.render_sequence(w); gt = sim.ground_truth(w);"
        "aw = awareness.calibrate(pipeline.calibration_stats(fr, K));"
        "pipeline.run_sequence(fr[:6], gt, pipeline.PipelineConfig(awareness=aw), K);"
        "t0 = time.perf_counter(); rep = pipeline.run_sequence(fr, gt, pipeline.PipelineConfig(awareness=aw), K)[2];"
        "print(kernels.BACKEND, round(time.perf_counter() - t0, 3), rep.ate_rmse)"
    )
    for flag in ("0", "1"):
        env = dict(os.environ, FEATSLAM_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, secs, ate = out.stdout.split()
        print(f"end-to-end 60 frames  {backend:<6} {float(secs):8.3f} s  ATE {float(ate):.6g}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<20}{'n':>7}{'numpy ms':>11}{'numba ms':>11}{'speedup':>9}{'max diff':>11}")
    for label, name, fargs, n in make_cases(rng):
        f_np, f_nb = getattr(_numpy, name), getattr(_numba, name)
        t_np = best_of(f_np, fargs, args.repeat)
        t_nb = best_of(f_nb, fargs, args.repeat)
        diff = max_diff(f_np(*fargs), f_nb(*fargs))
        print(f"{label:<20}{n:>7}{t_np * 1e3:>11.3f}{t_nb * 1e3:>11.3f}{t_np / t_nb:>9.1f}{diff:>11.2e}")
    if args.end_to_end:
        end_to_end()


if __name__ == "__main__":
    main()
