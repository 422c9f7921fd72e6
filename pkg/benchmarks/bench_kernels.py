"""Timing comparison of the numba-jitted kernels against the pure
numpy/python fallbacks.

Run: python benchmarks/bench_kernels.py
The numba columns appear only when numba is importable and
STREAMEVAL_PURE_NUMPY is unset.
"""

import time

import numpy as np

from streameval import kernels


def timeit(fn, *args, repeats=5):
    fn(*args)  # warm-up (and JIT compilation for the numba path)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_conv():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 16, 64, 64))
    w = rng.standard_normal((16, 16, 3, 3))
    b = rng.standard_normal(16)
    rows = [("conv2d numpy", timeit(kernels.conv2d_direct_numpy, x, w, b))]
    if kernels.HAS_NUMBA:
        rows.append(("conv2d numba", timeit(kernels.conv2d_direct_kernel, x, w, b)))
        ref = kernels.conv2d_direct_numpy(x, w, b)
        jit = kernels.conv2d_direct_kernel(x, w, b)
        rows.append(("conv2d max|diff|", float(np.abs(ref - jit).max())))
    return rows


def bench_iou_and_match():
    rng = np.random.default_rng(1)

    def boxes(n):
        xy = rng.uniform(0, 1000, (n, 2))
        wh = rng.uniform(5, 200, (n, 2))
        return np.hstack([xy, wh])

    dets = boxes(2000)
    gts = boxes(500)
    rows = [("iou numpy", timeit(kernels.pairwise_iou_numpy, dets, gts))]
    if kernels.HAS_NUMBA:
        rows.append(("iou numba", timeit(kernels.pairwise_iou, dets, gts)))

    ious = kernels.pairwise_iou_numpy(boxes(800), boxes(200))
    thrs = np.array([0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95])
    ignore = np.zeros(ious.shape[1], dtype=np.int8)

    def run_python():
        det_match = np.full((10, ious.shape[0]), -1, dtype=np.int64)
        gt_match = np.full((10, ious.shape[1]), -1, dtype=np.int64)
        kernels._greedy_match_loops(ious, thrs, ignore, det_match, gt_match)

    rows.append(("match python", timeit(run_python)))
    if kernels.HAS_NUMBA:

        def run_numba():
            kernels.greedy_match(ious, thrs, ignore)

        rows.append(("match numba", timeit(run_numba)))
    return rows


def main():
    print(f"active backend: {kernels.active_backend()}")
    for rows in (bench_conv(), bench_iou_and_match()):
        for name, value in rows:
            if "diff" in name:
                print(f"  {name:<20} {value:.3e}")
            else:
                print(f"  {name:<20} {value * 1e3:9.2f} ms")
        print()


if __name__ == "__main__":
    main()
