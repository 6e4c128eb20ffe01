#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy fallbacks.

The fallback path is what you get with DUOFOCUS_DISABLE_NUMBA=1; this script
imports both implementations directly so one run covers both. Inputs mirror
the survey hot path: sliding-median detrending of ~120-lag profiles and
Brenner sums over 512x512 frames.
"""

import time

import numpy as np

from duofocus import kernels

N_PROFILES = 400
PROFILE_LEN = 120
MEDIAN_WINDOW = 31
N_FRAMES = 40
FRAME_PX = 512


def timeit(fn, args_list, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for args in args_list:
            fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    profiles = [(rng.standard_normal(PROFILE_LEN), MEDIAN_WINDOW)
                for _ in range(N_PROFILES)]
    frames = [(rng.random((FRAME_PX, FRAME_PX)),) for _ in range(N_FRAMES)]

    if not kernels.USING_NUMBA:
        print("numba unavailable or disabled; timing the numpy path only")
        t = timeit(kernels._sliding_median_py, profiles)
        print(f"sliding_median numpy : {t * 1e3:8.2f} ms / {N_PROFILES} profiles")
        t = timeit(kernels._brenner_sum_py, frames)
        print(f"brenner_sum    numpy : {t * 1e3:8.2f} ms / {N_FRAMES} frames")
        return

    # warm up JIT before timing
    kernels.sliding_median(profiles[0][0], MEDIAN_WINDOW)
    kernels.brenner_sum(frames[0][0])

    t_nb = timeit(kernels._sliding_median_nb, profiles)
    t_py = timeit(kernels._sliding_median_py, profiles)
    ref = kernels._sliding_median_py(*profiles[0])
    got = kernels._sliding_median_nb(*profiles[0])
    assert np.array_equal(ref, got), "paths disagree"
    print(f"sliding_median numba : {t_nb * 1e3:8.2f} ms / {N_PROFILES} profiles")
    print(f"sliding_median numpy : {t_py * 1e3:8.2f} ms / {N_PROFILES} profiles")
    print(f"  speedup {t_py / t_nb:.1f}x, results identical")

    t_nb = timeit(kernels._brenner_sum_nb, frames)
    t_py = timeit(kernels._brenner_sum_py, frames)
    a = kernels._brenner_sum_nb(*frames[0])
    b = kernels._brenner_sum_py(*frames[0])
    assert abs(a - b) <= 1e-9 * abs(b), "paths disagree"
    print(f"brenner_sum    numba : {t_nb * 1e3:8.2f} ms / {N_FRAMES} frames")
    print(f"brenner_sum    numpy : {t_py * 1e3:8.2f} ms / {N_FRAMES} frames")
    print(f"  speedup {t_py / t_nb:.1f}x, results equal to 1e-9 relative")


if __name__ == "__main__":
    main()
