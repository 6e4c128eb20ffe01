"""Hot numeric kernels, JIT-compiled with numba when available.

Set ``DUOFOCUS_DISABLE_NUMBA=1`` to force the pure-numpy implementations
(``benchmarks/compare_kernels.py`` times both paths). The two paths follow
the same arithmetic so results agree bit for bit for the median kernel and
to float rounding for the accumulating ones.
"""

import os

import numpy as np


def _sliding_median_py(values, window):
    """Median over a centered window, truncated at the array edges."""
    n = values.shape[0]
    h = window // 2
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        lo = i - h
        if lo < 0:
            lo = 0
        hi = i + h + 1
        if hi > n:
            hi = n
        w = np.sort(values[lo:hi])
        m = hi - lo
        if m % 2 == 1:
            out[i] = w[m // 2]
        else:
            out[i] = 0.5 * (w[m // 2 - 1] + w[m // 2])
    return out


def _brenner_sum_py(pixels):
    """Sum of squared two-column differences, non-circular."""
    d = pixels[:, 2:] - pixels[:, :-2]
    return float(np.sum(d * d))


def _env_disabled():
    return os.environ.get("DUOFOCUS_DISABLE_NUMBA", "").strip().lower() in {
        "1",
        "true",
        "yes",
        "on",
    }


USING_NUMBA = False

if not _env_disabled():
    try:
        from numba import njit

        _sliding_median_nb = njit(cache=True)(_sliding_median_py)

        @njit(cache=True)
        def _brenner_sum_nb(pixels):
            rows, cols = pixels.shape
            acc = 0.0
            for y in range(rows):
                for x in range(cols - 2):
                    dv = pixels[y, x + 2] - pixels[y, x]
                    acc += dv * dv
            return acc

        USING_NUMBA = True
    except ImportError:
        pass


def sliding_median(values, window):
    """Sliding median background of a 1D profile.

    Windows are truncated (not padded) at the edges, so the first and last
    entries are medians over roughly half a window.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    if window < 1:
        raise ValueError("median window must be >= 1")
    if USING_NUMBA:
        return _sliding_median_nb(values, window)
    return _sliding_median_py(values, window)


def brenner_sum(pixels):
    """Brenner focus figure: sum over rows of (I[x+2] - I[x])^2."""
    pixels = np.ascontiguousarray(pixels, dtype=np.float64)
    if USING_NUMBA:
        return float(_brenner_sum_nb(pixels))
    return _brenner_sum_py(pixels)
