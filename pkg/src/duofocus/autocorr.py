"""Two-copy separation recovery from row-averaged 1D autocorrelation.

The captured frame is 2D but the copies are displaced along x only, so each
row is mean-removed, circularly autocorrelated along x with the FFT, the
per-row profiles are averaged, and the result normalized by its zero-lag
value. Averaging happens on the profiles, not on raw rows: raw-row averaging
would cancel the texture while every row's profile shares the +-S peaks.

The first-order peak is located inside a calibrated lag window after
subtracting a sliding-median background, then refined to sub-pixel with a
three-point parabola. A frame is trusted only if the detrended peak clears
both a relative gate (peak / background MAD >= quality_threshold) and an
absolute height floor; the floor is what rejects structureless frames, since
the max/MAD ratio of pure noise is scale-free and lands near 4 regardless of
noise level.
"""

from dataclasses import dataclass

import numpy as np

from .kernels import sliding_median
from .model import Frame

MEDIAN_WINDOW_DEFAULT = 31
QUALITY_THRESHOLD_DEFAULT = 3.0
MIN_PEAK_HEIGHT_DEFAULT = 0.05
_MAD_FLOOR = 1e-9


class DegenerateFrameError(ValueError):
    """Frame has no variance; the autocorrelation profile is undefined."""


@dataclass(eq=False)
class AutocorrProfile:
    """Normalized autocorrelation, lags in [-L/2, L/2)."""

    lags: np.ndarray
    values: np.ndarray

    @property
    def tile_px(self):
        return self.values.shape[0]

    def value_at(self, lag):
        return float(self.values[int(lag) + self.tile_px // 2])


@dataclass(frozen=True)
class ShiftEstimate:
    """Recovered two-copy separation with its quality gate verdict."""

    separation_px: float
    quality: float
    accepted: bool
    lag_window: tuple

    def to_dict(self):
        return {
            "separation_px": self.separation_px,
            "quality": self.quality,
            "accepted": self.accepted,
            "lag_window": list(self.lag_window),
            "units": {"separation_px": "px", "lag_window": "px"},
        }


def _frame_pixels(frame):
    if isinstance(frame, Frame):
        return frame.pixels
    return np.asarray(frame, dtype=np.float64)


def autocorrelate_1d(frame):
    """Row-averaged circular autocorrelation along x, zero-lag normalized."""
    pixels = _frame_pixels(frame)
    if pixels.ndim != 2 or pixels.shape[0] < 2 or pixels.shape[1] < 128:
        raise ValueError("frame must have >= 2 rows and >= 128 columns")
    cols = pixels.shape[1]
    rows = pixels - pixels.mean(axis=1, keepdims=True)
    spectrum = np.fft.rfft(rows, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    ac = np.fft.irfft(power.sum(axis=0), n=cols)
    if ac[0] <= 1e-30:
        raise DegenerateFrameError("frame has zero variance in every row")
    values = np.fft.fftshift(ac / ac[0])
    lags = np.arange(cols) - cols // 2
    return AutocorrProfile(lags=lags, values=values)


def find_separation(
    profile,
    lag_window,
    quality_threshold=QUALITY_THRESHOLD_DEFAULT,
    median_window=MEDIAN_WINDOW_DEFAULT,
    min_peak_height=MIN_PEAK_HEIGHT_DEFAULT,
):
    """Locate the positive first-order peak inside the lag window.

    The symmetric negative-lag peak carries no extra information (the
    profile of a real frame is exactly even), so only the positive lag is
    searched and reported. A peak landing on the window edge is returned
    with ``accepted=False`` rather than raising.
    """
    lo, hi = float(lag_window[0]), float(lag_window[1])
    half = profile.tile_px // 2
    if not (0.0 < lo < hi):
        raise ValueError("lag window must satisfy 0 < lo < hi")
    if hi > half - 1:
        raise ValueError(
            f"lag window upper edge {hi} exceeds max available lag {half - 1}"
        )
    first = int(np.ceil(lo))
    last = int(np.floor(hi))
    if last - first + 1 < 3:
        raise ValueError("lag window holds fewer than 3 integer lags")

    window_vals = profile.values[first + half : last + half + 1]
    detrended = window_vals - sliding_median(window_vals, median_window)

    k = int(np.argmax(detrended))  # ties resolve to the smaller lag
    on_edge = k == 0 or k == detrended.shape[0] - 1
    delta = 0.0
    if not on_edge:
        y0, y1, y2 = detrended[k - 1], detrended[k], detrended[k + 1]
        denom = y0 - 2.0 * y1 + y2
        if abs(denom) > 1e-300:
            delta = 0.5 * (y0 - y2) / denom
            delta = float(np.clip(delta, -0.5, 0.5))
    separation = float(first + k + delta)

    peak_height = float(detrended[k])
    mad = float(np.median(np.abs(detrended - np.median(detrended))))
    if peak_height <= 0:
        quality = 0.0
    else:
        quality = peak_height / max(mad, _MAD_FLOOR)
    accepted = (
        not on_edge
        and quality >= quality_threshold
        and peak_height >= min_peak_height
        and lo <= separation <= hi
    )
    return ShiftEstimate(
        separation_px=separation,
        quality=quality,
        accepted=accepted,
        lag_window=(lo, hi),
    )


def estimate_shift(
    frame,
    lag_window,
    quality_threshold=QUALITY_THRESHOLD_DEFAULT,
    median_window=MEDIAN_WINDOW_DEFAULT,
    min_peak_height=MIN_PEAK_HEIGHT_DEFAULT,
):
    """autocorrelate_1d followed by find_separation."""
    profile = autocorrelate_1d(frame)
    return find_separation(
        profile,
        lag_window,
        quality_threshold=quality_threshold,
        median_window=median_window,
        min_peak_height=min_peak_height,
    )
