"""Empirical defocus-to-separation calibration and its inversion.

Calibration renders static dual-LED frames of a flat target at known
defocus distances and fits separation against defocus. The simulator's
forward model is linear, but the fit is empirical so the survey pipeline
never assumes linearity; a piecewise-linear mode is available for future
nonlinear optics.
"""

import hashlib
import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .autocorr import QUALITY_THRESHOLD_DEFAULT, estimate_shift
from .model import STREAM_CALIBRATION, derive_seed
from .optics import DEFAULT_NOISE_SIGMA, CaptureRequest, render_dual_led

MIN_ACCEPTED_FRACTION = 0.8
MAX_RMS_RESIDUAL_PX = 1.0
# Generic search window used while no curve exists yet: clear of the
# zero-lag texture lobe at the low end, clear of the alias fold at the top.
CALIBRATION_MIN_LAG_PX = 12.0


class CalibrationError(RuntimeError):
    """Calibration could not produce a trustworthy curve."""

    def __init__(self, message, points=None):
        super().__init__(message)
        self.points = points or []


class DefocusReading(NamedTuple):
    d_um: float
    out_of_range: bool


@dataclass(frozen=True)
class CalibrationCurve:
    """Fitted map between defocus distance (um) and separation (px)."""

    slope_px_per_um: float
    intercept_px: float
    valid_d_range: tuple
    valid_lag_window: tuple
    rms_residual_px: float
    sample_points: tuple
    kind: str = "line"

    def __post_init__(self):
        if self.slope_px_per_um <= 0:
            raise CalibrationError("calibration slope must be positive")
        if not np.isfinite(self.rms_residual_px):
            raise CalibrationError("rms residual must be finite")

    def separation_at(self, d):
        if self.kind == "piecewise":
            ds, ss = self._break_arrays()
            return float(np.interp(d, ds, ss))
        return self.slope_px_per_um * d + self.intercept_px

    def _break_arrays(self):
        pts = sorted((p["d_um"], p["separation_px"]) for p in self.sample_points if p["accepted"])
        ds = np.array([p[0] for p in pts])
        ss = np.array([p[1] for p in pts])
        return ds, ss

    def to_dict(self):
        return {
            "slope_px_per_um": self.slope_px_per_um,
            "intercept_px": self.intercept_px,
            "valid_d_range": list(self.valid_d_range),
            "valid_lag_window": list(self.valid_lag_window),
            "rms_residual_px": self.rms_residual_px,
            "sample_points": [dict(p) for p in self.sample_points],
            "kind": self.kind,
            "units": {
                "slope_px_per_um": "px/um",
                "intercept_px": "px",
                "valid_d_range": "um",
                "valid_lag_window": "px",
                "rms_residual_px": "px",
            },
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            slope_px_per_um=data["slope_px_per_um"],
            intercept_px=data["intercept_px"],
            valid_d_range=tuple(data["valid_d_range"]),
            valid_lag_window=tuple(data["valid_lag_window"]),
            rms_residual_px=data["rms_residual_px"],
            sample_points=tuple(dict(p) for p in data["sample_points"]),
            kind=data.get("kind", "line"),
        )

    def curve_id(self):
        canon = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


def run_calibration(
    model,
    geom,
    d_values,
    seed,
    noise_sigma=DEFAULT_NOISE_SIGMA,
    quality_threshold=QUALITY_THRESHOLD_DEFAULT,
    lag_window=None,
    piecewise=False,
):
    """Fit a CalibrationCurve from static renders of a flat target.

    Requires at least 5 distinct defocus values and a flat slide (so the
    defocus at the stage position is exactly known). Fails loudly, carrying
    per-point diagnostics, when fewer than 80% of the points pass the
    quality gate or the fit residual exceeds 1 px.
    """
    d_values = [float(d) for d in d_values]
    if len(set(d_values)) < 5:
        raise CalibrationError(
            "need at least 5 distinct defocus values for calibration"
        )
    if float(np.ptp(model.topography)) > 1e-9:
        raise CalibrationError("calibration target must be flat")
    z_true = model.z_true(0, 0)
    tile = (model.spec.rows // 2, model.spec.cols // 2)
    if lag_window is None:
        lag_window = (CALIBRATION_MIN_LAG_PX, model.spec.tile_px // 2 - 2)

    points = []
    for idx, d in enumerate(sorted(d_values)):
        req = CaptureRequest(
            tile=tile,
            z_stage=z_true + d,
            blur_px=0.0,
            scan_axis="y",
            illumination="dual_led",
            noise_sigma=noise_sigma,
            seed=derive_seed(seed, STREAM_CALIBRATION, idx),
        )
        frame = render_dual_led(model, geom, req)
        est = estimate_shift(frame, lag_window, quality_threshold=quality_threshold)
        points.append(
            {
                "d_um": d,
                "separation_px": est.separation_px,
                "quality": est.quality,
                "accepted": bool(est.accepted),
            }
        )

    good = [p for p in points if p["accepted"]]
    if len(good) < MIN_ACCEPTED_FRACTION * len(points) or len(good) < 2:
        raise CalibrationError(
            f"only {len(good)}/{len(points)} calibration points "
            "passed the quality gate",
            points=points,
        )
    ds = np.array([p["d_um"] for p in good])
    ss = np.array([p["separation_px"] for p in good])
    slope, intercept = np.polyfit(ds, ss, 1)
    residuals = ss - (slope * ds + intercept)
    rms = float(np.sqrt(np.mean(residuals**2)))
    if rms > MAX_RMS_RESIDUAL_PX:
        raise CalibrationError(
            f"calibration rms residual {rms:.3f} px exceeds "
            f"{MAX_RMS_RESIDUAL_PX} px",
            points=points,
        )
    d_range = (geom.detection_z_min, geom.detection_z_max)
    curve = CalibrationCurve(
        slope_px_per_um=float(slope),
        intercept_px=float(intercept),
        valid_d_range=d_range,
        valid_lag_window=(
            float(slope * d_range[0] + intercept),
            float(slope * d_range[1] + intercept),
        ),
        rms_residual_px=rms,
        sample_points=tuple(points),
        kind="piecewise" if piecewise else "line",
    )
    return curve


def defocus_from_separation(curve, s, tolerance_um=0.0):
    """Invert the calibration: separation (px) to defocus distance (um).

    Out-of-range separations are not clamped; the reading carries an
    ``out_of_range`` flag and the caller decides.
    """
    if curve.kind == "piecewise":
        ds, ss = curve._break_arrays()
        d = float(np.interp(s, ss, ds))
        # np.interp clamps outside the breakpoints; extrapolate linearly so
        # out-of-range stays observable.
        if s < ss[0]:
            d = ds[0] + (s - ss[0]) / curve.slope_px_per_um
        elif s > ss[-1]:
            d = ds[-1] + (s - ss[-1]) / curve.slope_px_per_um
    else:
        d = (s - curve.intercept_px) / curve.slope_px_per_um
    lo, hi = curve.valid_d_range
    out = not (lo - tolerance_um <= d <= hi + tolerance_um)
    return DefocusReading(d_um=float(d), out_of_range=out)


def focus_from_defocus(d_est, z_stage):
    """Best-focus stage position implied by a measured defocus distance.

    The survey offset puts the stage on the positive-defocus side of every
    tile, which is what makes the sign of ``z_stage - z_focus`` known.
    """
    if d_est < 0:
        raise ValueError("estimated defocus must be non-negative")
    return z_stage - d_est
