"""Continuous-motion focus map surveying.

The workflow: apply the stage offset once, switch to the two-LED
illumination, visit tiles in serpentine row order while the stage moves in
the scan direction (blur is expressed directly as a per-frame blur length,
the simulator having no clock), estimate each tile's two-copy separation,
invert through the calibration curve, and fill rejected tiles by
inverse-distance interpolation from their measured neighbours. No axial
motion happens between tiles; the stage motion log records exactly one z
move per survey.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .autocorr import (
    MIN_PEAK_HEIGHT_DEFAULT,
    QUALITY_THRESHOLD_DEFAULT,
    estimate_shift,
)
from .calibration import defocus_from_separation, focus_from_defocus
from .model import ConfigurationError, derive_seed, dump_json
from .optics import DEFAULT_NOISE_SIGMA, CaptureRequest, render_dual_led

DOF_UM = 1.3  # conventional Kohler depth of field of the 20X 0.75 NA lens
DOF_HALF_UM = DOF_UM / 2.0
DEFAULT_EXPOSURE_MS = 1.0

SOURCE_MEASURED = 0
SOURCE_INTERPOLATED = 1
SOURCE_MISSING = 2
SOURCE_NAMES = {SOURCE_MEASURED: "measured", SOURCE_INTERPOLATED: "interpolated"}


class SurveyError(RuntimeError):
    """Survey failed; carries the partial focus map when one exists."""

    def __init__(self, message, partial_map=None):
        super().__init__(message)
        self.partial_map = partial_map


class FillError(RuntimeError):
    """No measured entries exist to interpolate from."""


@dataclass(frozen=True)
class SurveyConfig:
    """Knobs of one survey pass."""

    z_offset: float = 60.0
    scan_axis: str = "y"
    blur_px: float = 0.0
    quality_threshold: float = QUALITY_THRESHOLD_DEFAULT
    min_peak_height: float = MIN_PEAK_HEIGHT_DEFAULT
    skip_every: int = 1
    seed: int = 0
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    lag_margin_px: float = 5.0
    range_tolerance_um: float = 1.0
    frames_per_tile: int = 1
    allow_degraded: bool = False

    UNITS = {
        "z_offset": "um",
        "blur_px": "px",
        "noise_sigma": "intensity",
        "lag_margin_px": "px",
        "range_tolerance_um": "um",
    }

    def validate(self):
        if self.scan_axis not in ("x", "y"):
            raise ConfigurationError("scan_axis must be x|y")
        if self.blur_px < 0:
            raise ConfigurationError("blur_px must be >= 0")
        if self.scan_axis == "x" and self.blur_px > 0 and not self.allow_degraded:
            raise ConfigurationError(
                "scanning along the two-copy axis (x) with motion blur "
                "degrades the estimate; pass allow_degraded to override"
            )
        if self.skip_every < 1:
            raise ConfigurationError("skip_every must be >= 1")
        if self.frames_per_tile < 1:
            raise ConfigurationError("frames_per_tile must be >= 1")
        if self.z_offset <= 0:
            raise ConfigurationError("z_offset must be positive")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be >= 0")

    def to_dict(self):
        d = asdict(self)
        d["units"] = dict(self.UNITS)
        return d

    @classmethod
    def from_dict(cls, data):
        names = set(cls.__dataclass_fields__)
        unknown = set(data) - names - {"units"}
        if unknown:
            raise ConfigurationError(f"unknown survey fields: {sorted(unknown)}")
        return cls(**{k: v for k, v in data.items() if k in names})


@dataclass(eq=False)
class FocusMap:
    """Per-tile best-focus stage positions with provenance.

    ``timings`` holds wall-clock figures for reporting only; it is excluded
    from serialization so identical seeds produce byte-identical artifacts.
    """

    z_focus: np.ndarray
    quality: np.ndarray
    source: np.ndarray
    out_of_range: np.ndarray
    metadata: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.z_focus.shape

    def n_missing(self):
        return int(np.sum(self.source == SOURCE_MISSING))

    def to_dict(self):
        return {
            "z_focus_um": self.z_focus.tolist(),
            "quality": self.quality.tolist(),
            "source": [
                [SOURCE_NAMES.get(int(s), "missing") for s in row]
                for row in self.source
            ],
            "out_of_range": self.out_of_range.astype(bool).tolist(),
            "metadata": self.metadata,
            "units": {"z_focus_um": "um"},
        }

    @classmethod
    def from_dict(cls, data):
        names_inv = {v: k for k, v in SOURCE_NAMES.items()}
        source = np.array(
            [[names_inv.get(s, SOURCE_MISSING) for s in row] for row in data["source"]],
            dtype=np.int8,
        )
        return cls(
            z_focus=np.array(data["z_focus_um"], dtype=np.float64),
            quality=np.array(data["quality"], dtype=np.float64),
            source=source,
            out_of_range=np.array(data["out_of_range"], dtype=bool),
            metadata=data.get("metadata", {}),
        )

    def to_json(self, path):
        dump_json(self.to_dict(), path)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv_text())

    def to_csv_text(self):
        rows, cols = self.shape
        lines = ["row,col,z_focus_um,quality,source,out_of_range"]
        for r in range(rows):
            for c in range(cols):
                lines.append(
                    f"{r},{c},{self.z_focus[r, c]:.6f},{self.quality[r, c]:.6g},"
                    f"{SOURCE_NAMES.get(int(self.source[r, c]), 'missing')},"
                    f"{str(bool(self.out_of_range[r, c])).lower()}"
                )
        return "\n".join(lines) + "\n"


def serpentine_order(rows, cols):
    """Tile visit order with constant-velocity rows: even rows run left to
    right, odd rows run back."""
    visits = []
    for r in range(rows):
        cs = range(cols) if r % 2 == 0 else range(cols - 1, -1, -1)
        visits.extend((r, c) for c in cs)
    return visits


def _lag_window(curve, cfg, tile_px):
    lo = curve.valid_lag_window[0] - cfg.lag_margin_px
    hi = curve.valid_lag_window[1] + cfg.lag_margin_px
    lo = max(lo, 1.0)
    max_lag = tile_px // 2 - 2
    if hi > max_lag:
        raise ConfigurationError(
            f"detection range maps to lags up to {hi:.1f} px but a "
            f"{tile_px}-px tile only resolves lags below {max_lag}; use a "
            "larger tile or a narrower detection range"
        )
    return (lo, hi)


def _measure_tiles(model, geom, curve, cfg, tiles):
    """Render and estimate a batch of tiles; pure function of its inputs."""
    window = _lag_window(curve, cfg, model.spec.tile_px)
    z_stage = cfg.z_offset
    out = []
    t_render = 0.0
    t_estimate = 0.0
    for (r, c) in tiles:
        t0 = time.perf_counter()
        acc = None
        for rep in range(cfg.frames_per_tile):
            req = CaptureRequest(
                tile=(r, c),
                z_stage=z_stage,
                blur_px=cfg.blur_px,
                scan_axis=cfg.scan_axis,
                illumination="dual_led",
                noise_sigma=cfg.noise_sigma,
                seed=derive_seed(cfg.seed, rep, r, c),
            )
            frame = render_dual_led(model, geom, req)
            acc = frame.pixels if acc is None else acc + frame.pixels
        pixels = acc / cfg.frames_per_tile
        t1 = time.perf_counter()
        est = estimate_shift(
            pixels,
            window,
            quality_threshold=cfg.quality_threshold,
            min_peak_height=cfg.min_peak_height,
        )
        t2 = time.perf_counter()
        t_render += t1 - t0
        t_estimate += t2 - t1
        if est.accepted:
            reading = defocus_from_separation(
                curve, est.separation_px, tolerance_um=cfg.range_tolerance_um
            )
            z_focus = focus_from_defocus(max(reading.d_um, 0.0), z_stage)
            out.append((r, c, est.quality, z_focus, reading.out_of_range, True))
        else:
            out.append((r, c, est.quality, np.nan, False, False))
    return out, t_render, t_estimate


def survey(model, geom, curve, cfg, workers=1):
    """Survey every tile of the slide and build its focus map.

    Results are independent of ``workers``: each tile's randomness is keyed
    by (seed, tile) and assembly is by tile index, never by finish order.
    """
    cfg.validate()
    rows, cols = model.spec.rows, model.spec.cols
    visits = serpentine_order(rows, cols)
    measured_tiles = [t for i, t in enumerate(visits) if i % cfg.skip_every == 0]

    # Stage motion: one axial move to the offset, then x-y only.
    stage_log = {"z_moves": 1, "z_positions": [cfg.z_offset], "xy_moves": len(visits)}

    t_start = time.perf_counter()
    if workers > 1 and len(measured_tiles) > 1:
        chunks = np.array_split(np.arange(len(measured_tiles)), workers)
        payloads = [
            [measured_tiles[i] for i in chunk] for chunk in chunks if len(chunk)
        ]
        results = []
        t_render = 0.0
        t_estimate = 0.0
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_measure_tiles, model, geom, curve, cfg, batch)
                for batch in payloads
            ]
            for fut in futures:
                batch_out, tr, te = fut.result()
                results.extend(batch_out)
                t_render += tr
                t_estimate += te
    else:
        results, t_render, t_estimate = _measure_tiles(
            model, geom, curve, cfg, measured_tiles
        )

    z_focus = np.full((rows, cols), np.nan)
    quality = np.zeros((rows, cols))
    source = np.full((rows, cols), SOURCE_MISSING, dtype=np.int8)
    out_of_range = np.zeros((rows, cols), dtype=bool)

    n_rejected = 0
    for (r, c, q, z, oor, ok) in results:
        quality[r, c] = q
        if ok and not oor:
            z_focus[r, c] = z
            source[r, c] = SOURCE_MEASURED
        else:
            out_of_range[r, c] = oor
            n_rejected += 1

    fmap = FocusMap(
        z_focus=z_focus,
        quality=quality,
        source=source,
        out_of_range=out_of_range,
        metadata={
            "config": cfg.to_dict(),
            "calibration_id": curve.curve_id(),
            "grid": [rows, cols],
            "stage_log": stage_log,
            "transparent_contrast_model": "d/(d+knee)",
        },
        timings={
            "render_s": t_render,
            "estimate_s": t_estimate,
            "total_s": time.perf_counter() - t_start,
        },
    )

    if n_rejected > 0.5 * len(measured_tiles):
        raise SurveyError(
            f"{n_rejected}/{len(measured_tiles)} tiles rejected; "
            "survey configuration is broken",
            partial_map=fmap,
        )
    return fill_missing(fmap)


def fill_missing(fmap):
    """Fill unmeasured tiles from their k<=4 nearest measured neighbours.

    Weights are quality over distance, so a strong nearby estimate
    dominates; filled values always stay inside the min/max of the
    contributing neighbours. Measured entries are never touched.
    """
    missing = np.argwhere(fmap.source != SOURCE_MEASURED)
    if missing.shape[0] == 0:
        return fmap
    measured = np.argwhere(fmap.source == SOURCE_MEASURED)
    if measured.shape[0] == 0:
        raise FillError("cannot interpolate: no measured entries in the map")

    z = fmap.z_focus.copy()
    quality = fmap.quality.copy()
    source = fmap.source.copy()
    mq = fmap.quality[measured[:, 0], measured[:, 1]]
    mz = fmap.z_focus[measured[:, 0], measured[:, 1]]
    for (r, c) in missing:
        dist = np.hypot(measured[:, 0] - r, measured[:, 1] - c)
        order = np.lexsort((measured[:, 1], measured[:, 0], dist))[:4]
        w = np.maximum(mq[order], 1e-12) / dist[order]
        z[r, c] = float(np.sum(w * mz[order]) / np.sum(w))
        source[r, c] = SOURCE_INTERPOLATED
    return FocusMap(
        z_focus=z,
        quality=quality,
        source=source,
        out_of_range=fmap.out_of_range.copy(),
        metadata=dict(fmap.metadata),
        timings=dict(fmap.timings),
    )


@dataclass
class SurveyReport:
    """Residual statistics of a focus map against the slide ground truth."""

    n_tiles: int
    n_measured: int
    n_interpolated: int
    n_out_of_range: int
    mean_abs_error_um: float
    std_abs_error_um: float
    max_abs_error_um: float
    frac_within_dof: float
    frac_within_half_um: float
    derived_speed_mm_s: float
    residuals_um: list
    brenner_agreement: dict = None

    def to_dict(self):
        d = {
            "n_tiles": self.n_tiles,
            "n_measured": self.n_measured,
            "n_interpolated": self.n_interpolated,
            "n_out_of_range": self.n_out_of_range,
            "mean_abs_error_um": self.mean_abs_error_um,
            "std_abs_error_um": self.std_abs_error_um,
            "max_abs_error_um": self.max_abs_error_um,
            "frac_within_dof": self.frac_within_dof,
            "frac_within_half_um": self.frac_within_half_um,
            "derived_speed_mm_s": self.derived_speed_mm_s,
            "residuals_um": self.residuals_um,
            "dof_um": DOF_UM,
            "units": {
                "mean_abs_error_um": "um",
                "std_abs_error_um": "um",
                "max_abs_error_um": "um",
                "derived_speed_mm_s": "mm/s",
                "residuals_um": "um",
            },
        }
        if self.brenner_agreement is not None:
            d["brenner_agreement"] = self.brenner_agreement
        return d


def verify_acquisition(
    model, fmap, brenner_results=None, exposure_ms=DEFAULT_EXPOSURE_MS
):
    """Compare a complete focus map against the simulator's ground truth.

    Reports per-tile residuals, their mean/std/max, the fraction of tiles
    whose focus lands inside the Kohler depth of field (|residual| within
    half the 1.3 um DOF), and the stage speed implied by the configured
    blur length at the given exposure.
    """
    if fmap.n_missing() > 0:
        raise ValueError("focus map still has missing entries; fill it first")
    residuals = np.abs(fmap.z_focus - model.topography)
    flat = residuals.ravel()

    blur_px = fmap.metadata.get("config", {}).get("blur_px", 0.0)
    pitch = model.spec.pixel_pitch
    speed_mm_s = blur_px * pitch / (exposure_ms * 1e-3) * 1e-3

    brenner = None
    if brenner_results:
        diffs = [
            abs(fmap.z_focus[r, c] - res.z_best_refined)
            for (r, c), res in brenner_results.items()
        ]
        diffs = np.array(diffs)
        brenner = {
            "n_tiles": int(diffs.shape[0]),
            "mean_abs_diff_um": float(diffs.mean()),
            "frac_within_half_um": float(np.mean(diffs <= 0.5)),
        }
    return SurveyReport(
        n_tiles=int(flat.shape[0]),
        n_measured=int(np.sum(fmap.source == SOURCE_MEASURED)),
        n_interpolated=int(np.sum(fmap.source == SOURCE_INTERPOLATED)),
        n_out_of_range=int(np.sum(fmap.out_of_range)),
        mean_abs_error_um=float(flat.mean()),
        std_abs_error_um=float(flat.std()),
        max_abs_error_um=float(flat.max()),
        frac_within_dof=float(np.mean(flat <= DOF_HALF_UM)),
        frac_within_half_um=float(np.mean(flat <= 0.5)),
        derived_speed_mm_s=float(speed_mm_s),
        residuals_um=[float(v) for v in flat],
        brenner_agreement=brenner,
    )
