"""Benchmark harness: error statistics across slides and blur levels.

Runs the full pipeline (calibrate once, survey each slide at each blur
level, verify against ground truth) over a roster of synthetic slides
mirroring a 600-tile validation set: one low-contrast transparent
immunohistochemistry-like slide, eight stained sections, and one
transparent unstained section. Emits a CSV with one row per slide plus a
pooled summary row, and prints measured values next to the hardware
reference numbers the synthetic targets are benchmarked against.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .brenner import find_focus_brenner
from .calibration import run_calibration
from .model import (
    STREAM_BENCH,
    DefocusGeometry,
    SlideSpec,
    derive_seed,
    dump_json,
)
from .optics import DEFAULT_NOISE_SIGMA, generate_slide
from .survey import SurveyConfig, survey, verify_acquisition

# Focusing-error statistics (mean, std, um) measured on the physical
# dual-LED prototype; printed beside the synthetic results for context.
HARDWARE_REFERENCE_UM = {
    0: (0.08, 0.07),
    50: (0.11, 0.07),
    90: (0.14, 0.09),
    110: (0.17, 0.11),
}


@dataclass(frozen=True)
class SlideEntry:
    label: str
    rows: int
    cols: int
    contrast_mode: str = "stained"

    @property
    def n_tiles(self):
        return self.rows * self.cols


@dataclass(frozen=True)
class BenchPlan:
    """What the bench runs: slide roster, blur levels, seeds."""

    slides: tuple = ()
    blur_levels: tuple = (0, 50, 90, 110)
    tile_px: int = 512
    seed: int = 20260810
    z_offset: float = 60.0
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    calibration_d_values: tuple = (30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0)

    def __post_init__(self):
        if any(b < 0 for b in self.blur_levels):
            raise ValueError("blur levels must be non-negative")
        if 0 not in self.blur_levels:
            raise ValueError("the plan must include a static (0) blur level")

    def to_dict(self):
        return {
            "slides": [
                {
                    "label": s.label,
                    "rows": s.rows,
                    "cols": s.cols,
                    "contrast_mode": s.contrast_mode,
                }
                for s in self.slides
            ],
            "blur_levels": list(self.blur_levels),
            "tile_px": self.tile_px,
            "seed": self.seed,
            "z_offset": self.z_offset,
            "noise_sigma": self.noise_sigma,
            "calibration_d_values": list(self.calibration_d_values),
        }

    @classmethod
    def from_dict(cls, data):
        slides = tuple(
            SlideEntry(
                label=s["label"],
                rows=s["rows"],
                cols=s["cols"],
                contrast_mode=s.get("contrast_mode", "stained"),
            )
            for s in data.get("slides", [])
        )
        kwargs = {k: v for k, v in data.items() if k != "slides"}
        for key in ("blur_levels", "calibration_d_values"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        plan = cls(slides=slides, **kwargs)
        return plan if plan.slides else default_bench_plan(seed=plan.seed)


def default_bench_plan(seed=20260810, tile_px=512):
    """Ten synthetic slides, 600 tiles total, mirroring the validation mix."""
    slides = [SlideEntry("ihc_low_contrast", 10, 10, "transparent")]
    slides += [SlideEntry(f"stained_he_{i}", 5, 10) for i in range(1, 8)]
    slides += [SlideEntry("stained_myocardial", 5, 10)]
    slides += [SlideEntry("unstained_kidney", 10, 10, "transparent")]
    return BenchPlan(slides=tuple(slides), seed=seed, tile_px=tile_px)


@dataclass
class Table2Report:
    """Per-slide and pooled error statistics for each blur level."""

    blur_levels: tuple
    rows: list
    summary: dict
    timing_s: dict = field(default_factory=dict)
    plan: dict = field(default_factory=dict)

    def to_dict(self, include_timing=True):
        d = {
            "blur_levels": list(self.blur_levels),
            "rows": self.rows,
            "summary": self.summary,
            "plan": self.plan,
            "reference_um": {
                str(k): list(v) for k, v in HARDWARE_REFERENCE_UM.items()
            },
            "units": {"errors": "um", "timing_s": "s"},
        }
        if include_timing:
            d["timing_s"] = self.timing_s
        return d

    def csv_text(self):
        cols = ["static" if b == 0 else f"{b}px" for b in self.blur_levels]
        lines = ["slide,n_tiles," + ",".join(cols)]
        for row in self.rows:
            cells = [
                _fmt_cell(row["levels"][str(b)]) for b in self.blur_levels
            ]
            lines.append(f"{row['label']},{row['n_tiles']}," + ",".join(cells))
        cells = [_fmt_cell(self.summary[str(b)]) for b in self.blur_levels]
        lines.append(f"summary,{self.summary['n_tiles']}," + ",".join(cells))
        return "\n".join(lines) + "\n"

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.csv_text())


def _fmt_cell(stats):
    return f"{stats['mean_um']:.3f} +- {stats['std_um']:.3f}"


def run_bench(
    plan,
    geom=None,
    workers=1,
    with_oracle=False,
    oracle_max_tiles=50,
    progress=None,
):
    """Execute the plan and collect a Table2Report.

    ``with_oracle`` additionally validates static surveys against the
    Brenner z-stack ground-truth finder on up to ``oracle_max_tiles`` tiles
    per slide (stacks are 11 renders per tile, so this dominates runtime
    when enabled).
    """
    if geom is None:
        geom = DefocusGeometry(z_offset=plan.z_offset)
    t_all = time.perf_counter()

    flat = generate_slide(
        SlideSpec(
            rows=1,
            cols=1,
            tile_px=plan.tile_px,
            topo_amplitude=0.0,
            seed=derive_seed(plan.seed, STREAM_BENCH, 0),
        )
    )
    curve = run_calibration(
        flat,
        geom,
        plan.calibration_d_values,
        seed=derive_seed(plan.seed, STREAM_BENCH, 1),
        noise_sigma=plan.noise_sigma,
    )

    rows = []
    pooled = {b: [] for b in plan.blur_levels}
    pooled_dof = {b: [] for b in plan.blur_levels}
    timing = {"calibration_s": time.perf_counter() - t_all, "surveys": []}

    for idx, entry in enumerate(plan.slides):
        spec = SlideSpec(
            rows=entry.rows,
            cols=entry.cols,
            tile_px=plan.tile_px,
            contrast_mode=entry.contrast_mode,
            seed=derive_seed(plan.seed, STREAM_BENCH, 2, idx),
        )
        model = generate_slide(spec)
        level_stats = {}
        for lvl_idx, blur in enumerate(plan.blur_levels):
            cfg = SurveyConfig(
                z_offset=plan.z_offset,
                scan_axis="y",
                blur_px=float(blur),
                seed=derive_seed(plan.seed, STREAM_BENCH, 3, idx, lvl_idx),
                noise_sigma=plan.noise_sigma,
            )
            t0 = time.perf_counter()
            fmap = survey(model, geom, curve, cfg, workers=workers)
            brenner_results = None
            if with_oracle and blur == 0:
                brenner_results = _run_oracle(
                    model, fmap, plan, idx, max_tiles=oracle_max_tiles
                )
            report = verify_acquisition(model, fmap, brenner_results=brenner_results)
            dt = time.perf_counter() - t0
            timing["surveys"].append(
                {
                    "slide": entry.label,
                    "blur_px": blur,
                    "wall_s": dt,
                    "render_s": fmap.timings.get("render_s"),
                    "estimate_s": fmap.timings.get("estimate_s"),
                }
            )
            level_stats[str(blur)] = {
                "mean_um": report.mean_abs_error_um,
                "std_um": report.std_abs_error_um,
                "max_um": report.max_abs_error_um,
                "frac_within_dof": report.frac_within_dof,
                "n_measured": report.n_measured,
                "n_interpolated": report.n_interpolated,
                "derived_speed_mm_s": report.derived_speed_mm_s,
            }
            if report.brenner_agreement is not None:
                level_stats[str(blur)]["brenner"] = report.brenner_agreement
            pooled[blur].extend(report.residuals_um)
            pooled_dof[blur].append(
                (report.frac_within_dof, report.n_tiles)
            )
            if progress:
                progress(entry.label, blur, level_stats[str(blur)])
        rows.append(
            {
                "label": entry.label,
                "n_tiles": entry.n_tiles,
                "contrast_mode": entry.contrast_mode,
                "levels": level_stats,
            }
        )

    summary = {"n_tiles": sum(e.n_tiles for e in plan.slides)}
    for blur in plan.blur_levels:
        res = np.array(pooled[blur])
        frac = sum(f * n for f, n in pooled_dof[blur]) / sum(
            n for _, n in pooled_dof[blur]
        )
        summary[str(blur)] = {
            "mean_um": float(res.mean()),
            "std_um": float(res.std()),
            "max_um": float(res.max()),
            "frac_within_dof": float(frac),
        }
    timing["total_s"] = time.perf_counter() - t_all
    return Table2Report(
        blur_levels=plan.blur_levels,
        rows=rows,
        summary=summary,
        timing_s=timing,
        plan=plan.to_dict(),
    )


def _run_oracle(model, fmap, plan, slide_idx, max_tiles):
    tiles = [
        (r, c)
        for r in range(model.spec.rows)
        for c in range(model.spec.cols)
    ][:max_tiles]
    results = {}
    for t_idx, (r, c) in enumerate(tiles):
        results[(r, c)] = find_focus_brenner(
            model,
            (r, c),
            z_center=float(fmap.z_focus[r, c]),
            seed=derive_seed(plan.seed, STREAM_BENCH, 4, slide_idx, t_idx),
            noise_sigma=plan.noise_sigma,
        )
    return results


def summary_is_monotone(report):
    """True when pooled mean error never decreases as blur grows."""
    means = [report.summary[str(b)]["mean_um"] for b in sorted(report.blur_levels)]
    return all(a <= b + 1e-12 for a, b in zip(means, means[1:]))


def format_report_table(report):
    """Human-readable table with reference values beside measured ones."""
    lines = []
    header = f"{'slide':24s} {'tiles':>5s}"
    for b in report.blur_levels:
        name = "static" if b == 0 else f"{b}px"
        header += f" {name:>16s}"
    lines.append(header)
    for row in report.rows:
        line = f"{row['label']:24s} {row['n_tiles']:>5d}"
        for b in report.blur_levels:
            line += f" {_fmt_cell(row['levels'][str(b)]):>16s}"
        lines.append(line)
    line = f"{'summary':24s} {report.summary['n_tiles']:>5d}"
    for b in report.blur_levels:
        line += f" {_fmt_cell(report.summary[str(b)]):>16s}"
    lines.append(line)
    ref = f"{'reference (hardware)':24s} {600:>5d}"
    for b in report.blur_levels:
        pair = HARDWARE_REFERENCE_UM.get(b)
        cell = f"{pair[0]:.3f} +- {pair[1]:.3f}" if pair else "n/a"
        ref += f" {cell:>16s}"
    lines.append(ref)
    return "\n".join(lines)


def write_bench_outputs(report, out_dir, suffix=""):
    out_dir.mkdir(parents=True, exist_ok=True)
    report.to_csv(out_dir / f"table2{suffix}.csv")
    dump_json(report.to_dict(), out_dir / f"bench_report{suffix}.json")
