"""Command-line front end.

Subcommands: calibrate, survey, oracle, bench, dump-frame, dump-profile.
Exit codes: 0 success, 1 pipeline failure, 2 usage/configuration error.
Configuration comes from an optional JSON file (sections: geometry, slide,
survey, bench, estimator); flags override config fields.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .autocorr import (
    DegenerateFrameError,
    autocorrelate_1d,
    find_separation,
)
from .brenner import find_focus_brenner, oracle_csv_rows
from .calibration import CalibrationCurve, CalibrationError, run_calibration
from .model import (
    ConfigurationError,
    DefocusGeometry,
    SlideSpec,
    dump_json,
    load_json,
)
from .optics import CaptureRequest, generate_slide, render_dual_led
from .pgm import read_pgm, write_pgm
from .survey import FillError, SurveyConfig, SurveyError, survey, verify_acquisition


class UsageError(Exception):
    pass


def _load_config(path):
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {p}")
    try:
        cfg = load_json(p)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config root must be a JSON object")
    return cfg


def _geometry(cfg):
    return DefocusGeometry.from_dict(cfg.get("geometry", {}))


def _slide_spec(cfg, seed=None):
    spec = SlideSpec.from_dict(cfg.get("slide", {}))
    if seed is not None:
        spec = spec.with_seed(seed)
    return spec


def _survey_config(cfg, args):
    data = dict(cfg.get("survey", {}))
    est = cfg.get("estimator", {})
    if "quality_threshold" in est:
        data["quality_threshold"] = est["quality_threshold"]
    if "min_peak_height" in est:
        data["min_peak_height"] = est["min_peak_height"]
    if getattr(args, "blur", None) is not None:
        data["blur_px"] = args.blur
    if getattr(args, "scan_axis", None) is not None:
        data["scan_axis"] = args.scan_axis
    if getattr(args, "allow_degraded", False):
        data["allow_degraded"] = True
    if getattr(args, "skip", None) is not None:
        data["skip_every"] = args.skip
    if args.seed is not None:
        data["seed"] = args.seed
    scfg = SurveyConfig.from_dict(data)
    scfg.validate()
    return scfg


def _add_common(parser):
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--seed", type=int, help="override all seeds")
    parser.add_argument("--out", help="output path or prefix")
    parser.add_argument("--workers", type=int, default=1, help="worker processes")


def _flat_target(cfg, args, tile_px=None):
    spec = _slide_spec(cfg, seed=args.seed)
    fields = {
        "rows": 1,
        "cols": 1,
        "tile_px": tile_px or spec.tile_px,
        "pixel_pitch": spec.pixel_pitch,
        "topo_amplitude": 0.0,
        "seed": spec.seed,
    }
    return generate_slide(SlideSpec(**fields))


def cmd_calibrate(args):
    cfg = _load_config(args.config)
    geom = _geometry(cfg)
    d_values = [float(v) for v in args.d_values.split(",")]
    model = _flat_target(cfg, args)
    curve = run_calibration(
        model,
        geom,
        d_values,
        seed=model.spec.seed,
        noise_sigma=args.noise if args.noise is not None else 0.01,
    )
    out = Path(args.out or "calib.json")
    dump_json(curve.to_dict(), out)
    print(f"calibration: slope {curve.slope_px_per_um:.4f} px/um, "
          f"intercept {curve.intercept_px:.3f} px, "
          f"rms {curve.rms_residual_px:.4f} px -> {out}")
    return 0


def _load_or_make_curve(cfg, args, geom):
    if getattr(args, "calib", None):
        p = Path(args.calib)
        if not p.exists():
            raise UsageError(f"calibration file not found: {p}")
        return CalibrationCurve.from_dict(load_json(p))
    model = _flat_target(cfg, args)
    print("no --calib given; running calibration on a flat target",
          file=sys.stderr)
    return run_calibration(
        model, geom, (30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0),
        seed=model.spec.seed,
    )


def cmd_survey(args):
    cfg = _load_config(args.config)
    geom = _geometry(cfg)
    scfg = _survey_config(cfg, args)
    model = generate_slide(_slide_spec(cfg, seed=args.seed))
    curve = _load_or_make_curve(cfg, args, geom)
    fmap = survey(model, geom, curve, scfg, workers=args.workers)
    report = verify_acquisition(model, fmap)

    prefix = Path(args.out or "focus_map")
    fmap.to_csv(prefix.with_suffix(".csv"))
    fmap.to_json(prefix.with_suffix(".json"))
    dump_json(report.to_dict(), Path(str(prefix) + "_report.json"))
    print(
        f"survey: {report.n_tiles} tiles, mean |error| "
        f"{report.mean_abs_error_um:.3f} um, "
        f"{report.frac_within_dof * 100:.1f}% within DOF "
        f"({fmap.timings.get('total_s', 0):.2f}s)"
    )
    return 0


def cmd_oracle(args):
    cfg = _load_config(args.config)
    model = generate_slide(_slide_spec(cfg, seed=args.seed))
    centers = None
    if args.center == "map":
        if not args.map:
            raise UsageError("--center map requires --map <focus_map.json>")
        from .survey import FocusMap

        fmap = FocusMap.from_dict(load_json(args.map))
        centers = fmap.z_focus
    results = {}
    for r in range(model.spec.rows):
        for c in range(model.spec.cols):
            if args.center == "true":
                z0 = model.z_true(r, c)
            elif args.center == "map":
                z0 = float(centers[r, c])
            else:
                z0 = 0.0
            results[(r, c)] = find_focus_brenner(
                model, (r, c), z_center=z0, seed=model.spec.seed + r * 1000 + c
            )
    out = Path(args.out or "oracle.csv")
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(oracle_csv_rows(results))
    print(f"oracle: {len(results)} tiles -> {out}")
    return 0


def cmd_bench(args):
    cfg = _load_config(args.config)
    bench_cfg = dict(cfg.get("bench", {}))
    if args.seed is not None:
        bench_cfg["seed"] = args.seed
    plan = bench_mod.BenchPlan.from_dict(bench_cfg) if bench_cfg else (
        bench_mod.default_bench_plan()
    )
    offsets = args.z_offset or [plan.z_offset]
    out_dir = Path(args.out or "bench_out")
    code = 0
    for z_off in offsets:
        run_plan = bench_mod.BenchPlan.from_dict(
            {**plan.to_dict(), "z_offset": z_off}
        )
        geom = DefocusGeometry.from_dict(
            {**cfg.get("geometry", {}), "z_offset": z_off}
        )
        suffix = "" if len(offsets) == 1 else f"_z{z_off:g}"
        report = bench_mod.run_bench(
            run_plan,
            geom=geom,
            workers=args.workers,
            with_oracle=args.with_oracle,
        )
        bench_mod.write_bench_outputs(report, out_dir, suffix=suffix)
        print(bench_mod.format_report_table(report))
        print(
            f"total {report.timing_s['total_s']:.1f}s; monotone degradation: "
            f"{bench_mod.summary_is_monotone(report)}"
        )
    return code


def _render_from_args(cfg, args):
    geom = _geometry(cfg)
    model = generate_slide(_slide_spec(cfg, seed=args.seed))
    tile = tuple(args.tile)
    req = CaptureRequest(
        tile=tile,
        z_stage=args.z,
        blur_px=args.blur or 0.0,
        scan_axis=args.scan_axis or "y",
        illumination=args.illumination,
        noise_sigma=args.noise if args.noise is not None else 0.01,
        seed=model.spec.seed,
    )
    if req.illumination != "dual_led":
        raise UsageError("only dual_led frames can be dumped here")
    return render_dual_led(model, geom, req)


def cmd_dump_frame(args):
    cfg = _load_config(args.config)
    frame = _render_from_args(cfg, args)
    out = Path(args.out or "frame.pgm")
    write_pgm(out, frame.pixels)
    print(f"frame: tile {frame.tile} z={frame.z_stage} -> {out}")
    return 0


def cmd_dump_profile(args):
    cfg = _load_config(args.config)
    if args.frame:
        p = Path(args.frame)
        if not p.exists():
            raise UsageError(f"frame file not found: {p}")
        pixels = read_pgm(p)
        profile = autocorrelate_1d(pixels)
    else:
        frame = _render_from_args(cfg, args)
        profile = autocorrelate_1d(frame)
    out = Path(args.out or "profile.csv")
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("lag_px,value\n")
        for lag, val in zip(profile.lags, profile.values):
            fh.write(f"{lag},{val:.9g}\n")
    if args.lag_window:
        est = find_separation(profile, tuple(args.lag_window))
        print(
            f"profile -> {out}; peak at {est.separation_px:.2f} px "
            f"(quality {est.quality:.1f}, accepted={est.accepted})"
        )
    else:
        print(f"profile -> {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="duofocus",
        description="Dual-LED two-copy focus map surveying toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="fit the defocus-to-separation curve")
    _add_common(p)
    p.add_argument("--d-values", default="30,40,50,60,70,80,90")
    p.add_argument("--noise", type=float, help="calibration noise sigma")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("survey", help="survey a slide and write its focus map")
    _add_common(p)
    p.add_argument("--calib", help="calibration JSON (auto-runs if omitted)")
    p.add_argument("--blur", type=float, help="motion blur length in px")
    p.add_argument("--scan-axis", choices=("x", "y"))
    p.add_argument("--allow-degraded", action="store_true")
    p.add_argument("--skip", type=int, help="measure every Nth tile")
    p.set_defaults(func=cmd_survey)

    p = sub.add_parser("oracle", help="Brenner z-stack ground truth per tile")
    _add_common(p)
    p.add_argument("--center", choices=("map", "true", "nominal"), default="true")
    p.add_argument("--map", help="focus map JSON for --center map")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("bench", help="error statistics across slides and blurs")
    _add_common(p)
    p.add_argument("--with-oracle", action="store_true")
    p.add_argument("--z-offset", type=float, action="append")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("dump-frame", help="render one frame to 16-bit PGM")
    _add_common(p)
    p.add_argument("--z", type=float, default=60.0, help="stage position (um)")
    p.add_argument("--tile", type=int, nargs=2, default=[0, 0])
    p.add_argument("--blur", type=float)
    p.add_argument("--scan-axis", choices=("x", "y"))
    p.add_argument("--illumination", default="dual_led")
    p.add_argument("--noise", type=float)
    p.set_defaults(func=cmd_dump_frame)

    p = sub.add_parser("dump-profile", help="write the lag/value profile CSV")
    _add_common(p)
    p.add_argument("--frame", help="read this PGM instead of rendering")
    p.add_argument("--z", type=float, default=60.0)
    p.add_argument("--tile", type=int, nargs=2, default=[0, 0])
    p.add_argument("--blur", type=float)
    p.add_argument("--scan-axis", choices=("x", "y"))
    p.add_argument("--illumination", default="dual_led")
    p.add_argument("--noise", type=float)
    p.add_argument("--lag-window", type=float, nargs=2)
    p.set_defaults(func=cmd_dump_profile)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (
        CalibrationError,
        SurveyError,
        FillError,
        DegenerateFrameError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
