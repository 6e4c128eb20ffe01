"""Dual-LED two-copy focus map surveying toolkit.

Renders synthetic whole-slide tiles under two-LED oblique illumination,
recovers per-tile defocus from the first-order peaks of the row-averaged 1D
autocorrelation, calibrates pixel shift against microns, runs the
continuous-motion survey workflow, and validates maps against a
Brenner-gradient z-stack ground truth.
"""

from .autocorr import (
    AutocorrProfile,
    DegenerateFrameError,
    ShiftEstimate,
    autocorrelate_1d,
    estimate_shift,
    find_separation,
)
from .bench import BenchPlan, Table2Report, default_bench_plan, run_bench
from .brenner import BrennerResult, brenner_score, find_focus_brenner
from .calibration import (
    CalibrationCurve,
    CalibrationError,
    DefocusReading,
    defocus_from_separation,
    focus_from_defocus,
    run_calibration,
)
from .model import (
    ConfigurationError,
    DefocusGeometry,
    Frame,
    SlideModel,
    SlideSpec,
    separation_from_defocus,
)
from .optics import (
    CaptureRequest,
    box_blur,
    generate_slide,
    render_dual_led,
    render_kohler_stack,
)
from .survey import (
    FillError,
    FocusMap,
    SurveyConfig,
    SurveyError,
    SurveyReport,
    fill_missing,
    survey,
    verify_acquisition,
)

__version__ = "0.1.0"

__all__ = [
    "AutocorrProfile",
    "BenchPlan",
    "BrennerResult",
    "CalibrationCurve",
    "CalibrationError",
    "CaptureRequest",
    "ConfigurationError",
    "DefocusGeometry",
    "DefocusReading",
    "DegenerateFrameError",
    "FillError",
    "FocusMap",
    "Frame",
    "ShiftEstimate",
    "SlideModel",
    "SlideSpec",
    "SurveyConfig",
    "SurveyError",
    "SurveyReport",
    "Table2Report",
    "autocorrelate_1d",
    "box_blur",
    "brenner_score",
    "default_bench_plan",
    "defocus_from_separation",
    "estimate_shift",
    "fill_missing",
    "find_focus_brenner",
    "find_separation",
    "focus_from_defocus",
    "generate_slide",
    "render_dual_led",
    "render_kohler_stack",
    "run_bench",
    "run_calibration",
    "separation_from_defocus",
    "survey",
    "verify_acquisition",
]
