"""Core domain types and conventions shared by the whole pipeline.

Units are microns (um) for axial distances, pixels (px) for lateral image
distances, and radians for angles. The two illumination LEDs sit symmetric
about the optical axis in the x-z plane, so a defocused sample images as two
copies displaced along x; the stage scan direction for blur-tolerant
surveying is y.

All randomness is derived from explicit integer seeds through
:func:`rng_from` / :func:`derive_seed`, which expand a top-level seed plus a
stream tag and tile coordinates into independent generators. Identical
(config, seed) pairs therefore reproduce identical arrays regardless of
evaluation order or worker count.
"""

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np


class ConfigurationError(ValueError):
    """Raised for invalid geometry, slide, or survey configuration."""


# Stream tags keeping independently-seeded random streams apart.
STREAM_TEXTURE = 1
STREAM_TOPOGRAPHY = 2
STREAM_NOISE = 3
STREAM_KOHLER_NOISE = 4
STREAM_CALIBRATION = 5
STREAM_BENCH = 6


def _as_entropy(keys):
    out = []
    for k in keys:
        k = int(k)
        out.append(k & 0xFFFFFFFFFFFFFFFF)
    return out


def rng_from(*keys):
    """Deterministic generator keyed by (seed, stream, coords...)."""
    return np.random.default_rng(np.random.SeedSequence(_as_entropy(keys)))


def derive_seed(*keys):
    """Collapse a key tuple into a single 64-bit child seed."""
    ss = np.random.SeedSequence(_as_entropy(keys))
    return int(ss.generate_state(1, np.uint64)[0])


def dump_json(payload, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _from_partial_dict(cls, data):
    names = {f for f in cls.__dataclass_fields__}
    kwargs = {k: v for k, v in data.items() if k in names}
    for key in data:
        if key not in names and key != "units":
            raise ConfigurationError(f"unknown field {key!r} for {cls.__name__}")
    return cls(**kwargs)


@dataclass(frozen=True)
class DefocusGeometry:
    """Dual-LED illumination geometry and the valid detection band.

    ``led_half_angle`` is the tilt of each LED from the optical axis; a
    defocus of d um displaces the two copies by +-d*tan(angle) in the sample
    plane, i.e. a separation of ``2 * d * tan(angle) / pixel_pitch`` pixels.
    ``coherence_alpha`` models the finite LED emitting area as a copy blur
    (px of Gaussian width per um of defocus) that erodes the autocorrelation
    peaks as defocus grows; ``defocus_beta`` is the overall isotropic defocus
    blur in px per um.
    """

    z_offset: float = 60.0
    led_half_angle: float = math.atan(0.25)
    pixel_pitch: float = 0.275
    coherence_alpha: float = 0.05
    defocus_beta: float = 0.02
    detection_z_min: float = 30.0
    detection_z_max: float = 90.0

    UNITS = {
        "z_offset": "um",
        "led_half_angle": "rad",
        "pixel_pitch": "um/px",
        "coherence_alpha": "px/um",
        "defocus_beta": "px/um",
        "detection_z_min": "um",
        "detection_z_max": "um",
    }

    def __post_init__(self):
        if self.z_offset <= 0:
            raise ConfigurationError("z_offset must be positive")
        if not (self.detection_z_min < self.z_offset < self.detection_z_max):
            raise ConfigurationError(
                "z_offset must lie strictly inside the detection range"
            )
        if not (0 < self.led_half_angle < math.pi / 2):
            raise ConfigurationError("led_half_angle must be in (0, pi/2)")
        if self.pixel_pitch <= 0:
            raise ConfigurationError("pixel_pitch must be positive")
        if self.coherence_alpha < 0 or self.defocus_beta < 0:
            raise ConfigurationError("blur coefficients must be non-negative")

    @property
    def separation_slope(self):
        """Pixels of two-copy separation per micron of defocus."""
        return 2.0 * math.tan(self.led_half_angle) / self.pixel_pitch

    def to_dict(self):
        d = asdict(self)
        d["units"] = dict(self.UNITS)
        return d

    @classmethod
    def from_dict(cls, data):
        return _from_partial_dict(cls, data)


def separation_from_defocus(geom, d):
    """Two-copy separation in pixels at defocus distance d (um).

    The sign of the defocus is unobservable from a single frame, so callers
    work in the offset regime where d >= 0 by construction.
    """
    if d < 0:
        raise ValueError("defocus distance must be non-negative (offset regime)")
    return geom.separation_slope * d


@dataclass(frozen=True)
class SlideSpec:
    """Parameters describing a synthetic slide; sampling happens in optics.

    ``topo_amplitude`` bounds the topography excursion about ``z_base`` and
    ``max_adjacent_step`` bounds the focus jump between neighbouring tiles.
    The defaults allow adjacent tiles to differ by more than 1 um, which is
    the regime that makes skip-and-triangulate focus maps unreliable.
    """

    rows: int = 10
    cols: int = 10
    tile_px: int = 512
    pixel_pitch: float = 0.275
    contrast_mode: str = "stained"
    topo_amplitude: float = 15.0
    max_adjacent_step: float = 1.5
    texture_smooth_px: float = 2.0
    z_base: float = 0.0
    seed: int = 0

    UNITS = {
        "tile_px": "px",
        "pixel_pitch": "um/px",
        "topo_amplitude": "um",
        "max_adjacent_step": "um",
        "texture_smooth_px": "px",
        "z_base": "um",
    }

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigurationError("grid must be at least 1x1")
        if self.tile_px < 64:
            raise ConfigurationError(
                "tile_px must be >= 64; smaller tiles cannot host the "
                "autocorrelation lag window"
            )
        if self.contrast_mode not in ("stained", "transparent"):
            raise ConfigurationError("contrast_mode must be stained|transparent")
        if self.topo_amplitude < 0 or self.topo_amplitude > 30.0:
            raise ConfigurationError("topo_amplitude must be in [0, 30] um")
        if self.max_adjacent_step <= 0:
            raise ConfigurationError("max_adjacent_step must be positive")
        if self.texture_smooth_px < 0:
            raise ConfigurationError("texture_smooth_px must be non-negative")

    def to_dict(self):
        d = asdict(self)
        d["units"] = dict(self.UNITS)
        return d

    @classmethod
    def from_dict(cls, data):
        return _from_partial_dict(cls, data)

    def with_seed(self, seed):
        return replace(self, seed=int(seed))


@dataclass(eq=False)
class SlideModel:
    """Sampled synthetic specimen: per-tile focus heights plus texture.

    ``topography[r, c]`` is the true in-focus stage position of tile (r, c)
    in um. Tile textures are band-limited periodic fields re-deriveable from
    the spec seed, so the model stays cheap to pickle and share across
    workers. Instances are immutable by convention and safe to use
    concurrently.
    """

    spec: SlideSpec
    topography: np.ndarray

    def __post_init__(self):
        self.topography = np.asarray(self.topography, dtype=np.float64)
        if self.topography.shape != (self.spec.rows, self.spec.cols):
            raise ConfigurationError("topography shape must match the grid")

    def z_true(self, row, col):
        self.check_tile(row, col)
        return float(self.topography[row, col])

    def check_tile(self, row, col):
        if not (0 <= row < self.spec.rows and 0 <= col < self.spec.cols):
            raise IndexError(
                f"tile ({row}, {col}) outside grid "
                f"{self.spec.rows}x{self.spec.cols}"
            )

    def texture_tile(self, row, col):
        """Texture field of one tile, values in [0, 1], periodic.

        The field has random Fourier phases under a fixed Gaussian in-band
        amplitude envelope. Keeping the per-tile spectrum envelope
        deterministic keeps the row-averaged autocorrelation background
        reproducible across tiles, which the motion-blur tolerance of the
        estimator relies on; plain smoothed white noise leaves
        realization-dependent background ripple.
        """
        self.check_tile(row, col)
        n = self.spec.tile_px
        rng = rng_from(self.spec.seed, STREAM_TEXTURE, row, col)
        spectrum = np.fft.rfft2(rng.standard_normal((n, n)))
        mag = np.abs(spectrum)
        mag[mag < 1e-300] = 1.0
        spectrum /= mag
        fy = np.fft.fftfreq(n)[:, None]
        fx = np.fft.rfftfreq(n)[None, :]
        sigma = self.spec.texture_smooth_px
        spectrum *= np.exp(-2.0 * np.pi**2 * sigma**2 * (fx**2 + fy**2))
        tex = np.fft.irfft2(spectrum, s=(n, n))
        tex -= tex.min()
        peak = tex.max()
        if peak > 0:
            tex /= peak
        return tex

    def to_dict(self):
        return {"spec": self.spec.to_dict()}


@dataclass(eq=False)
class Frame:
    """A single captured single-channel tile image plus capture metadata."""

    pixels: np.ndarray
    tile: tuple = (0, 0)
    z_stage: float = 0.0
    blur_px: float = 0.0
    scan_axis: str = "y"
    illumination: str = "dual_led"

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2:
            raise ValueError("frame pixels must be 2D")
        if not np.all(np.isfinite(self.pixels)):
            raise ValueError("frame pixels must be finite")
        if self.pixels.min() < 0:
            raise ValueError("frame pixels must be non-negative")
        if self.blur_px < 0:
            raise ValueError("blur_px must be >= 0")
        if self.scan_axis not in ("x", "y"):
            raise ValueError("scan_axis must be x|y")
        if self.illumination not in ("dual_led", "kohler"):
            raise ValueError("illumination must be dual_led|kohler")
