"""Synthetic image formation for dual-LED and Kohler illumination.

A dual-LED frame of a tile at defocus ``d = |z_stage - z_true|`` is

    0.5 * [T(+S/2) + T(-S/2)] (*) K_coh(alpha*d) (*) K_def(beta*d)
        (*) K_blur(blur_px, scan_axis)  +  noise

where T is the tile contrast image, S the two-copy separation, K_coh a
Gaussian along x from the finite LED source size, K_def an isotropic
defocus Gaussian, and K_blur a normalized box along the scan axis. All
shifts and convolutions are circular and applied in the Fourier domain;
textures are periodic by construction, so sub-pixel copy displacement is
exact and free of interpolation bias.

Kohler (incoherent) frames form a single copy whose sharpness decays with
an isotropic Gaussian of width ``gamma * |defocus|``; they feed the Brenner
ground-truth stacks.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .model import (
    STREAM_KOHLER_NOISE,
    STREAM_NOISE,
    STREAM_TOPOGRAPHY,
    ConfigurationError,
    Frame,
    SlideModel,
    SlideSpec,
    rng_from,
    separation_from_defocus,
)

DEFAULT_NOISE_SIGMA = 0.01
TRANSPARENT_CONTRAST_KNEE_UM = 20.0
KOHLER_GAMMA_PX_PER_UM = 1.5

# Topography shaping: headroom below max_adjacent_step left for safety, and
# the low-pass width (in tiles) of the random bump field.
_STEP_HEADROOM = 0.9
_BUMP_SMOOTH_TILES = 1.5


@dataclass(frozen=True)
class CaptureRequest:
    """One simulated exposure."""

    tile: tuple = (0, 0)
    z_stage: float = 60.0
    blur_px: float = 0.0
    scan_axis: str = "y"
    illumination: str = "dual_led"
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be >= 0")
        if self.blur_px < 0:
            raise ConfigurationError("blur_px must be >= 0")
        if self.scan_axis not in ("x", "y"):
            raise ConfigurationError("scan_axis must be x|y")
        if self.illumination not in ("dual_led", "kohler"):
            raise ConfigurationError("illumination must be dual_led|kohler")


def contrast_factor(d, contrast_mode, knee_um=TRANSPARENT_CONTRAST_KNEE_UM):
    """Texture contrast at defocus d.

    Stained tissue is visible at any plane. Transparent samples have no
    in-focus brightfield contrast; the partially coherent illumination
    builds contrast with defocus, modeled as d / (d + knee).
    """
    if contrast_mode == "stained":
        return 1.0
    return d / (d + knee_um)


def _freqs(shape):
    fy = np.fft.fftfreq(shape[0])[:, None]
    fx = np.fft.rfftfreq(shape[1])[None, :]
    return fy, fx


def _gaussian_response(freq_sq, sigma_px):
    return np.exp(-2.0 * np.pi**2 * sigma_px**2 * freq_sq)


def _box_response(f, length_px):
    # Frequency response of a centered discrete box (Dirichlet kernel).
    # For integer lengths this equals circular convolution with a length-b
    # box of sample weights 1/b; normalization holds for any length.
    out = np.ones_like(f)
    nz = np.abs(f) > 1e-15
    out[nz] = np.sin(np.pi * f[nz] * length_px) / (
        length_px * np.sin(np.pi * f[nz])
    )
    return out


def box_blur(pixels, length_px, axis):
    """Circular box blur along 'x' (columns) or 'y' (rows)."""
    if length_px <= 1e-12:
        return np.array(pixels, dtype=np.float64, copy=True)
    pixels = np.asarray(pixels, dtype=np.float64)
    fy, fx = _freqs(pixels.shape)
    f = fx if axis == "x" else fy
    spectrum = np.fft.rfft2(pixels) * _box_response(f, length_px)
    return np.fft.irfft2(spectrum, s=pixels.shape)


def generate_slide(spec, seed=None):
    """Sample a SlideModel from its spec.

    The topography is a low-order 2D polynomial plus smoothed random bumps,
    rescaled so the largest step between adjacent tiles stays below
    ``max_adjacent_step`` and the excursion stays within ``topo_amplitude``,
    then shifted by ``z_base``. Deterministic given (spec, seed).
    """
    if seed is not None:
        spec = spec.with_seed(seed)
    topo = _sample_topography(spec) + spec.z_base
    return SlideModel(spec=spec, topography=topo)


def _sample_topography(spec):
    rows, cols = spec.rows, spec.cols
    if spec.topo_amplitude == 0:
        return np.zeros((rows, cols))
    rng = rng_from(spec.seed, STREAM_TOPOGRAPHY)
    v = np.linspace(-1.0, 1.0, rows)[:, None] if rows > 1 else np.zeros((1, 1))
    u = np.linspace(-1.0, 1.0, cols)[None, :] if cols > 1 else np.zeros((1, 1))
    c = rng.uniform(-1.0, 1.0, size=6)
    poly = c[0] + c[1] * u + c[2] * v + c[3] * u * v + c[4] * u**2 + c[5] * v**2
    bumps = ndimage.gaussian_filter(
        rng.standard_normal((rows, cols)), sigma=_BUMP_SMOOTH_TILES, mode="nearest"
    )
    bstd = bumps.std()
    if bstd > 0:
        bumps /= bstd
    field = poly + 0.8 * bumps
    field -= field.mean()

    step = 0.0
    if rows > 1:
        step = max(step, float(np.max(np.abs(np.diff(field, axis=0)))))
    if cols > 1:
        step = max(step, float(np.max(np.abs(np.diff(field, axis=1)))))
    scale = np.inf
    if step > 0:
        scale = _STEP_HEADROOM * spec.max_adjacent_step / step
    peak = float(np.max(np.abs(field)))
    if peak > 0:
        scale = min(scale, spec.topo_amplitude / peak)
    if not np.isfinite(scale):
        scale = 0.0
    return field * scale


def render_dual_led(
    model,
    geom,
    req,
    knee_um=TRANSPARENT_CONTRAST_KNEE_UM,
):
    """Render one dual-LED frame of a tile.

    Pixel values are clipped at zero after noise, matching a camera that
    cannot report negative counts.
    """
    if req.illumination != "dual_led":
        raise ValueError("render_dual_led requires a dual_led request")
    row, col = req.tile
    model.check_tile(row, col)
    d = abs(req.z_stage - model.z_true(row, col))
    sep = separation_from_defocus(geom, d)

    tex = model.texture_tile(row, col)
    tex = tex * contrast_factor(d, model.spec.contrast_mode, knee_um)
    fy, fx = _freqs(tex.shape)

    # Real, even transfer function: the half-sum of +-S/2 copies is a pure
    # cosine factor, so the output stays exactly real.
    h = np.cos(np.pi * fx * sep)
    h = h * _gaussian_response(fx**2, geom.coherence_alpha * d)
    h = h * _gaussian_response(fx**2 + fy**2, geom.defocus_beta * d)
    if req.blur_px > 0:
        f_axis = fx if req.scan_axis == "x" else fy
        h = h * _box_response(f_axis, req.blur_px)

    img = np.fft.irfft2(np.fft.rfft2(tex) * h, s=tex.shape)
    if req.noise_sigma > 0:
        rng = rng_from(req.seed, STREAM_NOISE, row, col)
        img = img + req.noise_sigma * rng.standard_normal(img.shape)
    np.clip(img, 0.0, None, out=img)
    return Frame(
        pixels=img,
        tile=(row, col),
        z_stage=req.z_stage,
        blur_px=req.blur_px,
        scan_axis=req.scan_axis,
        illumination="dual_led",
    )


def render_kohler_stack(
    model,
    tile,
    z_center,
    n=11,
    step=0.5,
    seed=0,
    gamma_px_per_um=KOHLER_GAMMA_PX_PER_UM,
    noise_sigma=DEFAULT_NOISE_SIGMA,
):
    """Render an n-plane incoherent z-stack centered on z_center.

    Plane k sits at ``z_center + (k - n//2) * step``; defaults span 5 um in
    0.5 um steps. Sharpness decays with an isotropic Gaussian of width
    ``gamma * |z - z_true|``, with no two-copy structure. The full texture
    is used regardless of contrast_mode: weakly-stained and transparent
    sections still show enough residual brightfield structure for a contrast
    metric once a dense z-stack is taken, and the stacks exist to provide
    ground truth rather than to model visibility limits.
    """
    if n % 2 == 0:
        raise ValueError("stack size n must be odd")
    if n < 1 or step <= 0:
        raise ValueError("need n >= 1 planes and a positive step")
    row, col = tile
    model.check_tile(row, col)
    z_true = model.z_true(row, col)
    tex = model.texture_tile(row, col)
    spectrum = np.fft.rfft2(tex)
    fy, fx = _freqs(tex.shape)
    freq_sq = fx**2 + fy**2

    frames = []
    for k in range(n):
        z = z_center + (k - n // 2) * step
        sigma = gamma_px_per_um * abs(z - z_true)
        img = np.fft.irfft2(spectrum * _gaussian_response(freq_sq, sigma), s=tex.shape)
        if noise_sigma > 0:
            rng = rng_from(seed, STREAM_KOHLER_NOISE, row, col, k)
            img = img + noise_sigma * rng.standard_normal(img.shape)
        np.clip(img, 0.0, None, out=img)
        frames.append(
            Frame(
                pixels=img,
                tile=(row, col),
                z_stage=z,
                blur_px=0.0,
                scan_axis="y",
                illumination="kohler",
            )
        )
    return frames
