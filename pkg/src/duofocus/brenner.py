"""Brenner-gradient ground-truth focus finder.

An 11-point incoherent z-stack spanning 5 um (0.5 um per step) is scored
with the Brenner figure sum((I[x+2,y] - I[x,y])^2); the argmax defines the
quantized ground truth and an optional three-point parabola refines it
below the step size. Both values are reported.
"""

from dataclasses import dataclass

import numpy as np

from .kernels import brenner_sum
from .model import Frame
from .optics import (
    DEFAULT_NOISE_SIGMA,
    KOHLER_GAMMA_PX_PER_UM,
    render_kohler_stack,
)


@dataclass(frozen=True)
class BrennerResult:
    z_best: float
    z_best_refined: float
    scores: tuple
    refined: bool

    def to_dict(self):
        return {
            "z_best": self.z_best,
            "z_best_refined": self.z_best_refined,
            "scores": [list(zs) for zs in self.scores],
            "refined": self.refined,
            "units": {"z_best": "um", "z_best_refined": "um"},
        }


def brenner_score(frame):
    """Brenner focus figure of a frame.

    The two-column difference is taken non-circularly (the last two columns
    have no partner), matching the standard definition; circular wrap would
    mix opposite tile edges.
    """
    pixels = frame.pixels if isinstance(frame, Frame) else np.asarray(frame, float)
    if pixels.ndim != 2 or pixels.shape[1] < 3:
        raise ValueError("brenner_score needs a 2D frame with >= 3 columns")
    return brenner_sum(pixels)


def find_focus_brenner(
    model,
    tile,
    z_center,
    n=11,
    step=0.5,
    seed=0,
    refine=True,
    gamma_px_per_um=KOHLER_GAMMA_PX_PER_UM,
    noise_sigma=DEFAULT_NOISE_SIGMA,
):
    """Score a Kohler stack and return the best-focus stage position.

    Ties are broken toward z_center, then toward the lower plane. The
    refined value never leaves the scanned range because the parabola
    vertex of an interior argmax stays within one step of it.
    """
    frames = render_kohler_stack(
        model,
        tile,
        z_center,
        n=n,
        step=step,
        seed=seed,
        gamma_px_per_um=gamma_px_per_um,
        noise_sigma=noise_sigma,
    )
    zs = np.array([f.z_stage for f in frames])
    scores = np.array([brenner_score(f) for f in frames])

    best = scores.max()
    candidates = np.flatnonzero(scores == best)
    if candidates.shape[0] > 1:
        order = sorted(candidates, key=lambda i: (abs(zs[i] - z_center), zs[i]))
        k = int(order[0])
    else:
        k = int(candidates[0])

    z_grid = float(zs[k])
    z_ref = z_grid
    did_refine = False
    if refine and 0 < k < n - 1:
        y0, y1, y2 = scores[k - 1], scores[k], scores[k + 1]
        denom = y0 - 2.0 * y1 + y2
        if abs(denom) > 1e-300:
            delta = 0.5 * (y0 - y2) / denom
            z_ref = z_grid + float(np.clip(delta, -1.0, 1.0)) * step
            did_refine = True
    return BrennerResult(
        z_best=z_grid,
        z_best_refined=z_ref,
        scores=tuple((float(z), float(s)) for z, s in zip(zs, scores)),
        refined=did_refine,
    )


def oracle_csv_rows(results):
    """Rows for the oracle CSV export: (row, col) -> BrennerResult."""
    lines = ["row,col,z_best,z_best_refined"]
    for (row, col) in sorted(results):
        res = results[(row, col)]
        lines.append(f"{row},{col},{res.z_best:.6f},{res.z_best_refined:.6f}")
    return "\n".join(lines) + "\n"
