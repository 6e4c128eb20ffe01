import numpy as np
import pytest

from duofocus import (
    SlideSpec,
    brenner_score,
    find_focus_brenner,
    generate_slide,
    render_kohler_stack,
)
from duofocus.brenner import oracle_csv_rows

from .oracles import brenner_direct


@pytest.fixture(scope="module")
def flat256():
    return generate_slide(
        SlideSpec(rows=1, cols=2, tile_px=256, topo_amplitude=0.0, seed=17)
    )


class TestBrennerScore:
    def test_constant_frame_zero(self):
        assert brenner_score(np.full((8, 32), 2.0)) == 0.0

    def test_dc_offset_invariant(self, rng):
        img = rng.random((16, 64))
        assert brenner_score(img + 5.0) == pytest.approx(
            brenner_score(img), rel=1e-9
        )

    def test_matches_direct_loops(self, rng):
        img = rng.random((12, 30))
        assert brenner_score(img) == pytest.approx(brenner_direct(img), rel=1e-12)

    def test_sharper_scores_higher(self, flat256):
        frames = render_kohler_stack(
            flat256, (0, 0), z_center=0.0, n=9, step=0.5, noise_sigma=0.0
        )
        by_z = {round(f.z_stage, 1): brenner_score(f) for f in frames}
        assert by_z[0.0] > by_z[2.0]

    def test_too_few_columns(self):
        with pytest.raises(ValueError):
            brenner_score(np.ones((4, 2)))


class TestFindFocusBrenner:
    def test_centered_stack_picks_middle(self, flat256):
        res = find_focus_brenner(flat256, (0, 0), z_center=0.0, noise_sigma=0.0)
        assert res.z_best == 0.0
        assert len(res.scores) == 11

    def test_offset_ground_truth(self):
        model = generate_slide(
            SlideSpec(rows=1, cols=1, tile_px=256, topo_amplitude=0.0,
                      z_base=0.7, seed=23)
        )
        res = find_focus_brenner(model, (0, 0), z_center=0.0)
        assert res.z_best == pytest.approx(0.5)
        assert res.z_best_refined == pytest.approx(0.7, abs=0.25)
        assert res.refined

    def test_unrefined_error_bounded_by_half_step(self):
        for z_true in (-1.3, -0.2, 0.45, 1.8):
            model = generate_slide(
                SlideSpec(rows=1, cols=1, tile_px=256, topo_amplitude=0.0,
                          z_base=z_true, seed=29)
            )
            res = find_focus_brenner(
                model, (0, 0), z_center=0.0, refine=False, noise_sigma=0.0
            )
            assert abs(res.z_best - z_true) <= 0.25 + 1e-9

    def test_unimodal_scores(self, flat256):
        res = find_focus_brenner(flat256, (0, 1), z_center=0.0, noise_sigma=0.0)
        scores = [s for _, s in res.scores]
        k = int(np.argmax(scores))
        assert all(a < b for a, b in zip(scores[:k], scores[1 : k + 1]))
        assert all(a > b for a, b in zip(scores[k:], scores[k + 1 :]))

    def test_z_best_within_range(self, flat256):
        res = find_focus_brenner(flat256, (0, 0), z_center=2.0)
        zs = [z for z, _ in res.scores]
        assert min(zs) <= res.z_best <= max(zs)
        assert min(zs) <= res.z_best_refined <= max(zs)


def test_oracle_csv_layout(flat256):
    res = find_focus_brenner(flat256, (0, 0), z_center=0.0)
    text = oracle_csv_rows({(0, 0): res})
    lines = text.strip().split("\n")
    assert lines[0] == "row,col,z_best,z_best_refined"
    assert lines[1].startswith("0,0,")
