import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from duofocus import (
    CaptureRequest,
    DefocusGeometry,
    DegenerateFrameError,
    SlideSpec,
    autocorrelate_1d,
    estimate_shift,
    find_separation,
    generate_slide,
    render_dual_led,
    separation_from_defocus,
)

from .oracles import brute_autocorr, exhaustive_peak


def _two_copy_frame(shift_px, rows=32, cols=256, seed=0, texture_smooth=2.0):
    """Noiseless exact two-copy frame with copies at +-shift_px/2."""
    model = generate_slide(
        SlideSpec(rows=1, cols=1, tile_px=cols, topo_amplitude=0.0,
                  texture_smooth_px=texture_smooth, seed=seed)
    )
    tex = model.texture_tile(0, 0)[:rows, :]
    spectrum = np.fft.rfft(tex, axis=1)
    fx = np.fft.rfftfreq(cols)[None, :]
    out = np.fft.irfft(spectrum * np.cos(np.pi * fx * shift_px), n=cols, axis=1)
    return np.clip(out, 0.0, None)


class TestAutocorrelate1d:
    def test_cosine_profile(self):
        # a cosine along x autocorrelates to a cosine of the same period
        x = np.arange(256)
        frame = 1.0 + 0.5 * np.cos(2 * np.pi * x / 32.0)
        frame = np.tile(frame, (8, 1))
        prof = autocorrelate_1d(frame)
        expected = np.cos(2 * np.pi * prof.lags / 32.0)
        np.testing.assert_allclose(prof.values, expected, atol=1e-9)
        assert prof.value_at(0) == pytest.approx(1.0)

    def test_copies_make_first_order_peaks(self):
        frame = _two_copy_frame(40.0)
        prof = autocorrelate_1d(frame)
        half = prof.tile_px // 2
        for lag in (40, -40):
            i = lag + half
            assert prof.values[i] > prof.values[i - 2]
            assert prof.values[i] > prof.values[i + 2]

    def test_matches_bruteforce_oracle(self, rng):
        frame = rng.random((32, 128))
        prof = autocorrelate_1d(frame)
        ref = brute_autocorr(frame)
        np.testing.assert_allclose(prof.values, ref, rtol=1e-8, atol=1e-12)

    def test_symmetry(self, rng):
        frame = rng.random((16, 200))
        prof = autocorrelate_1d(frame)
        half = prof.tile_px // 2
        for lag in range(1, half):
            assert prof.values[half + lag] == pytest.approx(
                prof.values[half - lag], abs=1e-9
            )

    def test_zero_lag_maximal(self, rng):
        frame = rng.random((16, 160))
        prof = autocorrelate_1d(frame)
        assert np.argmax(prof.values) == prof.tile_px // 2

    def test_constant_frame_degenerate(self):
        with pytest.raises(DegenerateFrameError):
            autocorrelate_1d(np.full((8, 128), 3.3))

    def test_too_small_frame(self):
        with pytest.raises(ValueError):
            autocorrelate_1d(np.random.default_rng(0).random((1, 128)))
        with pytest.raises(ValueError):
            autocorrelate_1d(np.random.default_rng(0).random((8, 64)))


class TestFindSeparation:
    def test_exact_copies_at_40(self):
        prof = autocorrelate_1d(_two_copy_frame(40.0))
        est = find_separation(prof, (10, 120))
        assert est.accepted
        assert est.separation_px == pytest.approx(40.0, abs=0.05)

    def test_matches_exhaustive_oracle(self):
        for sep, seed in ((20.0, 1), (40.5, 2), (97.25, 3)):
            frame = _two_copy_frame(sep, cols=512, seed=seed)
            prof = autocorrelate_1d(frame)
            est = find_separation(prof, (10, 250))
            ref = exhaustive_peak(prof.values[prof.tile_px // 2 :],
                                  np.arange(prof.tile_px // 2), 10, 250)
            assert est.separation_px == pytest.approx(ref, abs=0.05)

    def test_no_peak_rejected(self):
        # in-focus frame: copies coincide, nothing in the window
        frame = _two_copy_frame(0.0)
        est = estimate_shift(frame, (30, 120))
        assert not est.accepted

    def test_white_noise_rejected_monte_carlo(self):
        rejected = 0
        for seed in range(100):
            frame = np.random.default_rng(seed).random((64, 384))
            est = estimate_shift(frame, (49.5, 168.6))
            rejected += not est.accepted
        assert rejected >= 99

    def test_window_validation(self):
        prof = autocorrelate_1d(_two_copy_frame(40.0))
        with pytest.raises(ValueError):
            find_separation(prof, (0.0, 50.0))
        with pytest.raises(ValueError):
            find_separation(prof, (50.0, 20.0))
        with pytest.raises(ValueError):
            find_separation(prof, (10.0, 500.0))

    def test_peak_on_window_edge_rejected(self):
        prof = autocorrelate_1d(_two_copy_frame(40.0))
        est = find_separation(prof, (40.0, 80.0))
        assert not est.accepted

    def test_quality_nonnegative(self, rng):
        prof = autocorrelate_1d(rng.random((32, 256)))
        est = find_separation(prof, (20, 100))
        assert est.quality >= 0.0


class TestEstimateShift:
    def test_static_default_geometry(self, geom, flat_model):
        req = CaptureRequest(tile=(0, 0), z_stage=60.0, noise_sigma=0.01, seed=8)
        frame = render_dual_led(flat_model, geom, req)
        est = estimate_shift(frame, (49.5, 168.6))
        expected = separation_from_defocus(geom, 60.0)
        assert est.accepted
        assert est.separation_px == pytest.approx(expected, abs=0.5)

    def test_y_blur_barely_moves_separation(self, geom, flat_model):
        static = render_dual_led(
            flat_model,
            geom,
            CaptureRequest(tile=(0, 0), z_stage=60.0, noise_sigma=0.0),
        )
        blurred = render_dual_led(
            flat_model,
            geom,
            CaptureRequest(
                tile=(0, 0), z_stage=60.0, blur_px=110.0, scan_axis="y",
                noise_sigma=0.0,
            ),
        )
        s0 = estimate_shift(static.pixels, (49.5, 168.6))
        s1 = estimate_shift(blurred.pixels, (49.5, 168.6))
        assert abs(s1.separation_px - s0.separation_px) <= 0.2

    def test_blur_series_stays_within_02px(self, geom, flat_model):
        # noiseless renders across all nominal blur lengths along y
        seps = []
        for blur in (0, 50, 90, 110):
            frame = render_dual_led(
                flat_model,
                geom,
                CaptureRequest(
                    tile=(0, 0), z_stage=57.0, blur_px=float(blur),
                    scan_axis="y", noise_sigma=0.0,
                ),
            )
            seps.append(estimate_shift(frame.pixels, (49.5, 168.6)).separation_px)
        assert max(seps) - min(seps) <= 0.2

    def test_x_blur_destroys_estimate(self, geom, flat_model):
        static = render_dual_led(
            flat_model,
            geom,
            CaptureRequest(tile=(0, 0), z_stage=60.0, noise_sigma=0.0),
        )
        blurred = render_dual_led(
            flat_model,
            geom,
            CaptureRequest(
                tile=(0, 0), z_stage=60.0, blur_px=30.0, scan_axis="x",
                noise_sigma=0.0,
            ),
        )
        s0 = estimate_shift(static.pixels, (49.5, 168.6))
        s1 = estimate_shift(blurred.pixels, (49.5, 168.6))
        assert (not s1.accepted) or abs(
            s1.separation_px - s0.separation_px
        ) > 1.0

    def test_translation_invariance(self, geom, flat_model):
        frame = render_dual_led(
            flat_model,
            geom,
            CaptureRequest(tile=(0, 0), z_stage=60.0, noise_sigma=0.0),
        )
        base = estimate_shift(frame.pixels, (49.5, 168.6)).separation_px
        for shift, axis in ((17, 1), (23, 0)):
            rolled = np.roll(frame.pixels, shift, axis=axis)
            got = estimate_shift(rolled, (49.5, 168.6)).separation_px
            assert abs(got - base) <= 0.05

    @given(scale=st.floats(min_value=1e-3, max_value=1e3))
    @settings(max_examples=20, deadline=None)
    def test_intensity_scale_invariance(self, scale):
        frame = _two_copy_frame(44.0, rows=16, cols=256, seed=5)
        a = estimate_shift(frame, (20, 100))
        b = estimate_shift(frame * scale, (20, 100))
        assert a.accepted == b.accepted
        assert a.separation_px == pytest.approx(b.separation_px, abs=1e-9)
