import json

import numpy as np
import pytest

from duofocus import (
    ConfigurationError,
    FillError,
    FocusMap,
    SlideSpec,
    SurveyConfig,
    SurveyError,
    fill_missing,
    generate_slide,
    survey,
    verify_acquisition,
)
from duofocus.survey import (
    SOURCE_INTERPOLATED,
    SOURCE_MEASURED,
    SOURCE_MISSING,
    serpentine_order,
)

TILE = 384


def _flat(z=0.0, rows=2, cols=3, seed=13):
    return generate_slide(
        SlideSpec(rows=rows, cols=cols, tile_px=TILE, topo_amplitude=0.0,
                  z_base=z, seed=seed)
    )


def _map(z, quality=None, source=None, oor=None):
    z = np.asarray(z, dtype=float)
    return FocusMap(
        z_focus=z,
        quality=np.ones_like(z) if quality is None else np.asarray(quality, float),
        source=(
            np.full(z.shape, SOURCE_MEASURED, dtype=np.int8)
            if source is None
            else np.asarray(source, dtype=np.int8)
        ),
        out_of_range=(
            np.zeros(z.shape, dtype=bool) if oor is None else np.asarray(oor, bool)
        ),
    )


class TestConfigValidation:
    def test_x_scan_with_blur_rejected(self):
        cfg = SurveyConfig(scan_axis="x", blur_px=110.0)
        with pytest.raises(ConfigurationError):
            cfg.validate()

    def test_x_scan_with_override(self):
        SurveyConfig(scan_axis="x", blur_px=110.0, allow_degraded=True).validate()

    def test_x_scan_static_allowed(self):
        SurveyConfig(scan_axis="x", blur_px=0.0).validate()

    def test_bad_axis(self):
        with pytest.raises(ConfigurationError):
            SurveyConfig(scan_axis="z").validate()

    def test_roundtrip(self):
        cfg = SurveyConfig(blur_px=50.0, seed=4)
        back = SurveyConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert back == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigurationError):
            SurveyConfig.from_dict({"blur": 3})


class TestSerpentine:
    def test_order(self):
        assert serpentine_order(2, 3) == [
            (0, 0), (0, 1), (0, 2), (1, 2), (1, 1), (1, 0),
        ]


class TestSurvey:
    def test_flat_noiseless_static(self, geom, curve):
        model = _flat()
        cfg = SurveyConfig(noise_sigma=0.0, seed=1)
        fmap = survey(model, geom, curve, cfg)
        assert np.all(np.abs(fmap.z_focus) <= 0.05)
        assert np.all(fmap.source == SOURCE_MEASURED)

    def test_single_axial_move(self, geom, curve):
        fmap = survey(_flat(), geom, curve, SurveyConfig(seed=2))
        log = fmap.metadata["stage_log"]
        assert log["z_moves"] == 1
        assert log["z_positions"] == [60.0]

    def test_deterministic_serialization(self, geom, curve, small_model):
        cfg = SurveyConfig(seed=5)
        a = survey(small_model, geom, curve, cfg)
        b = survey(small_model, geom, curve, cfg)
        assert a.to_csv_text() == b.to_csv_text()
        assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(
            b.to_dict(), sort_keys=True
        )

    def test_worker_count_does_not_change_result(self, geom, curve, small_model):
        cfg = SurveyConfig(seed=5)
        serial = survey(small_model, geom, curve, cfg, workers=1)
        parallel = survey(small_model, geom, curve, cfg, workers=2)
        assert serial.to_csv_text() == parallel.to_csv_text()

    def test_skip_pattern(self, geom, curve, small_model):
        cfg = SurveyConfig(seed=6, skip_every=4)
        fmap = survey(small_model, geom, curve, cfg)
        measured = int(np.sum(fmap.source == SOURCE_MEASURED))
        assert measured == 4  # 16 tiles, every 4th visited
        assert int(np.sum(fmap.source == SOURCE_INTERPOLATED)) == 12
        assert fmap.n_missing() == 0

    def test_all_rejected_raises(self, geom, curve, small_model):
        cfg = SurveyConfig(seed=7, quality_threshold=1e15, min_peak_height=1e15)
        with pytest.raises(SurveyError) as err:
            survey(small_model, geom, curve, cfg)
        assert err.value.partial_map is not None
        assert err.value.partial_map.n_missing() == 16

    def test_out_of_range_tile_flagged_and_filled(self, geom, curve):
        # one plane 10 um beyond the detection edge: every tile reads out of
        # range, so surveying must fail the rejection budget
        model = _flat(z=40.0)
        with pytest.raises(SurveyError):
            survey(model, geom, curve, SurveyConfig(seed=8, range_tolerance_um=0.5))

    def test_metadata_carries_calibration_id(self, geom, curve, small_model):
        fmap = survey(small_model, geom, curve, SurveyConfig(seed=9))
        assert fmap.metadata["calibration_id"] == curve.curve_id()

    def test_map_json_roundtrip(self, geom, curve, small_model):
        fmap = survey(small_model, geom, curve, SurveyConfig(seed=10))
        back = FocusMap.from_dict(json.loads(json.dumps(fmap.to_dict())))
        np.testing.assert_allclose(back.z_focus, fmap.z_focus, rtol=1e-12)
        assert np.array_equal(back.source, fmap.source)


class TestFillMissing:
    def test_identity_when_complete(self):
        fmap = _map([[1.0, 2.0], [3.0, 4.0]])
        assert fill_missing(fmap) is fmap

    def test_constant_neighborhood(self):
        z = [[1.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 1.0]]
        src = np.full((3, 3), SOURCE_MEASURED, dtype=np.int8)
        src[1, 1] = SOURCE_MISSING
        filled = fill_missing(_map(z, source=src))
        assert filled.z_focus[1, 1] == pytest.approx(1.0)
        assert filled.source[1, 1] == SOURCE_INTERPOLATED

    def test_symmetric_pair(self):
        z = [[0.0, 5.0, 2.0]]
        src = np.array([[SOURCE_MEASURED, SOURCE_MISSING, SOURCE_MEASURED]],
                       dtype=np.int8)
        filled = fill_missing(_map(z, source=src))
        assert filled.z_focus[0, 1] == pytest.approx(1.0)

    def test_quality_weighting(self):
        z = [[0.0, 5.0, 2.0]]
        src = np.array([[SOURCE_MEASURED, SOURCE_MISSING, SOURCE_MEASURED]],
                       dtype=np.int8)
        q = [[3.0, 0.0, 1.0]]
        filled = fill_missing(_map(z, quality=q, source=src))
        assert filled.z_focus[0, 1] == pytest.approx(0.5)

    def test_bounds_invariant(self, rng):
        z = rng.uniform(-5, 5, size=(6, 6))
        src = np.full((6, 6), SOURCE_MEASURED, dtype=np.int8)
        src[rng.random((6, 6)) < 0.3] = SOURCE_MISSING
        src[0, 0] = SOURCE_MEASURED
        q = rng.uniform(0.5, 50.0, size=(6, 6))
        filled = fill_missing(_map(z, quality=q, source=src))
        measured = src == SOURCE_MEASURED
        lo, hi = z[measured].min(), z[measured].max()
        assert np.all(filled.z_focus >= lo - 1e-12)
        assert np.all(filled.z_focus <= hi + 1e-12)

    def test_measured_untouched(self):
        z = [[1.0, 0.0], [2.0, 3.0]]
        src = np.array(
            [[SOURCE_MEASURED, SOURCE_MISSING],
             [SOURCE_MEASURED, SOURCE_MEASURED]],
            dtype=np.int8,
        )
        filled = fill_missing(_map(z, source=src))
        assert filled.z_focus[0, 0] == 1.0
        assert filled.z_focus[1, 0] == 2.0
        assert filled.z_focus[1, 1] == 3.0

    def test_nothing_measured(self):
        src = np.full((2, 2), SOURCE_MISSING, dtype=np.int8)
        with pytest.raises(FillError):
            fill_missing(_map(np.zeros((2, 2)), source=src))


class TestVerifyAcquisition:
    def test_perfect_map(self):
        model = _flat(rows=2, cols=2)
        fmap = _map(np.zeros((2, 2)))
        rep = verify_acquisition(model, fmap)
        assert rep.mean_abs_error_um == 0.0
        assert rep.frac_within_dof == 1.0
        assert rep.frac_within_half_um == 1.0

    def test_rejects_incomplete_map(self):
        model = _flat(rows=1, cols=2)
        src = np.array([[SOURCE_MEASURED, SOURCE_MISSING]], dtype=np.int8)
        fmap = _map(np.zeros((1, 2)), source=src)
        with pytest.raises(ValueError):
            verify_acquisition(model, fmap)

    def test_derived_speed(self):
        model = _flat(rows=1, cols=1)
        fmap = _map(np.zeros((1, 1)))
        fmap.metadata["config"] = {"blur_px": 110.0}
        rep = verify_acquisition(model, fmap)
        # 110 px * 0.275 um/px over 1 ms
        assert rep.derived_speed_mm_s == pytest.approx(30.25)

    def test_report_json_serializable(self, geom, curve):
        model = _flat()
        fmap = survey(model, geom, curve, SurveyConfig(seed=11))
        rep = verify_acquisition(model, fmap)
        blob = json.dumps(rep.to_dict())
        assert "mean_abs_error_um" in blob
