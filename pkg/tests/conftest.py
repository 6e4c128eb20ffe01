import numpy as np
import pytest

from duofocus import (
    DefocusGeometry,
    SlideSpec,
    generate_slide,
    run_calibration,
)

# 384-px tiles keep unit tests fast while still fitting the full detection
# range inside the lag window (S(90) + margin < 190 lags).
TEST_TILE_PX = 384


@pytest.fixture(scope="session")
def geom():
    return DefocusGeometry()


@pytest.fixture(scope="session")
def flat_model():
    return generate_slide(
        SlideSpec(rows=1, cols=1, tile_px=TEST_TILE_PX, topo_amplitude=0.0, seed=3)
    )


@pytest.fixture(scope="session")
def small_model():
    return generate_slide(SlideSpec(rows=4, cols=4, tile_px=TEST_TILE_PX, seed=7))


@pytest.fixture(scope="session")
def curve(flat_model, geom):
    return run_calibration(
        flat_model, geom, (30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0), seed=11
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
