import pytest

from planwatch import DetectorConfig, Pose2D, path_from_xy


@pytest.fixture
def straight_ref():
    return path_from_xy([(0.0, 0.0), (300.0, 0.0)])


@pytest.fixture
def cfg():
    return DetectorConfig()


@pytest.fixture
def small_cfg():
    # short horizon keeps hand-built trajectories small
    return DetectorConfig(horizon=8.0, n_points=5)


def poses_from_xy(pairs):
    return [Pose2D(float(x), float(y)) for x, y in pairs]
