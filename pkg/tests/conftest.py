"""Shared pytest fixtures."""

import numpy as np
import pytest

from c2lt3d.core.chart import Chart
from c2lt3d.core.geometry import Pose
from c2lt3d.core.tokenizer import TokenPair
from c2lt3d.preprocessing.synth import generate
from c2lt3d.runners.pipeline import preprocess_object
from tests.cases import SMALL_TABLE, SMALL_TOWER, make_config


@pytest.fixture
def config():
    return make_config()


@pytest.fixture(scope="session")
def tower_record():
    """The two-box tower, preprocessed once per session. Tests must not mutate it."""
    case = dict(SMALL_TOWER)
    record = generate(case["index"], case["seed"], case["density"])
    return preprocess_object((case["index"], record), make_config())


@pytest.fixture(scope="session")
def table_record():
    case = dict(SMALL_TABLE)
    record = generate(case["index"], case["seed"], case["density"])
    return preprocess_object((case["index"], record), make_config())


@pytest.fixture
def make_chart():
    """Factory for hand-placed charts with an identity frame."""

    def _make(chart_id, anchor, *, component=0, partition=0, scale=0.05, frame=None, local=None):
        anchor = np.asarray(anchor, dtype=np.float64)
        frame = np.eye(3) if frame is None else np.asarray(frame, dtype=np.float64)
        local = np.zeros((1, 3)) if local is None else np.asarray(local, dtype=np.float64)
        normals = np.tile([0.0, 0.0, 1.0], (len(local), 1))
        return Chart(
            chart_id=chart_id,
            anchor_id=chart_id,
            anchor=anchor,
            normal=frame[:, 2].copy(),
            scale=float(scale),
            frame=frame,
            partition_id=partition,
            component_id=component,
            neighbor_ids=np.arange(len(local)),
            local_points=local,
            local_normals=normals,
            pose_residual=np.zeros(6),
            token=TokenPair((3,) * 6, (3,) * 4),
        )

    return _make


@pytest.fixture
def pose_of():
    def _pose(rotation=None, translation=(0.0, 0.0, 0.0), scale=1.0):
        rotation = np.eye(3) if rotation is None else rotation
        return Pose(np.asarray(rotation, float), np.asarray(translation, float), float(scale))

    return _pose
