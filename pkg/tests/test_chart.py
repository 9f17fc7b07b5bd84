"""Canonical frames, chart construction and chart serialization order."""

from dataclasses import replace

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from c2lt3d.core.chart import (
    Chart,
    build_chart,
    canonical_frame,
    chart_pose,
    morton_code,
    place_back,
    select_anchors,
    serialization_order,
)
from c2lt3d.core.geometry import is_rotation
from c2lt3d.preprocessing.surface import SurfaceObject, fps_sample
from c2lt3d.utils.errors import DataError

Z = [0.0, 0.0, 1.0]


def _ring_object(radius=0.1, count=8, offset=(0.0, 0.0, 0.0)):
    """Anchor at ``offset`` with ``count`` neighbours on a horizontal ring."""
    t = 2.0 * np.pi * np.arange(count) / count
    ring = np.column_stack([radius * np.cos(t), radius * np.sin(t), np.zeros(count)])
    points = np.vstack([[0.0, 0.0, 0.0], ring]) + np.asarray(offset)
    return SurfaceObject(points, np.tile(Z, (count + 1, 1)), np.zeros(count + 1, dtype=np.int64))


# -- frames --------------------------------------------------------------------------


def test_frame_is_identity_for_aligned_normal_and_reference():
    np.testing.assert_allclose(canonical_frame(Z, np.zeros((1, 3)), (1.0, 0.0, 0.0)), np.eye(3), atol=1e-12)


def test_degenerate_reference_uses_principal_direction():
    points = np.column_stack([np.linspace(-1.0, 1.0, 11), np.zeros(11), np.zeros(11)])
    frame = canonical_frame(Z, points, reference=Z)
    np.testing.assert_allclose(frame, np.eye(3), atol=1e-12)


def test_isotropic_fallback_skips_axis_parallel_to_normal():
    frame = canonical_frame([1.0, 0.0, 0.0], np.zeros((1, 3)), reference=(1.0, 0.0, 0.0))
    np.testing.assert_allclose(frame[:, 0], [0.0, 1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(frame[:, 2], [1.0, 0.0, 0.0], atol=1e-12)
    assert is_rotation(frame)


@pytest.mark.parametrize("seed", range(10))
def test_frame_is_a_right_handed_rotation_with_normal_as_z(seed):
    rng = np.random.default_rng(seed)
    normal = rng.normal(size=3)
    normal /= np.linalg.norm(normal)
    frame = canonical_frame(normal, rng.normal(size=(20, 3)))
    assert is_rotation(frame, tol=1e-9)
    np.testing.assert_allclose(frame[:, 2], normal, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_frame_rotates_with_its_inputs(seed):
    rng = np.random.default_rng(seed)
    q = Rotation.random(random_state=seed).as_matrix()
    normal = rng.normal(size=3)
    normal /= np.linalg.norm(normal)
    points = rng.normal(size=(15, 3))
    reference = rng.normal(size=3)
    frame = canonical_frame(normal, points, reference)
    rotated = canonical_frame(q @ normal, points @ q.T, q @ reference)
    np.testing.assert_allclose(rotated, q @ frame, atol=1e-6)


def test_principal_axis_frame_rotates_with_skewed_points():
    q = Rotation.from_rotvec([0.3, -0.2, 0.9]).as_matrix()
    points = np.array([[0.0, 0, 0], [0.1, 0, 0], [0.2, 0, 0], [1.0, 0, 0], [0.05, 0.02, 0]])
    frame = canonical_frame(Z, points, reference=Z)
    rotated = canonical_frame(q @ np.asarray(Z), points @ q.T, q @ np.asarray(Z))
    np.testing.assert_allclose(rotated, q @ frame, atol=1e-6)


# -- charts --------------------------------------------------------------------------


def test_ring_chart_has_unit_radius():
    chart = build_chart(_ring_object(), 0, radius=0.15)
    assert chart.scale == pytest.approx(0.1)
    np.testing.assert_allclose(np.linalg.norm(chart.local_points, axis=1), 1.0)
    np.testing.assert_allclose(chart.local_points[:, 2], 0.0, atol=1e-12)
    np.testing.assert_allclose(chart.frame, np.eye(3), atol=1e-12)
    assert chart.neighbor_ids.tolist() == list(range(1, 9))


def test_single_neighbor_sets_the_scale():
    obj = SurfaceObject([[0.0, 0.0, 0.0], [0.3, 0.0, 0.0]], np.tile(Z, (2, 1)), [0, 0])
    chart = build_chart(obj, 0, radius=0.01, min_neighbors=1)
    assert chart.scale == pytest.approx(0.3)
    np.testing.assert_allclose(np.linalg.norm(chart.local_points, axis=1), [1.0])


def test_lone_point_is_an_empty_chart():
    obj = SurfaceObject([[0.0, 0.0, 0.0]], [Z], [0])
    with pytest.raises(DataError, match="empty chart"):
        build_chart(obj, 0)


def test_out_of_range_anchor():
    with pytest.raises(DataError):
        build_chart(_ring_object(), 99)


def test_place_back_inverts_the_chart():
    obj = _ring_object(offset=(0.2, -0.1, 0.3))
    chart = build_chart(obj, 0)
    np.testing.assert_allclose(place_back(chart, chart.local_points), obj.points[chart.neighbor_ids], atol=1e-9)
    np.testing.assert_allclose(place_back(chart, np.zeros(3)), chart.anchor)
    np.testing.assert_allclose(chart_pose(chart).apply(chart.local_points), obj.points[chart.neighbor_ids], atol=1e-9)


def test_place_back_example():
    chart = replace(build_chart(_ring_object(), 0), anchor=np.array([1.0, 0.0, 0.0]), scale=2.0, frame=np.eye(3))
    np.testing.assert_allclose(place_back(chart, [0.0, 0.0, 1.0]), [1.0, 0.0, 2.0])


def test_chart_is_translation_invariant_and_scale_covariant():
    base = build_chart(_ring_object(), 0, radius=0.5)
    moved = build_chart(_ring_object(offset=(0.4, 0.1, -0.2)), 0, radius=0.5)
    shrunk = build_chart(_ring_object(radius=0.05), 0, radius=0.5)
    np.testing.assert_allclose(moved.local_points, base.local_points, atol=1e-9)
    np.testing.assert_allclose(shrunk.local_points, base.local_points, atol=1e-9)
    assert shrunk.scale == pytest.approx(0.5 * base.scale)


def test_tower_charts_stay_in_their_component(tower_record):
    obj = tower_record.obj
    for chart in tower_record.charts:
        assert np.all(obj.component[chart.neighbor_ids] == chart.component_id)
        assert obj.component[chart.anchor_id] == chart.component_id
        assert chart.anchor_id not in chart.neighbor_ids.tolist()


def test_tower_charts_are_canonical(tower_record):
    for chart in tower_record.charts:
        assert is_rotation(chart.frame, tol=1e-9)
        np.testing.assert_allclose(chart.frame[:, 2], chart.normal, atol=1e-9)
        assert np.linalg.norm(chart.local_points, axis=1).max() == pytest.approx(1.0)
        assert chart.token is not None


def test_chart_dict_round_trip(tower_record):
    chart = tower_record.charts[0]
    again = Chart.from_dict(chart.to_dict(), tower_record.obj)
    assert again.to_dict() == chart.to_dict()
    np.testing.assert_allclose(again.local_points, chart.local_points, atol=1e-12)


def test_select_anchors_appends_unseen_hints(tower_record):
    obj = tower_record.obj
    first = int(fps_sample(obj, 0, 1)[0])
    extra = int(obj.component_ids(1)[-1])
    sampled = [int(i) for c in range(obj.n_components) for i in fps_sample(obj, c, 2)]
    anchors = select_anchors(obj, 2, hints=[first, extra, extra])
    assert anchors[: len(sampled)] == sampled
    assert len(anchors) == len(sampled) + (0 if extra in sampled else 1)
    assert len(set(anchors)) == len(anchors)


# -- serialization order -------------------------------------------------------------


def test_morton_code_corners():
    assert morton_code([-1.0, -1.0, -1.0]) == 0
    assert morton_code([1.0, 1.0, 1.0]) == 2**30 - 1
    assert morton_code([1.0, -1.0, -1.0]) == (8**10 - 1) // 7
    assert morton_code([-1.0, 1.0, -1.0]) == 2 * (8**10 - 1) // 7


def test_serialization_is_partition_major(make_chart):
    anchors = [[0.5, 0.5, 0.5], [-0.5, -0.5, -0.5], [-0.9, 0.0, 0.0], [0.9, 0.9, 0.9]]
    parts = [1, 0, 1, 0]
    charts = [make_chart(i, a, partition=p) for i, (a, p) in enumerate(zip(anchors, parts))]
    order = serialization_order(charts)
    keys = [(charts[i].partition_id, morton_code(charts[i].anchor)) for i in order]
    assert keys == sorted(keys)
    assert [charts[i].partition_id for i in order] == [0, 0, 1, 1]
