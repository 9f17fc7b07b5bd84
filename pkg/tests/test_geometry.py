"""Pose algebra and exact nearest-neighbour queries.

Every downstream metric trusts ``NNIndex`` to return the same distance and the
same (lowest) index as the exhaustive scan, ties included, so the index is
checked against the brute-force reference on random, lattice and duplicated
point sets.
"""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from c2lt3d.core.geometry import (
    NNIndex,
    Pose,
    brute_force_nearest,
    compose,
    is_rotation,
    nearest,
    point_set_distances,
    relative_pose,
    rotation_from_rotvec,
    rotvec_from_matrix,
)
from c2lt3d.utils.errors import DataError


def _random_pose(rng):
    rotation = Rotation.random(random_state=int(rng.integers(2**31))).as_matrix()
    return Pose(rotation, rng.normal(size=3), float(rng.uniform(0.2, 3.0)))


def test_identity_is_neutral():
    rng = np.random.default_rng(0)
    p = _random_pose(rng)
    assert compose(Pose.identity(), p).allclose(p)
    assert compose(p, Pose.identity()).allclose(p)


def test_compose_rotation_after_translation():
    quarter = Pose(rotation_from_rotvec([0.0, 0.0, np.pi / 2]))
    shift = Pose(translation=[1.0, 0.0, 0.0])
    out = compose(quarter, shift)
    np.testing.assert_allclose(out.rotation, quarter.rotation, atol=1e-12)
    np.testing.assert_allclose(out.translation, [0.0, 1.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_compose_is_associative(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (_random_pose(rng) for _ in range(3))
    assert compose(compose(a, b), c).allclose(compose(a, compose(b, c)), atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_inverse_and_relative_pose(seed):
    rng = np.random.default_rng(seed)
    source, dest = _random_pose(rng), _random_pose(rng)
    assert compose(source, source.inverse()).allclose(Pose.identity(), atol=1e-9)
    assert compose(source, relative_pose(source, dest)).allclose(dest, atol=1e-9)


def test_apply_matches_composition():
    rng = np.random.default_rng(3)
    a, b = _random_pose(rng), _random_pose(rng)
    x = rng.normal(size=(5, 3))
    np.testing.assert_allclose(compose(a, b).apply(x), a.apply(b.apply(x)), atol=1e-9)


def test_rotvec_round_trip_and_rotation_check():
    r = rotation_from_rotvec([0.1, -0.4, 0.7])
    assert is_rotation(r)
    np.testing.assert_allclose(rotation_from_rotvec(rotvec_from_matrix(r)), r, atol=1e-12)
    assert not is_rotation(np.diag([1.0, 1.0, -1.0]))


def test_pose_rejects_bad_scale():
    with pytest.raises(DataError):
        Pose(scale=0.0)


def test_pose_dict_round_trip():
    p = _random_pose(np.random.default_rng(7))
    assert Pose.from_dict(p.to_dict()).allclose(p, atol=0.0)


# -- nearest neighbours --------------------------------------------------------------


def test_nearest_examples():
    index = NNIndex([[0.0, 0.0, 0.0]])
    assert nearest(index, [1.0, 0.0, 0.0]) == (1.0, 0)
    assert nearest(index, [0.0, 0.0, 0.0]) == (0.0, 0)


def test_empty_index_is_a_data_error():
    with pytest.raises(DataError, match="empty point set"):
        nearest(NNIndex(np.zeros((0, 3))), [0.0, 0.0, 0.0])
    with pytest.raises(DataError, match="empty point set"):
        brute_force_nearest(np.zeros((0, 3)), [[0.0, 0.0, 0.0]])


def test_tie_goes_to_lowest_index():
    points = [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
    assert nearest(NNIndex(points), [0.0, 0.0, 0.0]) == (1.0, 0)


def test_many_duplicates_beyond_candidate_count():
    far = np.full((5, 3), 5.0)
    copies = np.tile([1.0, 0.0, 0.0], (20, 1))
    points = np.vstack([far, copies, [[0.0, 1.0, 1.0]]])
    dist, idx = NNIndex(points).query([[0.0, 0.0, 0.0]])
    assert dist[0] == 1.0
    assert idx[0] == 5


@pytest.mark.parametrize("seed", range(5))
def test_index_matches_brute_force_on_random_points(seed):
    rng = np.random.default_rng(seed)
    points = rng.uniform(-1.0, 1.0, (1000, 3))
    queries = rng.uniform(-1.0, 1.0, (100, 3))
    d_index, i_index = NNIndex(points).query(queries)
    d_brute, i_brute = brute_force_nearest(points, queries)
    assert np.array_equal(d_index, d_brute)
    assert np.array_equal(i_index, i_brute)


def test_index_matches_brute_force_on_a_lattice():
    # Half-integer queries sit equidistant from up to eight lattice points.
    g = np.arange(-3, 4, dtype=np.float64)
    points = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    queries = np.stack(np.meshgrid(g[:-1] + 0.5, g[:-1] + 0.5, g[:-1], indexing="ij"), axis=-1).reshape(-1, 3)
    d_index, i_index = NNIndex(points).query(queries)
    d_brute, i_brute = brute_force_nearest(points, queries)
    assert np.array_equal(d_index, d_brute)
    assert np.array_equal(i_index, i_brute)


def test_within_and_k_nearest():
    points = np.array([[0.0, 0, 0], [0.1, 0, 0], [0.2, 0, 0], [0.1, 0, 0], [1.0, 0, 0]])
    index = NNIndex(points)
    assert index.within([0.0, 0.0, 0.0], 0.15).tolist() == [0, 1, 3]
    assert index.k_nearest([0.0, 0.0, 0.0], 3).tolist() == [0, 1, 3]


def test_point_set_backends_agree_and_reject_unknown():
    rng = np.random.default_rng(11)
    a, b = rng.normal(size=(50, 3)), rng.normal(size=(70, 3))
    assert np.array_equal(point_set_distances(a, b, "index"), point_set_distances(a, b, "brute"))
    with pytest.raises(DataError):
        point_set_distances(a, b, "octree")


def test_non_finite_points_are_rejected():
    with pytest.raises(DataError):
        NNIndex([[0.0, np.nan, 0.0]])
