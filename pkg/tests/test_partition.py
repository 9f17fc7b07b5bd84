"""Partition hints and partition noise.

Hints must recover well-separated parts exactly, respect the size bounds, and be
a pure function of the points. The noise injectors feed the robustness study and
must be seeded and leave their input untouched.
"""

import numpy as np
import pytest

from c2lt3d.preprocessing.partition import (
    Partition,
    inject_noise,
    median_bisect,
    partition_hints,
    relabel_by_first_point,
)
from c2lt3d.preprocessing.surface import normalize
from c2lt3d.preprocessing.synth import AssemblySpec, build_assembly
from c2lt3d.utils.errors import ConfigError, DataError
from c2lt3d.utils.primitives import sample_box

H = 0.05


def _cube(x0, side=0.5):
    return sample_box([x0, 0.0, 0.0], [x0 + side, side, side], H)[0]


def _two_cubes():
    return np.vstack([_cube(0.0), _cube(1.5)])


def test_partition_ids_must_be_contiguous():
    with pytest.raises(DataError):
        Partition([0, 2])
    assert Partition([1, 0, 1]).count == 2
    assert Partition([0, 0, 1]).sizes().tolist() == [2, 1]


def test_relabel_by_first_point():
    assert relabel_by_first_point([7, 7, 3, 5, 3]).tolist() == [0, 0, 1, 2, 1]


def test_median_bisect_splits_longest_axis():
    points = np.column_stack([np.arange(6.0), np.zeros(6), np.zeros(6)])
    left, right = median_bisect(points, np.arange(6))
    assert left.tolist() == [0, 1, 2]
    assert right.tolist() == [3, 4, 5]


def test_two_separated_cubes_give_two_partitions():
    points = _two_cubes()
    n_first = len(_cube(0.0))
    hints = partition_hints(points, link_radius=0.1)
    assert hints.count == 2
    assert np.all(hints.assign[:n_first] == 0)
    assert np.all(hints.assign[n_first:] == 1)


def test_small_fragment_is_absorbed():
    cube = _cube(0.0)
    fragment = np.array([[0.65, 0.25, 0.25], [0.7, 0.25, 0.25], [0.75, 0.25, 0.25]])
    hints = partition_hints(np.vstack([cube, fragment]), link_radius=0.1, max_frac=1.0, min_count=5)
    assert hints.count == 1


def test_oversized_group_is_bisected():
    cube = _cube(0.0, side=1.0)
    hints = partition_hints(cube, link_radius=0.1, max_frac=0.4)
    assert hints.count >= 3
    assert hints.sizes().max() <= 0.4 * len(cube)


def test_no_partition_below_min_count():
    rng = np.random.default_rng(0)
    points = np.vstack([_cube(0.0), rng.uniform(1.2, 1.4, (3, 3)), _cube(1.5)])
    hints = partition_hints(points, link_radius=0.1, min_count=8)
    assert hints.sizes().min() >= 8


def test_single_point_and_bad_parameters():
    assert partition_hints(np.zeros((1, 3))).count == 1
    with pytest.raises(ConfigError):
        partition_hints(_two_cubes(), link_radius=0.0)
    with pytest.raises(ConfigError):
        partition_hints(_two_cubes(), max_frac=1.5)
    with pytest.raises(ConfigError):
        partition_hints(_two_cubes(), min_count=0)


def test_hints_are_deterministic():
    points = _two_cubes()
    a = partition_hints(points, link_radius=0.1, max_frac=0.3)
    b = partition_hints(points.copy(), link_radius=0.1, max_frac=0.3)
    assert np.array_equal(a.assign, b.assign)


def test_hints_match_components_of_a_separated_assembly():
    spec = AssemblySpec(
        "loose",
        [
            {"type": "box", "lo": [-1.0, -0.4, -1.0], "hi": [-0.3, 0.4, 1.0]},
            {"type": "box", "lo": [0.3, -0.4, -1.0], "hi": [1.0, 0.4, 1.0]},
        ],
    )
    record = build_assembly(spec, density=400.0)
    obj = normalize(record.obj)
    hints = partition_hints(obj, link_radius=0.06, max_frac=1.0)
    assert np.array_equal(hints.assign, relabel_by_first_point(obj.component))


# -- noise ---------------------------------------------------------------------------


def _three_blocks():
    points = np.vstack([_cube(0.0), _cube(1.0), _cube(2.0)])
    assign = np.repeat([0, 1, 2], len(_cube(0.0)))
    return points, Partition(assign)


def test_zero_strength_returns_a_copy():
    points, part = _three_blocks()
    for mode in ("merge", "split", "random"):
        out = inject_noise(part, mode, 0.0, points=points)
        assert out is not part
        assert np.array_equal(out.assign, part.assign)


def test_random_noise_on_a_single_partition_is_identity():
    part = Partition(np.zeros(50, dtype=np.int64))
    assert np.array_equal(inject_noise(part, "random", 1.0, seed=3).assign, part.assign)


def test_full_merge_collapses_everything():
    points, part = _three_blocks()
    assert inject_noise(part, "merge", 1.0, points=points).count == 1


def test_partial_merge_unions_one_adjacent_pair():
    points, part = _three_blocks()
    merged = inject_noise(part, "merge", 1.0 / 3.0, points=points)
    assert merged.count == 2
    n = len(_cube(0.0))
    # The far pair (blocks 0 and 2) is never the nearest.
    assert merged.assign[0] != merged.assign[2 * n]


def test_full_split_doubles_the_count():
    points = _two_cubes()
    part = Partition(np.repeat([0, 1], len(_cube(0.0))))
    assert inject_noise(part, "split", 1.0, seed=0, points=points).count == 4


def test_random_noise_is_seeded_and_leaves_input_alone():
    points, part = _three_blocks()
    before = part.assign.copy()
    a = inject_noise(part, "random", 0.5, seed=11)
    b = inject_noise(part, "random", 0.5, seed=11)
    assert np.array_equal(a.assign, b.assign)
    assert not np.array_equal(a.assign, before)
    assert np.array_equal(part.assign, before)


def test_noise_argument_errors():
    points, part = _three_blocks()
    with pytest.raises(ConfigError):
        inject_noise(part, "shuffle", 0.5)
    with pytest.raises(ConfigError):
        inject_noise(part, "random", 1.5)
    with pytest.raises(DataError):
        inject_noise(part, "merge", 0.5)
