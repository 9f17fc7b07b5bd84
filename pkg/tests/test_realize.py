"""Component-owned realization, decoding energy and the assembly graph audits."""

import math

import numpy as np
import pytest

from c2lt3d.core.geometry import Pose, rotation_from_rotvec
from c2lt3d.core.realize import (
    GROUND_Z,
    AssemblyGraph,
    DecodingCandidate,
    accumulate_transforms,
    collision_audit,
    decoding_energy,
    realize_component_owned,
    support_violation,
)
from c2lt3d.preprocessing.synth import CONTACT_GAP, AssemblySpec, Contact, build_assembly
from c2lt3d.runners.pipeline import audit_object
from c2lt3d.utils.errors import ConfigError, CycleError, DataError, DepthError, InvariantError
from c2lt3d.utils.primitives import sample_box
from tests.cases import make_config

SUPPORTS = [np.array([[0.0, 0.0, 0.0]]), np.array([[1.0, 0.0, 0.0]])]
XS = [0.0, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95]


def _on_axis(xs):
    return np.column_stack([xs, np.zeros(len(xs)), np.zeros(len(xs))])


def _disk(radius=0.05, count=16):
    t = 2.0 * np.pi * np.arange(count) / count
    ring = np.column_stack([radius * np.cos(t), radius * np.sin(t), np.zeros(count)])
    return np.vstack([[0.0, 0.0, 0.0], ring])


def _chain(turn, nodes=6, step=0.3):
    graph = AssemblyGraph(delta_coll=0.05, r_max=0.3)
    graph.add_node(0)
    for k in range(1, nodes):
        graph.add_edge(k - 1, k, Pose(rotation_from_rotvec([0.0, 0.0, turn]), (step, 0.0, 0.0)))
    return graph


# -- realization ---------------------------------------------------------------------


def test_keep_floor_restores_the_least_foreign_points():
    owners = np.zeros(len(XS), dtype=int)
    result = realize_component_owned(_on_axis(XS), owners, SUPPORTS, keep_floor=0.9)
    assert result.keep.tolist() == [True] * 9 + [False]
    assert result.kept_fraction(owners) == {0: pytest.approx(0.9)}


def test_without_a_floor_only_owned_points_survive():
    owners = np.zeros(len(XS), dtype=int)
    result = realize_component_owned(_on_axis(XS), owners, SUPPORTS, keep_floor=0.0)
    assert result.keep.tolist() == [True] + [False] * 9
    np.testing.assert_allclose(result.d_own, XS)
    np.testing.assert_allclose(result.d_other, 1.0 - np.asarray(XS))


def test_margin_widens_the_kept_set():
    owners = np.zeros(len(XS), dtype=int)
    result = realize_component_owned(_on_axis(XS), owners, SUPPORTS, margin=0.25, keep_floor=0.0)
    assert int(result.keep.sum()) == 3


def test_single_partition_keeps_everything():
    pts = np.random.default_rng(0).normal(size=(20, 3))
    result = realize_component_owned(pts, np.zeros(20, dtype=int), SUPPORTS[:1], keep_floor=0.0)
    assert result.keep.all()
    assert np.isinf(result.d_other).all()


def test_backends_agree():
    rng = np.random.default_rng(4)
    pts = rng.uniform(-1.0, 2.0, (60, 3))
    owners = rng.integers(0, 2, 60)
    supports = [rng.normal(size=(30, 3)), rng.normal(size=(25, 3)) + 1.0]
    a = realize_component_owned(pts, owners, supports, backend="index")
    b = realize_component_owned(pts, owners, supports, backend="brute")
    assert np.array_equal(a.keep, b.keep)
    np.testing.assert_allclose(a.d_own, b.d_own, atol=1e-12)


def test_realization_errors():
    pts = _on_axis([0.0, 1.0])
    with pytest.raises(DataError):
        realize_component_owned(pts, [0, 2], SUPPORTS)
    with pytest.raises(DataError):
        realize_component_owned(pts, [0], SUPPORTS)
    with pytest.raises(DataError):
        realize_component_owned(pts, [0, 1], [SUPPORTS[0], np.zeros((0, 3))])
    with pytest.raises(ConfigError):
        realize_component_owned(pts, [0, 1], SUPPORTS, keep_floor=1.5)


@pytest.mark.parametrize("seed", range(5))
def test_kept_set_grows_with_the_margin(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1.0, 2.0, (80, 3))
    owners = rng.integers(0, 3, 80)
    supports = [rng.normal(size=(20, 3)) + shift for shift in (0.0, 1.0, 2.0)]
    previous = np.zeros(80, dtype=bool)
    for margin in (0.0, 0.05, 0.1, 0.5, 1.0):
        keep = realize_component_owned(pts, owners, supports, margin=margin, keep_floor=0.0).keep
        assert np.all(keep[previous])
        previous = keep
    assert realize_component_owned(pts, owners, supports, margin=np.inf, keep_floor=0.0).keep.all()


# -- decoding energy -----------------------------------------------------------------


def test_energy_floors_zero_compatibility():
    assert decoding_energy(DecodingCandidate(0.0, [0.0])) == pytest.approx(2.9957, abs=1e-4)
    assert decoding_energy(DecodingCandidate(0.0, [0.0]), eps=0.05) == pytest.approx(-math.log(0.05))


def test_energy_example():
    energy = decoding_energy(DecodingCandidate(-1.0, [0.5, 0.01]), lam=1.0, eps=0.05)
    assert energy == pytest.approx(1.0 - math.log(0.5) - math.log(0.05))
    assert decoding_energy(DecodingCandidate(-1.0, [0.5, 0.01]), lam=0.0) == pytest.approx(1.0)
    assert decoding_energy(DecodingCandidate(-2.0)) == pytest.approx(2.0)


def test_energy_prefers_compatible_seams():
    good = decoding_energy(DecodingCandidate(-3.0, [0.9, 0.8]))
    bad = decoding_energy(DecodingCandidate(-3.0, [0.9, 0.1]))
    assert good < bad


def test_energy_errors():
    with pytest.raises(ConfigError):
        decoding_energy(DecodingCandidate(0.0, [0.5]), eps=0.0)
    with pytest.raises(DataError):
        decoding_energy(DecodingCandidate(float("nan"), [0.5]))


@pytest.mark.parametrize(
    "log_p, compat, lam, expected",
    [
        (-1.0, [], 1.0, 1.0),
        (-1.0, [1.0], 1.0, 1.0),
        (-0.5, [0.5], 1.0, 1.1931471805599453),
        (-0.5, [0.5], 2.0, 1.8862943611198906),
        (-2.0, [0.9, 0.8], 1.0, 2.328504066972036),
        (-2.0, [0.0], 1.0, 4.995732273553991),
        (-2.0, [0.01, 0.02], 0.5, 4.995732273553991),
        (0.0, [0.2, 0.1], 1.0, 3.912023005428146),
        (-3.0, [0.5, 0.5, 0.5], 1.0, 5.079441541679836),
        (-1.5, [0.05], 3.0, 10.487196820661973),
    ],
)
def test_energy_table(log_p, compat, lam, expected):
    assert decoding_energy(DecodingCandidate(log_p, compat), lam=lam) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_energy_is_monotone(seed):
    rng = np.random.default_rng(seed)
    compat = rng.uniform(0.0, 1.0, 4)
    log_p = -float(rng.uniform(0.0, 5.0))
    base = decoding_energy(DecodingCandidate(log_p, compat))
    for i in range(len(compat)):
        raised = compat.copy()
        raised[i] = min(1.0, raised[i] + 0.1)
        assert decoding_energy(DecodingCandidate(log_p, raised)) <= base + 1e-12
    energies = [decoding_energy(DecodingCandidate(log_p, compat), lam=lam) for lam in (0.0, 0.5, 1.0, 2.0, 4.0)]
    assert all(b >= a - 1e-12 for a, b in zip(energies, energies[1:]))


# -- assembly graph ------------------------------------------------------------------


def test_roots_keep_their_pose_and_children_compose():
    graph = AssemblyGraph()
    graph.add_node("root", Pose(translation=(1.0, 0.0, 0.0), scale=2.0))
    graph.add_edge("root", "child", Pose(translation=(0.0, 1.0, 0.0)))
    graph.add_edge("child", "leaf", Pose(translation=(0.0, 0.0, 1.0)))
    poses = accumulate_transforms(graph)
    np.testing.assert_allclose(poses["root"].translation, [1.0, 0.0, 0.0])
    np.testing.assert_allclose(poses["child"].translation, [1.0, 2.0, 0.0])
    np.testing.assert_allclose(poses["leaf"].translation, [1.0, 2.0, 2.0])
    assert poses["leaf"].scale == 2.0
    assert graph.depth() == 2


def test_chain_poses_follow_the_turns():
    poses = accumulate_transforms(_chain(2.0 * np.pi / 5.0))
    # Five equal turns close a pentagon, so the sixth node lands back on the first.
    assert poses[5].allclose(poses[0], atol=1e-9)
    np.testing.assert_allclose(poses[1].translation, [0.3, 0.0, 0.0], atol=1e-12)


def test_cycle_is_rejected():
    graph = AssemblyGraph()
    for a, b in ((0, 1), (1, 2), (2, 3), (3, 0)):
        graph.add_edge(a, b, Pose())
    with pytest.raises(CycleError) as info:
        accumulate_transforms(graph)
    assert sorted(info.value.cycle) == [0, 1, 2, 3]
    assert info.value.exit_code == 3


def test_two_parents_are_rejected():
    graph = AssemblyGraph()
    graph.add_edge(0, 2, Pose())
    graph.add_edge(1, 2, Pose())
    with pytest.raises(InvariantError):
        accumulate_transforms(graph)


def test_depth_limit():
    graph = AssemblyGraph(d_max=3)
    for k in range(4):
        graph.add_edge(k, k + 1, Pose())
    with pytest.raises(DepthError):
        accumulate_transforms(graph)
    graph.d_max = 4
    assert len(accumulate_transforms(graph)) == 5


def test_folded_chain_collides_with_itself():
    graph = _chain(2.0 * np.pi / 5.0)
    samples = {k: _disk() for k in range(6)}
    report = collision_audit(graph, samples, band=0.02)
    assert report.non_local == [(0, 5)]
    assert report.local == []
    assert report.max_proxy == pytest.approx(1.0)
    assert report.to_dict()["non_local_violations"] == 1


def test_straight_chain_is_clean():
    graph = _chain(0.0)
    report = collision_audit(graph, {k: _disk() for k in range(6)}, band=0.02)
    assert report.local == [] and report.non_local == []


def test_shared_group_skips_the_pair():
    graph = _chain(2.0 * np.pi / 5.0)
    samples = {k: _disk() for k in range(6)}
    report = collision_audit(graph, samples, band=0.02, groups={k: 0 for k in range(6)})
    assert report.non_local == []


def test_collision_audit_propagates_cycles():
    graph = AssemblyGraph()
    graph.add_edge(0, 1, Pose())
    graph.add_edge(1, 0, Pose())
    with pytest.raises(CycleError):
        collision_audit(graph, {0: _disk(), 1: _disk()})


# -- support -------------------------------------------------------------------------


def test_floating_component_is_flagged():
    column = np.column_stack([np.zeros(11), np.zeros(11), np.linspace(-1.0, 0.0, 11)])
    resting = np.array([[0.0, 0.0, 0.05], [0.0, 0.0, 0.5]])
    floating = np.array([[3.0, 3.0, 1.0], [3.0, 3.0, 1.2]])
    assert support_violation([column, resting, floating]) == [2]
    assert support_violation([column, resting]) == []


def test_side_by_side_floating_boxes_do_not_hold_each_other_up():
    left, _ = sample_box([0.0, 0.0, 0.5], [0.2, 0.2, 0.7], 0.05)
    right, _ = sample_box([0.2, 0.0, 0.5], [0.4, 0.2, 0.7], 0.05)
    assert support_violation([left, right], ground=-1.0) == [0, 1]


def test_stacked_boxes_rest_on_the_ground():
    base, _ = sample_box([0.0, 0.0, -1.0], [0.4, 0.4, -0.5], 0.05)
    top, _ = sample_box([0.0, 0.0, -0.5 + CONTACT_GAP], [0.4, 0.4, 0.0], 0.05)
    assert support_violation([top, base], ground=-1.0) == []
    lifted = base + [0.0, 0.0, 0.3]
    assert support_violation([top + [0.0, 0.0, 0.3], lifted], ground=-1.0) == [1]


def test_audit_measures_support_from_the_ground_plane():
    # Wider than tall: normalization leaves the lowest point at z = -0.2.
    spec = AssemblySpec(
        "slabs",
        [
            {"type": "box", "lo": [-1.0, -0.5, -0.2], "hi": [1.0, 0.5, 0.0]},
            {"type": "box", "lo": [-0.5, -0.5, CONTACT_GAP], "hi": [0.5, 0.5, 0.2]},
        ],
        [Contact(1, 0, (0.0, 0.0, CONTACT_GAP))],
    )
    record = build_assembly(spec, density=400.0)
    assert record.obj.points[:, 2].min() > GROUND_Z + 0.5
    row = audit_object((0, record), make_config())
    assert row["unsupported"] == 1
