"""Repair bank construction, scorers and ranking."""

import numpy as np
import pytest

from c2lt3d.core.geometry import Pose
from c2lt3d.core.repair import (
    RankResult,
    RepairTask,
    build_repair_bank,
    repair_rank,
    score_task,
    summarize_ranks,
)
from c2lt3d.core.seam import Attachments, CompatTerms, SeamCandidate
from c2lt3d.runners.pipeline import repair_object, split_objects
from c2lt3d.utils.errors import ConfigError, DataError
from tests.cases import make_config


def _line(axis, lo, hi, count=7):
    pts = np.zeros((count, 3))
    pts[:, axis] = np.linspace(lo, hi, count)
    return pts


@pytest.fixture
def scene(make_chart):
    """A child chart, its true parent 0.03 away, and a decoy 0.01 away."""
    charts = [
        make_chart(0, [0.0, 0.0, 0.0], component=0),
        make_chart(1, [0.09, 0.0, 0.0], component=1),
        make_chart(2, [0.0, 0.04, 0.0], component=2),
    ]
    supports = [_line(0, -0.03, 0.03), _line(0, 0.06, 0.12), _line(1, 0.01, 0.07)]
    normals = [np.tile([0.0, 0.0, 1.0], (len(s), 1)) for s in supports]
    candidates = [
        SeamCandidate(0, 1, Pose(), 1.0, 0.03, target=0.8, terms=CompatTerms(0.7, 0.8, 0.5, 0.9), valid=1),
        SeamCandidate(0, 2, Pose(), 1.0, 0.01, target=0.2, terms=CompatTerms(0.1, 0.3, 0.5, 0.4)),
    ]
    return charts, supports, normals, candidates


def _bank(scene, **kwargs):
    charts, supports, normals, candidates = scene
    return build_repair_bank(charts, supports, normals, candidates, Attachments(), **kwargs)


def test_decoy_makes_a_hard_task(scene):
    tasks = _bank(scene, object_id="obj")
    assert len(tasks) == 1
    task = tasks[0]
    assert task.child == 0
    assert task.candidates == [1, 2]
    assert task.valid == [1]
    assert task.reference == 1
    assert task.hard and task.heuristic_fail
    assert task.to_dict()["object"] == "obj"


def test_nearest_neighbour_falls_for_the_decoy(scene):
    task = _bank(scene)[0]
    result = repair_rank(task, score_task(task, "nn"))
    assert result.ranking == [2, 1]
    assert result.valid_at == {1: 0.0, 3: 1.0}
    assert result.valid_rr == 0.5
    assert result.parent_rr == 0.5


def test_dense_support_finds_the_parent(scene):
    task = _bank(scene)[0]
    result = repair_rank(task, score_task(task, "dense-support"))
    assert result.ranking == [1, 2]
    assert result.valid_at[1] == 1.0
    assert result.parent_at[1] == 1.0


def test_learned_scorers(scene):
    task = _bank(scene)[0]
    predictions = {
        "compat": np.array([0.9, 0.2]),
        "p_coll": np.array([0.1, 0.1]),
        "p_inv": np.array([0.1, 0.9]),
    }
    np.testing.assert_allclose(score_task(task, "seam-head", predictions), [0.9, 0.2])
    np.testing.assert_allclose(score_task(task, "policy", predictions), [1.0, 0.0])
    assert repair_rank(task, score_task(task, "policy", predictions)).ranking == [1, 2]


def test_scorer_errors(scene):
    task = _bank(scene)[0]
    with pytest.raises(DataError):
        score_task(task, "seam-head")
    with pytest.raises(ConfigError):
        score_task(task, "oracle")


def test_ties_go_to_the_lower_chart_id(scene):
    task = _bank(scene)[0]
    assert repair_rank(task, [0.5, 0.5]).ranking == [1, 2]


def test_rank_errors(scene):
    task = _bank(scene)[0]
    with pytest.raises(DataError):
        repair_rank(task, [0.5])
    lonely = RepairTask(child=0, seams=task.seams[:1], valid=[1], reference=1, hard=False, heuristic_fail=False)
    with pytest.raises(DataError):
        repair_rank(lonely, [0.5])


def test_single_candidate_pool_makes_no_task(scene):
    charts, supports, normals, candidates = scene
    tasks = build_repair_bank(charts[:2], supports[:2], normals[:2], candidates[:1], Attachments())
    assert tasks == []


def test_prefix_mode_hides_later_charts(scene):
    # Chart 1 comes after the child, so only the decoy is visible.
    assert _bank(scene, mode="prefix", order=[1, 2, 0]) == []
    assert len(_bank(scene, mode="prefix", order=[2, 0, 1])) == 1


def test_same_partition_has_no_cross_group_edges(scene):
    assert _bank(scene, group_by="partition") == []


def test_bank_config_errors(scene):
    with pytest.raises(ConfigError):
        _bank(scene, mode="prefix")
    with pytest.raises(ConfigError):
        _bank(scene, mode="full")
    with pytest.raises(ConfigError):
        _bank(scene, group_by="colour")


def test_summarize_ranks():
    assert summarize_ranks([]) == {"tasks": 0}
    a = RankResult([1, 2], {1: 1.0, 3: 1.0}, {1: 1.0, 3: 1.0}, 1.0, 1.0)
    b = RankResult([2, 1], {1: 0.0, 3: 1.0}, {1: 0.0, 3: 1.0}, 0.5, 0.5)
    summary = summarize_ranks([a, b])
    assert summary["tasks"] == 2
    assert summary["valid@1"] == 0.5
    assert summary["valid@3"] == 1.0
    assert summary["valid_mrr"] == 0.75


# -- objects -------------------------------------------------------------------------


def test_tower_repair_data(tower_record):
    data = repair_object((0, tower_record), make_config())
    for task, inputs in zip(data.tasks, data.task_inputs):
        assert task.reference in task.valid
        assert len(task.candidates) >= 2
        assert inputs.shape[0] == len(task.seams)
        assert all(s.source == task.child for s in task.seams)
    charts = tower_record.charts
    assert all(charts[c.source].component_id != charts[c.dest].component_id for c in data.cross)
    assert data.cross_inputs.shape[0] == len(data.cross)


def test_split_objects():
    labels = split_objects(10, 0.6, seed=3)
    assert labels.count("train") == 6
    assert labels == split_objects(10, 0.6, seed=3)
    assert sorted(set(split_objects(2, 0.9))) == ["test", "train"]
    assert split_objects(0, 0.5) == []
    with pytest.raises(ConfigError):
        split_objects(5, 1.0)
