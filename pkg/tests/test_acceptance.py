"""End-to-end runs of the command line on small synthetic corpora."""

import json

import pytest

import main
from tests.cases import DECOY_CORPUS, DETERMINISM_CORPUS, PARTITION_CORPUS

pytestmark = pytest.mark.slow

SMALL = ["--set", "partition.link_radius=0.06", "--set", "metrics.resamples=200", "--log-level", "WARNING"]


def _run(*argv):
    status = main.main([str(a) for a in argv] + SMALL)
    assert status == 0
    return status


def _aggregate(directory):
    return json.loads((directory / "report.json").read_text())["aggregate"]


def _corpus(root, corpus, *flags):
    out = root / "synth"
    _run("synth", "--n", corpus["n"], "--density", corpus["density"], "--out", out, *flags)
    return out / "corpus.jsonl"


def _prepared(root, corpus, *flags):
    out = root / "prep"
    _run("preprocess", _corpus(root, corpus, *flags), "--out", out)
    return out / "archive.jsonl"


@pytest.fixture(scope="module")
def decoy_archive(tmp_path_factory):
    return _prepared(tmp_path_factory.mktemp("decoys"), DECOY_CORPUS, "--decoys")


def test_seam_head_beats_the_decoys(decoy_archive, tmp_path):
    _run("repair-bench", decoy_archive, "--out", tmp_path)
    scorers = _aggregate(tmp_path)["scorers"]
    for subset in ("hard", "heuristic_fail"):
        assert scorers["nn"][subset]["tasks"] > 0
        assert scorers["nn"][subset]["valid@1"] == 0.0
    assert scorers["seam-head"]["hard"]["valid@1"] >= 0.8


def test_realization_reduces_leaky_contamination(decoy_archive, tmp_path):
    _run("evaluate", decoy_archive, "--out", tmp_path, "--set", "decoder.mode=leaky")
    report = json.loads((tmp_path / "report.json").read_text())
    aggregate = report["aggregate"]
    assert aggregate["filter_on"]["contamination"] < aggregate["filter_off"]["contamination"]
    floor = report["meta"]["config"]["realize"]["keep_floor"]
    assert all(row["min_kept_fraction"] >= floor - 1e-12 for row in report["objects"])
    assert all(cell["floor_met"] for cell in aggregate["sweep"])


@pytest.mark.parametrize("command", ["preprocess", "evaluate", "repair-bench"])
def test_reports_do_not_depend_on_workers(tmp_path, command):
    corpus = _corpus(tmp_path, DETERMINISM_CORPUS, "--decoys")
    if command == "preprocess":
        source = corpus
    else:
        source = tmp_path / "prep" / "archive.jsonl"
        _run("preprocess", corpus, "--out", tmp_path / "prep")
    reports = []
    for workers in (1, 8):
        out = tmp_path / f"{command}-{workers}"
        _run(command, source, "--out", out, "--workers", workers)
        reports.append((out / "report.json").read_bytes())
    assert reports[0] == reports[1]


def test_partitions_separate_compatible_seams(tmp_path):
    _prepared(tmp_path, PARTITION_CORPUS)
    gap = _aggregate(tmp_path / "prep")["partition"]["compat_gap"]
    assert gap is not None and gap >= 0.05

    noisy = tmp_path / "noisy"
    _run(
        "preprocess",
        tmp_path / "synth" / "corpus.jsonl",
        "--out",
        noisy,
        "--set",
        "partition.noise_mode=random",
        "--set",
        "partition.noise_strength=1.0",
    )
    noisy_gap = _aggregate(noisy)["partition"]["compat_gap"]
    assert noisy_gap is None or noisy_gap < 0.02


def test_planted_collisions_are_found(tmp_path):
    archive = _prepared(tmp_path, DETERMINISM_CORPUS, "--collisions")
    _run("serialize-audit", archive, "--out", tmp_path / "audit")
    aggregate = _aggregate(tmp_path / "audit")
    assert aggregate["objects"] == DETERMINISM_CORPUS["n"]
    assert aggregate["non_local_violations"] >= 1
    assert aggregate["objects_with_non_local"] == aggregate["objects"]
    # Every part rests on another part or on the ground.
    assert aggregate["unsupported"] == 0
