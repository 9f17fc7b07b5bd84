"""
Subcommand implementations.

Each ``cmd_*`` function takes the parsed arguments, the resolved run
configuration and the results manager, does its per-object work through
``map_objects`` and writes one report. Per-object helpers are module-level so
they can be shipped to worker processes.
"""

import glob
import json
import math
import os
import time
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from c2lt3d.core.chart import (
    Chart,
    build_charts,
    chart_supports,
    place_back,
    select_anchors,
    serialization_order,
)
from c2lt3d.core.context import ContextConfig, contextualize
from c2lt3d.core.geometry import NNIndex, relative_pose
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
from c2lt3d.core.repair import (
    SCORERS,
    RankResult,
    RepairTask,
    build_repair_bank,
    repair_rank,
    score_task,
    summarize_ranks,
)
from c2lt3d.core.seam import (
    Attachments,
    LossWeights,
    SeamBatch,
    SeamCandidate,
    SeamHead,
    candidate_inputs,
    compat_terms,
    label_candidates,
    propose_candidates,
    seam_metrics,
    split_by_partition,
    train_seam_head,
)
from c2lt3d.core.tokenizer import BND_CODEBOOK, GEO_CODEBOOK, code_stats
from c2lt3d.preprocessing.archive import ObjectRecord, read_archive, write_archive
from c2lt3d.preprocessing.mesh_io import load_obj
from c2lt3d.preprocessing.partition import Partition, inject_noise, partition_hints
from c2lt3d.preprocessing.surface import surface_from_mesh
from c2lt3d.preprocessing.synth import emit_obj, generate, object_id
from c2lt3d.runners.experiment import log_run_summary, map_objects, successful
from c2lt3d.utils.bootstrap import bootstrap_ci, paired_bootstrap
from c2lt3d.utils.config import RunConfig, load_config
from c2lt3d.utils.errors import ConfigError, DataError
from c2lt3d.utils.logger import get_logger
from c2lt3d.utils.metrics import (
    StructFeatures,
    adaptive_tau,
    chamfer_hausdorff,
    contamination_rate,
    quality_scores,
    separation_score,
    struct_features,
    structural_fid,
    surface_normal_consistency,
)
from c2lt3d.utils.primitives import lattice_step
from c2lt3d.utils.results_manager import ResultsManager, build_report

logger = get_logger(__name__)

LEARNED_SCORERS = ("seam-head", "policy")
REPAIR_SUBSETS = ("all", "hard", "heuristic_fail")
# Length-normalized log-likelihood of one (geo, bnd) token pair under a uniform model.
UNIFORM_LOG_P = -(math.log(GEO_CODEBOOK) + math.log(BND_CODEBOOK))
DEFAULT_SAMPLES = 4000


def derive_seed(seed: int, index: int) -> int:
    """Per-object seed, independent of which worker handles the object."""
    return int(np.random.default_rng([int(seed), int(index)]).integers(0, 2**31 - 1))


def report_config(config: RunConfig) -> Dict[str, Any]:
    """Config echo for reports; the worker count never changes a result and is left out."""
    echo = config.to_dict()
    echo.pop("workers", None)
    return echo


def _mean(values) -> Optional[float]:
    kept = [float(v) for v in values if v is not None]
    return float(np.mean(kept)) if kept else None


# -- shared per-object preparation -----------------------------------------------


def load_inputs(path: str) -> Tuple[List[str], List[Any]]:
    """
    Object keys and sources of an input path.

    Args:
        path: An OBJ directory (sources are file paths, sorted by name) or an archive
            (sources are records, in archive order).

    Returns:
        Tuple of keys and sources.
    """
    if os.path.isdir(path):
        files = sorted(glob.glob(os.path.join(path, "*.obj")))
        return [os.path.splitext(os.path.basename(f))[0] for f in files], files
    records = read_archive(path)
    return [r.object_id for r in records], records


def make_partition(record: ObjectRecord, config: RunConfig, seed: int) -> Partition:
    """Ground-truth or hint partition of the record, with configured noise applied."""
    pc = config.partition
    obj = record.obj
    if pc.source == "ground_truth":
        partition = Partition(obj.component.copy())
    elif pc.source == "hints":
        partition = partition_hints(obj.points, pc.link_radius, pc.max_frac, pc.min_count)
    else:
        raise ConfigError(f"unknown partition source '{pc.source}'")
    if pc.noise_mode != "none" and pc.noise_strength > 0:
        partition = inject_noise(partition, pc.noise_mode, pc.noise_strength, seed, obj.points)
    return partition


def attachments_for(record: ObjectRecord, config: RunConfig) -> Attachments:
    """Declared attachments of a synthetic record, else the contact-graph BFS forest."""
    if record.truth is not None:
        return record.truth.attached()
    return Attachments.from_contacts(record.obj.supports(), config.seam.eps_contact)


def chart_normals(record: ObjectRecord, charts: Sequence[Chart]) -> List[np.ndarray]:
    return [record.obj.normals[c.support_ids] for c in charts]


def object_stats(record: ObjectRecord) -> Dict[str, Any]:
    intra, inter = split_by_partition(record.candidates, [c.partition_id for c in record.charts])
    intra_mean, inter_mean = _mean(intra), _mean(inter)
    return {
        "points": len(record.obj),
        "components": record.obj.n_components,
        "partitions": record.partition.count,
        "charts": len(record.charts),
        "candidates": len(record.candidates),
        "valid": int(sum(c.valid for c in record.candidates)),
        "cross_partition": len(inter),
        "intra_compat": intra_mean,
        "inter_compat": inter_mean,
        "compat_gap": None if intra_mean is None or inter_mean is None else intra_mean - inter_mean,
    }


def preprocess_object(job: Tuple[int, Any], config: RunConfig, samples: int = DEFAULT_SAMPLES) -> ObjectRecord:
    """
    Partition, chart, tokenize and propose seams for one object.

    Args:
        job: ``(index, source)``; the source is an ``ObjectRecord`` or an OBJ path.
        config: Run configuration.
        samples: Surface samples drawn from an OBJ mesh.

    Returns:
        The record with partition, charts, labelled candidates and stats attached.
    """
    index, source = job
    seed = derive_seed(config.seed, index)
    if isinstance(source, ObjectRecord):
        record = source
    else:
        obj = surface_from_mesh(load_obj(source), samples, seed)
        record = ObjectRecord(object_id=os.path.splitext(os.path.basename(source))[0], obj=obj)

    obj = record.obj
    cc = config.chart
    partition = make_partition(record, config, seed)
    hints = record.truth.anchor_hints if record.truth is not None and cc.use_anchor_hints else ()
    anchors = select_anchors(obj, cc.anchors_per_component, hints)
    charts = build_charts(
        obj,
        partition,
        anchors,
        radius=cc.radius,
        min_neighbors=cc.min_neighbors,
        reference=cc.reference_axis,
    )
    if not charts:
        raise DataError(f"{record.object_id}: no chart could be built")
    supports = chart_supports(obj, charts)
    candidates = propose_candidates(charts, supports, config.seam.eps_contact)
    label_candidates(candidates, charts, supports, chart_normals(record, charts), attachments_for(record, config))

    record.partition = partition
    record.charts = charts
    record.candidates = candidates
    record.stats = object_stats(record)
    logger.debug(
        f"{record.object_id}: {partition.count} partitions, {len(charts)} charts, "
        f"{len(candidates)} candidates"
    )
    return record


def ensure_prepared(index: int, record: ObjectRecord, config: RunConfig) -> ObjectRecord:
    """Preprocess a raw record; check a preprocessed one against its surface."""
    if record.partition is None or not record.charts:
        return preprocess_object((index, record), config)
    if len(record.partition.assign) != len(record.obj):
        raise DataError(
            f"{record.object_id}: partition covers {len(record.partition.assign)} points, "
            f"object has {len(record.obj)}"
        )
    for c in record.charts:
        if c.component_id >= record.obj.n_components or c.partition_id >= record.partition.count:
            raise DataError(f"{record.object_id}: chart {c.chart_id} refers to an unknown component or partition")
    return record


def _finish(command: str, outcomes, results: Sequence, started: float) -> None:
    log_run_summary(command, len(results), len(outcomes) - len(results), started)


# -- synth -----------------------------------------------------------------------


def synth_object(index: int, config: RunConfig) -> ObjectRecord:
    s = config.synth
    return generate(index, config.seed, s.density, s.decoys, s.collisions)


def cmd_synth(args: Any, config: RunConfig, results_mgr: ResultsManager) -> int:
    """
    Generate a synthetic corpus archive.

    Args:
        args: Parsed arguments (``emit_obj``).
        config: Run configuration; the ``synth`` section sets size, density and plants.
        results_mgr: Output directory.

    Returns:
        Exit status.
    """
    started = time.time()
    s = config.synth
    if s.n < 1:
        raise ConfigError(f"corpus size must be >= 1, got {s.n}")
    lattice_step(s.density)

    indices = list(range(s.n))
    outcomes = map_objects(
        partial(synth_object, config=config),
        indices,
        workers=config.workers,
        keys=[object_id(i) for i in indices],
        desc="synth",
    )
    records = successful(outcomes)
    write_archive(records, results_mgr.path("corpus.jsonl"))

    emit_dir = getattr(args, "emit_obj", None)
    if emit_dir:
        os.makedirs(emit_dir, exist_ok=True)
        written = [p for p in (emit_obj(r, emit_dir) for r in records) if p]
        logger.info(f"Wrote {len(written)} OBJ files to {emit_dir}")

    rows = [
        {
            "id": r.object_id,
            "kind": r.truth.kind,
            "components": r.obj.n_components,
            "points": len(r.obj),
            "seams": len(r.truth.seams),
            "decoys": len(r.truth.decoys),
            "collisions": len(r.truth.collisions),
        }
        for r in records
    ]
    counts = np.bincount([row["components"] for row in rows]) if rows else np.zeros(0, dtype=int)
    aggregate = {
        "objects": len(records),
        "skipped": len(outcomes) - len(records),
        "components_histogram": {str(k): int(v) for k, v in enumerate(counts) if v},
        "points_mean": _mean(row["points"] for row in rows),
    }
    results_mgr.write_report(build_report("synth", report_config(config), rows, aggregate))
    _finish("synth", outcomes, records, started)
    return 0


# -- preprocess ------------------------------------------------------------------


def cmd_preprocess(args: Any, config: RunConfig, results_mgr: ResultsManager) -> int:
    """
    Build the chart archive of an OBJ directory or an object archive.

    Args:
        args: Parsed arguments (``input``, ``samples``).
        config: Run configuration.
        results_mgr: Output directory; receives ``archive.jsonl`` and the report.

    Returns:
        Exit status.

    Raises:
        DataError: When no object could be processed.
    """
    started = time.time()
    keys, sources = load_inputs(args.input)
    samples = getattr(args, "samples", DEFAULT_SAMPLES)
    outcomes = map_objects(
        partial(preprocess_object, config=config, samples=samples),
        list(enumerate(sources)),
        workers=config.workers,
        keys=keys,
        desc="preprocess",
    )
    records = successful(outcomes)
    if not records:
        raise DataError(f"no object of {args.input} could be processed")
    write_archive(records, results_mgr.path("archive.jsonl"))

    charts = [c for r in records for c in r.charts]
    geo = code_stats([c.token.geo_index for c in charts], GEO_CODEBOOK)
    bnd = code_stats([c.token.bnd_index for c in charts], BND_CODEBOOK)
    intra: List[float] = []
    inter: List[float] = []
    for r in records:
        a, b = split_by_partition(r.candidates, [c.partition_id for c in r.charts])
        intra.extend(a)
        inter.extend(b)
    intra_mean, inter_mean = _mean(intra), _mean(inter)

    rows = [{"id": r.object_id, **r.stats} for r in records]
    aggregate = {
        "objects": len(records),
        "skipped": len(outcomes) - len(records),
        "charts": len(charts),
        "candidates": sum(len(r.candidates) for r in records),
        "codes": {
            "geo": {"perplexity": geo.perplexity, "utilization": geo.utilization},
            "bnd": {"perplexity": bnd.perplexity, "utilization": bnd.utilization},
        },
        "partition": {
            "intra_compat": intra_mean,
            "inter_compat": inter_mean,
            "compat_gap": None if intra_mean is None or inter_mean is None else intra_mean - inter_mean,
        },
    }
    results_mgr.write_report(build_report("preprocess", report_config(config), rows, aggregate))
    _finish("preprocess", outcomes, records, started)
    return 0


# -- evaluate --------------------------------------------------------------------


@dataclass
class Decoded:
    """Decoded points with normals, predicted component and owning partition."""

    points: np.ndarray
    normals: np.ndarray
    labels: np.ndarray
    owners: np.ndarray

    def subset(self, mask: np.ndarray) -> "Decoded":
        return Decoded(self.points[mask], self.normals[mask], self.labels[mask], self.owners[mask])


def decode_charts(
    record: ObjectRecord, mode: str = "charts", radius: float = 0.15, noise: float = 0.0, seed: int = 0
) -> Decoded:
    """
    Decoder stand-in driven by the record's charts.

    ``identity`` returns the surface itself, owned by the partition; ``charts``
    places every chart's local points back into object space; ``leaky`` also
    emits every foreign-component sample within ``radius`` of a chart anchor
    under that chart's component and partition.
    """
    obj = record.obj
    if mode == "identity":
        out = Decoded(obj.points.copy(), obj.normals.copy(), obj.component.copy(), record.partition.assign.copy())
    elif mode in ("charts", "leaky"):
        chunks = []
        for c in record.charts:
            n = len(c.local_points)
            chunks.append(
                (
                    place_back(c, c.local_points),
                    c.local_normals @ c.frame.T,
                    np.full(n, c.component_id),
                    np.full(n, c.partition_id),
                )
            )
        if mode == "leaky":
            index = NNIndex(obj.points)
            for c in record.charts:
                ids = index.within(c.anchor, radius)
                ids = ids[obj.component[ids] != c.component_id]
                chunks.append(
                    (
                        obj.points[ids],
                        obj.normals[ids],
                        np.full(len(ids), c.component_id),
                        np.full(len(ids), c.partition_id),
                    )
                )
        out = Decoded(*(np.concatenate(parts) for parts in zip(*chunks)))
        out.labels = out.labels.astype(np.int64)
        out.owners = out.owners.astype(np.int64)
    else:
        raise ConfigError(f"unknown decoder mode '{mode}'")
    if noise > 0:
        out.points = out.points + np.random.default_rng(seed).normal(0.0, noise, out.points.shape)
    return out


def predicted_components(decoded: Decoded, n_components: int) -> List[np.ndarray]:
    return [decoded.points[decoded.labels == k] for k in range(n_components)]


def score_prediction(decoded: Decoded, record: ObjectRecord, tau: float) -> Dict[str, Optional[float]]:
    """Chamfer, Hausdorff, separation, contamination and normal consistency against the surface."""
    obj = record.obj
    predicted = predicted_components(decoded, obj.n_components)
    cd, hd = chamfer_hausdorff(decoded.points, obj.points)
    nc = None
    if len(decoded.points):
        nc = surface_normal_consistency(decoded.points, decoded.normals, obj.points, obj.normals)
    return {
        "cd": cd,
        "hd": hd,
        "separation": separation_score(predicted, tau),
        "contamination": contamination_rate(predicted, obj.supports(), tau),
        "nc": nc,
    }


@dataclass
class EvalResult:
    row: Dict[str, Any]
    reference: StructFeatures
    generated: Optional[StructFeatures]
    sweep: List[Dict[str, float]] = field(default_factory=list)


def evaluate_object(job: Tuple[int, ObjectRecord], config: RunConfig) -> EvalResult:
    """
    Decode, realize and score one object.

    Args:
        job: ``(index, record)``.
        config: Run configuration (``decoder``, ``realize`` and ``chart.radius``).

    Returns:
        Per-object row with the filter on and off, structural features of the
        reference and realized components, and one entry per sweep cell.
    """
    index, record = job
    record = ensure_prepared(index, record, config)
    obj = record.obj
    tau = adaptive_tau(obj.extent)
    rc = config.realize
    decoded = decode_charts(
        record, config.decoder.mode, config.chart.radius, config.decoder.noise, derive_seed(config.seed, index)
    )
    supports = [obj.points[record.partition.assign == p] for p in range(record.partition.count)]

    off = score_prediction(decoded, record, tau)
    fractions: Dict[int, float] = {}
    if rc.enabled:
        realization = realize_component_owned(decoded.points, decoded.owners, supports, rc.margin, rc.keep_floor)
        keep = realization.keep
        fractions = realization.kept_fraction(decoded.owners)
    else:
        keep = np.ones(len(decoded.points), dtype=bool)
    realized = decoded.subset(keep)
    on = score_prediction(realized, record, tau)

    sweep = []
    for margin in rc.sweep_margins:
        for floor in rc.sweep_floors:
            cell = realize_component_owned(decoded.points, decoded.owners, supports, margin, floor)
            kept = decoded.subset(cell.keep)
            predicted = predicted_components(kept, obj.n_components)
            sweep.append(
                {
                    "margin": float(margin),
                    "keep_floor": float(floor),
                    "contamination": contamination_rate(predicted, obj.supports(), tau),
                    "separation": separation_score(predicted, tau),
                    "kept": float(cell.keep.mean()) if len(cell.keep) else 1.0,
                    "min_kept_fraction": min(cell.kept_fraction(decoded.owners).values(), default=1.0),
                }
            )

    reference, _, _ = struct_features(obj.supports())
    units = [u for u in predicted_components(realized, obj.n_components) if len(u)]
    generated = struct_features(units)[0] if units else None

    row = {
        "id": record.object_id,
        "tau": tau,
        "points": len(obj),
        "decoded": len(decoded.points),
        "kept": int(keep.sum()),
        "min_kept_fraction": min(fractions.values(), default=1.0),
        **on,
        **{f"{k}_nofilter": v for k, v in off.items()},
        "contamination_improvement": off["contamination"] - on["contamination"],
    }
    return EvalResult(row=row, reference=reference, generated=generated, sweep=sweep)


def summarize_sweep(results: Sequence[EvalResult]) -> List[Dict[str, Any]]:
    """One aggregate row per (margin, keep_floor) cell."""
    cells = []
    for i, first in enumerate(results[0].sweep):
        entries = [r.sweep[i] for r in results]
        floor = min(e["min_kept_fraction"] for e in entries)
        cells.append(
            {
                "margin": first["margin"],
                "keep_floor": first["keep_floor"],
                "contamination": _mean(e["contamination"] for e in entries),
                "separation": _mean(e["separation"] for e in entries),
                "kept": _mean(e["kept"] for e in entries),
                "min_kept_fraction": floor,
                "floor_met": bool(floor >= first["keep_floor"] - 1e-12),
            }
        )
    return cells


def structure_summary(results: Sequence[EvalResult]) -> Dict[str, Optional[float]]:
    """Structural FID of realized against reference features, with mean IQ and BC."""
    reference = [r.reference for r in results]
    mu_iq = float(np.mean([f.iq_raw for f in reference]))
    mu_bc = float(np.mean([f.bc_raw for f in reference]))
    generated = [r.generated for r in results if r.generated is not None]
    if not generated:
        return {"fid": None, "iq": None, "bc": None, "mu_iq_ref": mu_iq, "mu_bc_ref": mu_bc}
    scores = [quality_scores(f, mu_iq, mu_bc) for f in generated]
    return {
        "fid": structural_fid(generated, reference),
        "iq": _mean(iq for iq, _ in scores),
        "bc": _mean(bc for _, bc in scores),
        "mu_iq_ref": mu_iq,
        "mu_bc_ref": mu_bc,
    }


def cmd_evaluate(args: Any, config: RunConfig, results_mgr: ResultsManager) -> int:
    """
    Fixed-object structural evaluation of an archive.

    Args:
        args: Parsed arguments (``archive``).
        config: Run configuration.
        results_mgr: Output directory; receives the report and ``objects.csv``.

    Returns:
        Exit status.

    Raises:
        DataError: When no object could be evaluated.
    """
    started = time.time()
    records = read_archive(args.archive)
    outcomes = map_objects(
        partial(evaluate_object, config=config),
        list(enumerate(records)),
        workers=config.workers,
        keys=[r.object_id for r in records],
        desc="evaluate",
    )
    results = successful(outcomes)
    if not results:
        raise DataError(f"no object of {args.archive} could be evaluated")

    rows = [r.row for r in results]
    resamples, seed = config.metrics.resamples, config.seed
    metrics = ("cd", "hd", "separation", "contamination", "nc")
    aggregate = {
        "objects": len(results),
        "skipped": len(outcomes) - len(results),
        "filter_on": {m: _mean(row[m] for row in rows) for m in metrics},
        "filter_off": {m: _mean(row[f"{m}_nofilter"] for row in rows) for m in metrics},
        "ci": {
            m: list(bootstrap_ci([row[m] for row in rows], resamples, seed))
            for m in ("separation", "contamination")
        },
        "contamination_improvement": paired_bootstrap(
            [row["contamination_improvement"] for row in rows], resamples, seed
        ).to_dict(),
        "sweep": summarize_sweep(results),
        "structure": structure_summary(results),
    }
    results_mgr.write_report(build_report("evaluate", report_config(config), rows, aggregate))
    results_mgr.write_table(rows, "objects.csv")
    _finish("evaluate", outcomes, results, started)
    return 0


# -- repair-bench ----------------------------------------------------------------


@dataclass
class RepairData:
    """Repair tasks of one object with head inputs, plus its cross-group candidates."""

    object_id: str
    tasks: List[RepairTask]
    task_inputs: List[np.ndarray]
    cross: List[SeamCandidate]
    cross_inputs: np.ndarray


def _group(chart: Chart, group_by: str) -> int:
    return chart.component_id if group_by == "component" else chart.partition_id


def repair_object(job: Tuple[int, ObjectRecord], config: RunConfig) -> RepairData:
    """
    Build the repair bank of one object and the seam-head inputs of its candidates.

    Args:
        job: ``(index, record)``.
        config: Run configuration (``repair`` and ``context`` sections).

    Returns:
        The object's tasks, their input matrices, and the labelled cross-group
        candidates with their inputs for training.
    """
    index, record = job
    record = ensure_prepared(index, record, config)
    charts = record.charts
    rc = config.repair
    order = None
    if rc.mode == "prefix":
        order = np.empty(len(charts), dtype=np.int64)
        order[serialization_order(charts)] = np.arange(len(charts))
    supports = chart_supports(record.obj, charts)
    tasks = build_repair_bank(
        charts,
        supports,
        chart_normals(record, charts),
        record.candidates,
        attachments_for(record, config),
        mode=rc.mode,
        pool_radius=rc.pool_radius,
        group_by=rc.group_by,
        order=order,
        object_id=record.object_id,
    )
    tokens = contextualize(charts, ContextConfig.from_section(config.context))
    cross = [
        c for c in record.candidates if _group(charts[c.source], rc.group_by) != _group(charts[c.dest], rc.group_by)
    ]
    return RepairData(
        object_id=record.object_id,
        tasks=tasks,
        task_inputs=[candidate_inputs(t.seams, tokens) for t in tasks],
        cross=cross,
        cross_inputs=candidate_inputs(cross, tokens),
    )


def split_objects(n: int, train_fraction: float, seed: int = 0) -> List[str]:
    """Seeded train/test label per object; both sides are nonempty when ``n >= 2``."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"repair.train_fraction must be in (0, 1), got {train_fraction}")
    if n == 0:
        return []
    n_train = min(max(int(round(train_fraction * n)), 1), n - 1) if n > 1 else 1
    labels = ["test"] * n
    for i in np.random.default_rng(seed).permutation(n)[:n_train]:
        labels[int(i)] = "train"
    return labels


def fit_seam_head(train: Sequence[RepairData], config: RunConfig) -> Tuple[Optional[SeamHead], Dict[str, Any]]:
    """Train the seam head on the cross-group candidates of the training objects."""
    sc = config.seam
    cross = [c for d in train for c in d.cross]
    if not cross:
        logger.warning("No cross-group candidates in the training split; learned scorers are skipped")
        return None, {"samples": 0}
    inputs = np.vstack([d.cross_inputs for d in train if len(d.cross)])
    head = SeamHead(inputs.shape[1], sc.hidden, sc.seed)
    try:
        head, trace = train_seam_head(
            head, inputs, SeamBatch.from_candidates(cross), LossWeights.from_config(sc), sc.lr, sc.epochs
        )
    except DataError as e:
        logger.warning(f"Seam head not trained: {e}")
        return None, {"samples": len(cross)}
    logger.info(f"Seam head trained on {len(cross)} candidates: loss {trace[0]:.4f} -> {trace[-1]:.4f}")
    return head, {"samples": len(cross), "loss_initial": trace[0], "loss_final": trace[-1]}


def rank_summary(results: Sequence[RankResult], resamples: int, seed: int) -> Dict[str, Any]:
    summary = summarize_ranks(results)
    if results:
        summary["valid@1_ci"] = list(bootstrap_ci([r.valid_at[1] for r in results], resamples, seed))
    return summary


def cmd_repair_bench(args: Any, config: RunConfig, results_mgr: ResultsManager) -> int:
    """
    Train the seam head and benchmark every scorer on held-out repair tasks.

    Args:
        args: Parsed arguments (``archive``).
        config: Run configuration.
        results_mgr: Output directory; receives the report and ``repair_bank.jsonl``.

    Returns:
        Exit status; an empty bank still reports zero tasks and succeeds.
    """
    started = time.time()
    rc = config.repair
    unknown = [s for s in rc.scorers if s not in SCORERS]
    if unknown:
        raise ConfigError(f"unknown repair scorers {unknown}; choose from {list(SCORERS)}")
    records = read_archive(args.archive)
    outcomes = map_objects(
        partial(repair_object, config=config),
        list(enumerate(records)),
        workers=config.workers,
        keys=[r.object_id for r in records],
        desc="repair-bench",
    )
    data = successful(outcomes)
    splits = split_objects(len(data), rc.train_fraction, config.seed)
    for d, split in zip(data, splits):
        for t in d.tasks:
            t.split = split

    head, training = fit_seam_head([d for d, s in zip(data, splits) if s == "train"], config)
    test = [d for d, s in zip(data, splits) if s == "test"]
    tasks = [t for d in test for t in d.tasks]
    predictions = [head.predict(x) for d in test for x in d.task_inputs] if head is not None else None

    ranks: Dict[str, List[RankResult]] = {}
    for scorer in rc.scorers:
        if scorer in LEARNED_SCORERS and head is None:
            logger.warning(f"Skipping scorer '{scorer}': no trained seam head")
            continue
        ranks[scorer] = [
            repair_rank(t, score_task(t, scorer, predictions[i] if scorer in LEARNED_SCORERS else None))
            for i, t in enumerate(tasks)
        ]

    resamples, seed = config.metrics.resamples, config.seed
    masks = {
        "all": [True] * len(tasks),
        "hard": [t.hard for t in tasks],
        "heuristic_fail": [t.heuristic_fail for t in tasks],
    }
    breakdown = {
        scorer: {
            subset: rank_summary([r for r, m in zip(results, masks[subset]) if m], resamples, seed)
            for subset in REPAIR_SUBSETS
        }
        for scorer, results in ranks.items()
    }
    paired = {}
    if tasks and "nn" in ranks:
        for scorer in LEARNED_SCORERS:
            if scorer in ranks:
                diffs = [a.valid_at[1] - b.valid_at[1] for a, b in zip(ranks[scorer], ranks["nn"])]
                paired[f"{scorer}_vs_nn"] = paired_bootstrap(diffs, resamples, seed).to_dict()

    seam = None
    held_out = [c for d in test for c in d.cross]
    if head is not None and held_out:
        pred = head.predict(np.vstack([d.cross_inputs for d in test if len(d.cross)]))
        seam = seam_metrics(
            pred["compat"],
            [c.valid for c in held_out],
            pred["p_coll"],
            [c.y_coll for c in held_out],
            [f"{d.object_id}:{c.source}" for d in test for c in d.cross],
        ).to_dict()

    results_mgr.write_jsonl([t.to_dict() for d in data for t in d.tasks], "repair_bank.jsonl")
    rows = [
        {
            "id": d.object_id,
            "split": s,
            "tasks": len(d.tasks),
            "hard": sum(t.hard for t in d.tasks),
            "heuristic_fail": sum(t.heuristic_fail for t in d.tasks),
            "cross_candidates": len(d.cross),
        }
        for d, s in zip(data, splits)
    ]
    aggregate = {
        "objects": len(data),
        "skipped": len(outcomes) - len(data),
        "tasks": {
            "train": sum(len(d.tasks) for d, s in zip(data, splits) if s == "train"),
            "test": len(tasks),
        },
        "training": training,
        "scorers": breakdown,
        "paired": paired,
        "seam": seam,
    }
    results_mgr.write_report(build_report("repair-bench", report_config(config), rows, aggregate))
    if not tasks:
        logger.info("Repair bank is empty: zero held-out tasks")
    _finish("repair-bench", outcomes, data, started)
    return 0


# -- serialize-audit -------------------------------------------------------------


def parent_links(
    charts: Sequence[Chart], candidates: Sequence[SeamCandidate], order: Sequence[int]
) -> List[Tuple[Optional[int], int]]:
    """
    ``(parent, child)`` for every chart in serialization order.

    A chart hangs under the nearest earlier chart of its own partition (ties to
    the earlier one). The first chart of a partition hangs under the earlier
    chart of another partition with the best labelled candidate, or starts a
    new root when there is none.
    """
    outgoing: Dict[int, List[SeamCandidate]] = {}
    for c in candidates:
        if c.target is not None:
            outgoing.setdefault(c.source, []).append(c)
    placed: List[int] = []
    links: List[Tuple[Optional[int], int]] = []
    for i in order:
        anchor = charts[i].anchor
        same = [j for j in placed if charts[j].partition_id == charts[i].partition_id]
        parent = None
        if same:
            d = [float(np.linalg.norm(charts[j].anchor - anchor)) for j in same]
            parent = same[int(np.argmin(d))]
        elif placed:
            earlier = set(placed)
            cross = [c for c in outgoing.get(i, []) if c.dest in earlier]
            if cross:
                parent = max(cross, key=lambda c: (c.target, -c.dest)).dest
        links.append((parent, i))
        placed.append(i)
    return links


def load_log_likelihoods(path: Optional[str]) -> Dict[str, float]:
    """Externally supplied per-object ``log p_AR`` as a JSON object of id to value."""
    if not path:
        return {}
    if not os.path.exists(path):
        raise DataError(f"log-likelihood file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
        return {str(k): float(v) for k, v in document.items()}
    except (json.JSONDecodeError, AttributeError, TypeError, ValueError) as e:
        raise DataError(f"log-likelihood file {path} is not an object of numbers: {e}") from e


def audit_object(
    job: Tuple[int, ObjectRecord], config: RunConfig, log_p: Optional[Dict[str, float]] = None
) -> Dict[str, Any]:
    """
    Serialize one object's charts, score the sequence and audit the assembly.

    Args:
        job: ``(index, record)``.
        config: Run configuration (``energy`` and ``audit`` sections).
        log_p: Optional per-object ``log p_AR``; uniform otherwise.

    Returns:
        Per-object row: energies, pose deviation, depth, collision and support counts.
    """
    index, record = job
    record = ensure_prepared(index, record, config)
    charts = record.charts
    obj = record.obj
    ac, ec = config.audit, config.energy
    supports = chart_supports(obj, charts)
    normals = chart_normals(record, charts)
    links = parent_links(charts, record.candidates, serialization_order(charts))

    graph = AssemblyGraph(ac.delta_coll, ac.r_max, ac.d_max)
    labelled = {(c.source, c.dest): c.target for c in record.candidates if c.target is not None}
    compat: List[float] = []
    for parent, child in links:
        if parent is None:
            graph.add_node(child, charts[child].pose)
            continue
        graph.add_edge(parent, child, relative_pose(charts[parent].pose, charts[child].pose))
        value = labelled.get((child, parent))
        if value is None:
            a, b = charts[child], charts[parent]
            value = compat_terms(
                supports[child], normals[child], supports[parent], normals[parent], a.anchor, b.anchor, a.scale, b.scale
            ).value
        compat.append(float(value))

    log_p_ar = (log_p or {}).get(record.object_id, UNIFORM_LOG_P)
    energies = {
        f"energy@{lam:g}": decoding_energy(DecodingCandidate(log_p_ar, compat), lam, ec.eps) for lam in ec.lambdas
    }

    poses = accumulate_transforms(graph)
    deviation = 0.0
    for i, c in enumerate(charts):
        p = poses[i]
        deviation = max(
            deviation,
            float(np.abs(p.rotation - c.frame).max()),
            float(np.abs(p.translation - c.anchor).max()),
            abs(p.scale - c.scale),
        )
    collisions = collision_audit(
        graph,
        {i: c.local_points for i, c in enumerate(charts)},
        {i: c.local_normals for i, c in enumerate(charts)},
        band=ac.band,
        groups={i: c.component_id for i, c in enumerate(charts)},
        poses=poses,
    )
    unsupported = support_violation(obj.supports(), GROUND_Z, ac.delta_support, ac.vertical_factor, ac.band)

    return {
        "id": record.object_id,
        "charts": len(charts),
        "links": len(compat),
        "roots": sum(parent is None for parent, _ in links),
        "log_p_ar": log_p_ar,
        "energy": decoding_energy(DecodingCandidate(log_p_ar, compat), ec.lam, ec.eps),
        **energies,
        "min_compat": min(compat, default=None),
        "max_pose_deviation": deviation,
        "depth": graph.depth(),
        **collisions.to_dict(),
        "unsupported": len(unsupported),
    }


def cmd_serialize_audit(args: Any, config: RunConfig, results_mgr: ResultsManager) -> int:
    """
    Decoding energies and assembly audits of every object in an archive.

    Args:
        args: Parsed arguments (``archive``, ``log_p_ar``).
        config: Run configuration (``energy.lam``, ``energy.eps``, ``energy.lambdas``).
        results_mgr: Output directory; receives the report and ``audit.csv``.

    Returns:
        Exit status.
    """
    started = time.time()
    records = read_archive(args.archive)
    log_p = load_log_likelihoods(getattr(args, "log_p_ar", None))
    outcomes = map_objects(
        partial(audit_object, config=config, log_p=log_p),
        list(enumerate(records)),
        workers=config.workers,
        keys=[r.object_id for r in records],
        desc="serialize-audit",
    )
    rows = successful(outcomes)
    energy_keys = [f"energy@{lam:g}" for lam in config.energy.lambdas]
    aggregate = {
        "objects": len(rows),
        "skipped": len(outcomes) - len(rows),
        "energy": _mean(r["energy"] for r in rows),
        "energies": {k: _mean(r[k] for r in rows) for k in energy_keys},
        "local_violations": sum(r["local_violations"] for r in rows),
        "non_local_violations": sum(r["non_local_violations"] for r in rows),
        "objects_with_non_local": sum(r["non_local_violations"] > 0 for r in rows),
        "unsupported": sum(r["unsupported"] for r in rows),
        "max_pose_deviation": max((r["max_pose_deviation"] for r in rows), default=None),
        "max_depth": max((r["depth"] for r in rows), default=None),
    }
    results_mgr.write_report(build_report("serialize-audit", report_config(config), rows, aggregate))
    if rows:
        results_mgr.write_table(rows, "audit.csv")
    _finish("serialize-audit", outcomes, rows, started)
    return 0


# -- report ----------------------------------------------------------------------


def cmd_report(args: Any, config: RunConfig, results_mgr: ResultsManager) -> int:
    """Flatten the aggregate blocks of many reports into ``runs.csv``."""
    output = results_mgr.path("runs.csv")
    table = ResultsManager.collect_reports(args.inputs, output)
    logger.info(f"Collected {len(table)} reports into {output}")
    return 0


COMMANDS: Dict[str, Callable[[Any, RunConfig, ResultsManager], int]] = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "evaluate": cmd_evaluate,
    "repair-bench": cmd_repair_bench,
    "serialize-audit": cmd_serialize_audit,
    "report": cmd_report,
}


def resolve_config(args: Any) -> RunConfig:
    """Defaults, config file and ``--set`` overrides, then the subcommand's own flags."""
    config = load_config(
        getattr(args, "config", None),
        getattr(args, "set", None),
        getattr(args, "seed", None),
        getattr(args, "workers", None),
    )
    for section, key, flag in (
        ("synth", "n", "n"),
        ("synth", "density", "density"),
        ("synth", "decoys", "decoys"),
        ("synth", "collisions", "collisions"),
        ("energy", "lam", "lam"),
        ("energy", "eps", "eps"),
        ("repair", "scorers", "scorers"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(getattr(config, section), key, value)
    return config


def run_command(args: Any, results_mgr: ResultsManager) -> int:
    """Resolve the configuration, save it, and run the selected subcommand."""
    if args.command not in COMMANDS:
        raise ConfigError(f"unknown command '{args.command}'")
    config = resolve_config(args)
    results_mgr.save_config(config.to_dict())
    return COMMANDS[args.command](args, config, results_mgr)
