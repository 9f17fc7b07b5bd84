"""
Procedural multi-component assemblies with known structure.

Every assembly is a forest of primitives resting on each other with a small
contact gap. Contacts are planted so that the chart anchored 0.1 inside the
parent's edge (and the nearest parent chart) form a seam with high band
overlap. Decoys are loose bars slipped under a child's overhang: closer to the
child than its true parent, yet misaligned with it. Planted collisions are
slabs pressed into the -y face of part 0, their face samples paired with the
host's at every density.

All objects span z in [-1, 1] with the ground at z = -1, so normalization only
recenters them.
"""

import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import trimesh

from c2lt3d.core.geometry import NNIndex
from c2lt3d.preprocessing.archive import ContactSpec, GroundTruth, ObjectRecord
from c2lt3d.preprocessing.mesh_io import export_obj
from c2lt3d.preprocessing.surface import normalize
from c2lt3d.utils.errors import ConfigError, DataError
from c2lt3d.utils.logger import get_logger
from c2lt3d.utils.primitives import lattice_step, primitive_mesh, sample_primitive

logger = get_logger(__name__)

CONTACT_GAP = 0.004
DECOY_GAP = 0.002
DECOY_OFFSET = 0.025
HINT_INSET = 0.1
OVERHANG = 0.05
BAR = 0.35
ORNAMENT_RADIUS = 0.1
ORNAMENT_ROW = 0.8
SINK_DEPTH = 0.01
SLAB = 0.1
SLAB_INSET = 0.06
SLAB_HINT_SPREAD = 0.05
MIN_COMPONENTS = 2
MAX_COMPONENTS = 12


@dataclass
class Contact:
    """``child`` touches ``other`` near ``hint``, a point on the child's surface."""

    child: int
    other: int
    hint: Tuple[float, float, float]


@dataclass
class AssemblySpec:
    kind: str
    parts: List[dict]
    contacts: List[Contact] = field(default_factory=list)
    decoys: List[Contact] = field(default_factory=list)
    collisions: List[Contact] = field(default_factory=list)

    def validate(self) -> None:
        """Attachment links must form a forest over existing parts."""
        n = len(self.parts)
        graph = nx.DiGraph()
        graph.add_nodes_from(range(n))
        for c in self.contacts + self.decoys + self.collisions:
            if not (0 <= c.child < n and 0 <= c.other < n) or c.child == c.other:
                raise DataError(f"contact {c.child}->{c.other} references an unknown part")
        for c in self.contacts:
            if graph.out_degree(c.child):
                raise DataError(f"part {c.child} has more than one parent")
            graph.add_edge(c.child, c.other)
        try:
            cycle = nx.find_cycle(graph)
        except nx.NetworkXNoCycle:
            return
        path = " -> ".join(str(u) for u, _ in cycle)
        raise DataError(f"attachment links contain a cycle: {path}")


def _box(lo, hi) -> dict:
    return {"type": "box", "lo": [float(v) for v in lo], "hi": [float(v) for v in hi]}


def _sunk_slab(host: dict) -> Tuple[dict, List[Tuple[float, float, float]]]:
    """
    Slab pushed ``SINK_DEPTH`` into the -y face of a box, and two hints on its buried face.

    The slab spans the host's z range and sits inside its x range off the
    lattice, so every buried face sample has a host -y face sample exactly
    ``SINK_DEPTH`` away. The hints sit ``SLAB_HINT_SPREAD`` above and below the
    face center; their charts and the host charts facing them all overlap, so
    at least one penetrating pair is not a parent link.
    """
    lo, hi = np.asarray(host["lo"]), np.asarray(host["hi"])
    if hi[0] - lo[0] <= 2.0 * SLAB_INSET:
        raise DataError("collision host is too narrow for a slab")
    face = lo[1] + SINK_DEPTH
    slab = _box([lo[0] + SLAB_INSET, lo[1] - SLAB, lo[2]], [hi[0] - SLAB_INSET, face, hi[2]])
    x, z = float(0.5 * (lo[0] + hi[0])), float(0.5 * (lo[2] + hi[2]))
    return slab, [(x, float(face), z + dz) for dz in (-SLAB_HINT_SPREAD, SLAB_HINT_SPREAD)]


def tower_spec(count: int, rng: np.random.Generator, decoys: bool = False) -> AssemblySpec:
    """Stacked boxes, each one overhanging the box below on the +x side."""
    half_x = 0.4
    half_y = float(rng.choice([0.3, 0.35]))
    height = (2.0 - (count - 1) * CONTACT_GAP) / count
    parts, contacts = [], []
    for k in range(count):
        z0 = -1.0 + k * (height + CONTACT_GAP)
        parts.append(_box([-half_x, -half_y, z0], [half_x + OVERHANG * k, half_y, z0 + height]))
        if k:
            edge = half_x + OVERHANG * (k - 1)
            contacts.append(Contact(k, k - 1, (edge - HINT_INSET, 0.0, z0)))
    spec = AssemblySpec("tower", parts, contacts)
    if decoys:
        top = parts[1]["lo"][2] - DECOY_GAP
        spec.parts.append(
            _box([half_x + DECOY_OFFSET, -half_y, top - BAR], [half_x + DECOY_OFFSET + BAR, half_y, top])
        )
        spec.decoys.append(Contact(1, len(spec.parts) - 1, contacts[0].hint))
    return spec


def _legs(half_x: float, half_y: float, z0: float, z1: float) -> List[dict]:
    """Four corner legs: (-x,-y), (+x,-y), (+x,+y), (-x,+y)."""
    out = []
    for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
        xs = sorted((sx * half_x, sx * (half_x - BAR)))
        ys = sorted((sy * half_y, sy * (half_y - BAR)))
        out.append(_box([xs[0], ys[0], z0], [xs[1], ys[1], z1]))
    return out


def _leg_hint(leg: dict, z: float) -> Tuple[float, float, float]:
    """Point on a leg's top face 0.1 inside its outer x edge."""
    lo, hi = leg["lo"], leg["hi"]
    outer, inward = (hi[0], -1.0) if hi[0] > 0 else (lo[0], 1.0)
    return (outer + inward * HINT_INSET, 0.5 * (lo[1] + hi[1]), z)


def _decoy_under(leg: dict, span_y: Tuple[float, float], top: float) -> dict:
    """Lying bar beside the -x face of ``leg``, its top ``top``."""
    x1 = leg["lo"][0] - DECOY_OFFSET
    return _box([x1 - BAR, span_y[0], top - BAR], [x1, span_y[1], top])


def table_spec(rng: np.random.Generator, decoys: bool = False) -> AssemblySpec:
    """Top resting on leg 0; the other three legs hang from the top."""
    half_x, half_y = 0.5, 0.4
    thickness = float(rng.choice([0.15, 0.2]))
    top_lo = 1.0 - thickness
    legs = _legs(half_x, half_y, -1.0, top_lo - CONTACT_GAP)
    top = _box([-half_x - OVERHANG, -half_y - OVERHANG, top_lo], [half_x + OVERHANG, half_y + OVERHANG, 1.0])
    parts = [legs[0], top] + legs[1:]
    leg0_hint = _leg_hint(legs[0], top_lo)
    contacts = [Contact(1, 0, leg0_hint)]
    contacts += [Contact(k, 1, _leg_hint(parts[k], top_lo - CONTACT_GAP)) for k in (2, 3, 4)]
    spec = AssemblySpec("table", parts, contacts)
    if decoys:
        spec.parts.append(
            _decoy_under(legs[0], (-half_y - OVERHANG, half_y + OVERHANG), top_lo - DECOY_GAP)
        )
        spec.decoys.append(Contact(1, len(spec.parts) - 1, leg0_hint))
    return spec


def chair_spec(count: int, rng: np.random.Generator, decoys: bool = False) -> AssemblySpec:
    """Seat on leg 0, three more legs and a back hanging from the seat, ground ornaments in a row."""
    half = 0.5
    seat_top = float(rng.choice([0.0, 0.1]))
    seat_lo = seat_top - 0.2
    legs = _legs(half, half, -1.0, seat_lo - CONTACT_GAP)
    seat = _box([-half - OVERHANG] * 2 + [seat_lo], [half + OVERHANG] * 2 + [seat_top])
    back_lo = seat_top + CONTACT_GAP
    back = _box([-half, -half, back_lo], [half, -half + BAR, 1.0])
    parts = [legs[0], seat] + legs[1:] + [back]
    seat_hint = (-half + HINT_INSET, -half + 0.5 * BAR, seat_lo)
    contacts = [Contact(1, 0, seat_hint)]
    contacts += [Contact(k, 1, _leg_hint(parts[k], seat_lo - CONTACT_GAP)) for k in (2, 3, 4)]
    contacts.append(Contact(5, 1, (0.0, -half + HINT_INSET, back_lo)))

    for i in range(count - len(parts)):
        x = -0.75 + 0.25 * i
        if i % 2 == 0:
            parts.append({"type": "sphere", "center": [x, ORNAMENT_ROW, -1.0 + ORNAMENT_RADIUS], "radius": ORNAMENT_RADIUS})
        else:
            parts.append({"type": "cylinder", "base": [x, ORNAMENT_ROW, -1.0], "radius": ORNAMENT_RADIUS, "height": 0.2})

    spec = AssemblySpec("chair", parts, contacts)
    if decoys:
        spec.parts.append(_decoy_under(legs[0], (-half - OVERHANG, half + OVERHANG), seat_lo - DECOY_GAP))
        spec.decoys.append(Contact(1, len(spec.parts) - 1, seat_hint))
    return spec


def component_count(index: int, seed: int) -> int:
    """Designed part count of corpus object ``index``: cycles through 2..12."""
    span = MAX_COMPONENTS - MIN_COMPONENTS + 1
    return MIN_COMPONENTS + (int(index) + int(seed)) % span


def assembly_spec(index: int, seed: int = 0, decoys: bool = False, collisions: bool = False) -> AssemblySpec:
    """Spec of corpus object ``index``: towers below 5 parts, a table at 5, chairs above."""
    rng = np.random.default_rng([int(seed), int(index)])
    count = component_count(index, seed)
    if count <= 4:
        spec = tower_spec(count, rng, decoys)
    elif count == 5:
        spec = table_spec(rng, decoys)
    else:
        spec = chair_spec(count, rng, decoys)
    if collisions:
        slab, hints = _sunk_slab(spec.parts[0])
        spec.parts.append(slab)
        spec.collisions.extend(Contact(len(spec.parts) - 1, 0, hint) for hint in hints)
    return spec


def _nearest_in(points: np.ndarray, members: np.ndarray, target) -> int:
    _, i = NNIndex(points[members]).query(np.asarray(target, dtype=np.float64).reshape(1, 3))
    return int(members[int(i[0])])


def build_assembly(spec: AssemblySpec, density: float = 1600.0, object_id: str = "synth") -> ObjectRecord:
    """
    Sample a spec into a normalized object with its ground truth.

    Parameters
    ----------
    spec : AssemblySpec
        Parts, contacts, decoys and planted collisions.
    density : float
        Surface points per unit area, at least 100.
    object_id : str
        Record id.

    Returns
    -------
    ObjectRecord
        Object (component ``k`` is part ``k``) plus ground truth: attachments,
        anchor pairs of every contact, decoy and planted collision.
    """
    spec.validate()
    h = lattice_step(density)
    points, normals, labels = [], [], []
    for k, part in enumerate(spec.parts):
        p, n = sample_primitive(part, h)
        points.append(p)
        normals.append(n)
        labels.append(np.full(len(p), k, dtype=np.int64))
    points = np.concatenate(points)
    normals = np.concatenate(normals)
    labels = np.concatenate(labels)
    members = [np.flatnonzero(labels == k) for k in range(len(spec.parts))]

    def anchored(contact: Contact) -> ContactSpec:
        child = _nearest_in(points, members[contact.child], contact.hint)
        other = _nearest_in(points, members[contact.other], points[child])
        return ContactSpec(contact.child, contact.other, child, other)

    truth = GroundTruth(
        kind=spec.kind,
        attachments=[(c.child, c.other) for c in spec.contacts],
        seams=[anchored(c) for c in spec.contacts],
        decoys=[anchored(c) for c in spec.decoys],
        collisions=[anchored(c) for c in spec.collisions],
        parts=[dict(p) for p in spec.parts],
    )
    obj = normalize(points, normals, labels)
    logger.debug(f"{object_id}: {spec.kind} with {len(spec.parts)} parts, {len(obj)} points")
    return ObjectRecord(object_id=object_id, obj=obj, truth=truth)


def object_id(index: int) -> str:
    return f"synth-{int(index):05d}"


def generate(
    index: int,
    seed: int = 0,
    density: float = 1600.0,
    decoys: bool = False,
    collisions: bool = False,
) -> ObjectRecord:
    """Corpus object ``index``; a pure function of its arguments."""
    return build_assembly(assembly_spec(index, seed, decoys, collisions), density, object_id(index))


def generate_corpus(
    n: int,
    seed: int = 0,
    density: float = 1600.0,
    decoys: bool = False,
    collisions: bool = False,
) -> List[ObjectRecord]:
    """``n`` assemblies in index order."""
    if n < 1:
        raise ConfigError(f"corpus size must be >= 1, got {n}")
    return [generate(i, seed, density, decoys, collisions) for i in range(int(n))]


def assembly_mesh(parts: Sequence[dict]) -> trimesh.Trimesh:
    """One mesh holding every part as a separate connected component."""
    return trimesh.util.concatenate([primitive_mesh(p) for p in parts])


def emit_obj(record: ObjectRecord, directory: str) -> Optional[str]:
    """Write the record's parts as ``<directory>/<object_id>.obj``; records without parts are skipped."""
    if record.truth is None or not record.truth.parts:
        return None
    return export_obj(assembly_mesh(record.truth.parts), os.path.join(directory, f"{record.object_id}.obj"))
