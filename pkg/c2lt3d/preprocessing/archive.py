"""
Object archives.

An archive is a JSON-lines file: a header line
``{"format":"c2lt-archive","version":1}`` followed by one record per object.
Records hold the normalized surface, optional synthetic ground truth, and
whatever later stages attached (partition, charts, seam candidates, stats).
Charts store neighbour ids only; their local coordinates are recomputed from
the surface on load.
"""

import json
import os
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from c2lt3d.core.chart import Chart
from c2lt3d.core.seam import Attachments, SeamCandidate
from c2lt3d.preprocessing.partition import Partition
from c2lt3d.preprocessing.surface import SurfaceObject
from c2lt3d.utils.errors import ArchiveError, DataError
from c2lt3d.utils.logger import get_logger

logger = get_logger(__name__)

ARCHIVE_FORMAT = "c2lt-archive"
ARCHIVE_VERSION = 1


@dataclass
class ContactSpec:
    """Two components and the point ids anchoring the charts that meet there."""

    child: int
    parent: int
    child_anchor: int
    parent_anchor: int

    def to_dict(self) -> dict:
        return {
            "child": int(self.child),
            "parent": int(self.parent),
            "child_anchor": int(self.child_anchor),
            "parent_anchor": int(self.parent_anchor),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ContactSpec":
        return cls(int(data["child"]), int(data["parent"]), int(data["child_anchor"]), int(data["parent_anchor"]))


@dataclass
class GroundTruth:
    kind: str
    attachments: List[tuple] = field(default_factory=list)
    seams: List[ContactSpec] = field(default_factory=list)
    decoys: List[ContactSpec] = field(default_factory=list)
    collisions: List[ContactSpec] = field(default_factory=list)
    parts: List[dict] = field(default_factory=list)

    @property
    def anchor_hints(self) -> List[int]:
        """Anchor ids of every declared contact, in declaration order, without repeats."""
        hints: List[int] = []
        for spec in self.seams + self.decoys + self.collisions:
            for i in (spec.child_anchor, spec.parent_anchor):
                if i not in hints:
                    hints.append(i)
        return hints

    def attached(self) -> Attachments:
        return Attachments(self.attachments)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "attachments": [[int(c), int(p)] for c, p in self.attachments],
            "seams": [s.to_dict() for s in self.seams],
            "decoys": [s.to_dict() for s in self.decoys],
            "collisions": [s.to_dict() for s in self.collisions],
            "parts": self.parts,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GroundTruth":
        return cls(
            kind=data["kind"],
            attachments=[(int(c), int(p)) for c, p in data.get("attachments", [])],
            seams=[ContactSpec.from_dict(s) for s in data.get("seams", [])],
            decoys=[ContactSpec.from_dict(s) for s in data.get("decoys", [])],
            collisions=[ContactSpec.from_dict(s) for s in data.get("collisions", [])],
            parts=list(data.get("parts", [])),
        )


@dataclass
class ObjectRecord:
    object_id: str
    obj: SurfaceObject
    truth: Optional[GroundTruth] = None
    partition: Optional[Partition] = None
    charts: List[Chart] = field(default_factory=list)
    candidates: List[SeamCandidate] = field(default_factory=list)
    stats: Dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "id": self.object_id,
            "object": self.obj.to_dict(),
            "truth": None if self.truth is None else self.truth.to_dict(),
            "partition": None if self.partition is None else self.partition.assign.tolist(),
            "charts": [c.to_dict() for c in self.charts],
            "candidates": [c.to_dict() for c in self.candidates],
            "stats": self.stats,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ObjectRecord":
        obj = SurfaceObject.from_dict(data["object"])
        truth = data.get("truth")
        partition = data.get("partition")
        return cls(
            object_id=str(data["id"]),
            obj=obj,
            truth=None if truth is None else GroundTruth.from_dict(truth),
            partition=None if partition is None else Partition(np.asarray(partition, dtype=np.int64)),
            charts=[Chart.from_dict(c, obj) for c in data.get("charts", [])],
            candidates=[SeamCandidate.from_dict(c) for c in data.get("candidates", [])],
            stats=data.get("stats", {}),
        )


def _header() -> str:
    return json.dumps({"format": ARCHIVE_FORMAT, "version": ARCHIVE_VERSION}, separators=(",", ":"))


def write_archive(records: Sequence[ObjectRecord], path: str) -> str:
    """
    Write records to ``path`` (parent directories are created).

    Records are written in the given order with sorted keys, so equal inputs
    give byte-identical files.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(_header() + "\n")
        for record in records:
            f.write(json.dumps(record.to_dict(), sort_keys=True, separators=(",", ":")) + "\n")
    logger.info(f"Wrote {len(records)} objects to {path}")
    return path


def iter_archive(path: str) -> Iterator[ObjectRecord]:
    """
    Stream the records of an archive.

    Raises
    ------
    ArchiveError
        Missing or mismatched header, or a truncated or corrupt record; the
        error carries the 1-based line number.
    """
    if not os.path.exists(path):
        raise DataError(f"archive not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline()
        if not first.strip():
            return
        try:
            header = json.loads(first)
        except json.JSONDecodeError as e:
            raise ArchiveError(f"archive header is not JSON: {e}", record=1) from e
        if not isinstance(header, dict) or header.get("format") != ARCHIVE_FORMAT:
            raise ArchiveError("not a c2lt archive", record=1)
        if header.get("version") != ARCHIVE_VERSION:
            raise ArchiveError(
                f"archive version {header.get('version')} is not supported (expected {ARCHIVE_VERSION})",
                record=1,
            )
        for line_no, line in enumerate(f, start=2):
            if not line.strip():
                continue
            if not line.endswith("\n"):
                raise ArchiveError("truncated record", record=line_no)
            try:
                yield ObjectRecord.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ArchiveError(f"corrupt record: {e}", record=line_no) from e


def read_archive(path: str) -> List[ObjectRecord]:
    """All records of an archive; an empty file holds zero objects."""
    records = list(iter_archive(path))
    logger.debug(f"Read {len(records)} objects from {path}")
    return records
