"""Attribute segment projection.

A segment map lists, per semantic attribute (position, velocity,
mass_inertia, force), the raw observation index ranges the server retains.
The projected observation concatenates the attributes in declaration order;
an active mask simply drops whole attributes before concatenation, so the
wire only ever carries retained dimensions.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

ATTRIBUTES = ("position", "velocity", "mass_inertia", "force")
MASKABLE = ("velocity", "mass_inertia", "force")


class SegmentMapError(ValueError):
    """The segment map is internally inconsistent or does not fit the env."""


def default_segment_map_path() -> Path:
    from importlib import resources

    return Path(str(resources.files("gymbridge").joinpath("data/humanoid_v4_segments.json")))


def load_segment_map(source: str | Path | dict) -> dict:
    if isinstance(source, dict):
        doc = source
    else:
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    attributes = doc.get("attributes")
    if not isinstance(attributes, list) or not attributes:
        raise SegmentMapError("segment map needs a non-empty 'attributes' list")
    for entry in attributes:
        name = entry.get("name")
        if name not in ATTRIBUTES:
            raise SegmentMapError(f"unknown attribute {name!r}")
        span = 0
        for lo, hi in entry.get("ranges", []):
            if not 0 <= lo < hi:
                raise SegmentMapError(f"bad range [{lo}, {hi}) in {name}")
            span += hi - lo
        if span != entry.get("length"):
            raise SegmentMapError(
                f"{name}: ranges cover {span} indices, declared length is "
                f"{entry.get('length')}"
            )
    return doc


class Projection:
    """Precomputed raw-index gather arrays, one per attribute."""

    def __init__(self, doc: dict):
        self.doc = doc
        self.order: list[str] = []
        self.indices: dict[str, np.ndarray] = {}
        for entry in doc["attributes"]:
            name = entry["name"]
            idx = np.concatenate(
                [np.arange(lo, hi, dtype=np.int64) for lo, hi in entry["ranges"]]
            )
            self.order.append(name)
            self.indices[name] = idx

    def lengths(self) -> dict[str, int]:
        return {name: int(self.indices[name].size) for name in self.order}

    def validate_against(self, raw_dim: int) -> None:
        """Abort with a diagnostic if the map does not fit the raw observation."""
        top = max(int(idx.max()) for idx in self.indices.values())
        if top >= raw_dim:
            raise SegmentMapError(
                f"segment map references raw index {top} but the environment's "
                f"raw observation has only {raw_dim} dimensions"
            )
        flat = np.concatenate([self.indices[a] for a in self.order])
        if len(np.unique(flat)) != len(flat):
            raise SegmentMapError("segment map ranges overlap")

    def projected_dim(self, removed: set[str]) -> int:
        return sum(
            int(self.indices[a].size) for a in self.order if a not in removed
        )

    def project(self, raw: np.ndarray, removed: set[str]) -> np.ndarray:
        keep = [self.indices[a] for a in self.order if a not in removed]
        return raw[np.concatenate(keep)]
