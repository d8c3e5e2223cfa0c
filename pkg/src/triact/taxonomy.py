"""Three-level action hierarchy (event / set / element) and label consistency.

The hierarchy is a forest rooted at event nodes: every set belongs to one
event, every element belongs to one set. Class ids are dense 0-based
integers within each level; names are metadata only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

LEVELS = ("event", "set", "element")


class TaxonomyError(ValueError):
    """Raised for structurally invalid hierarchies or labels."""


@dataclass(frozen=True)
class TaxonomyNode:
    id: int
    name: str
    level: str
    parent_id: Optional[int] = None


@dataclass(frozen=True)
class LabelTriple:
    event_id: int
    set_id: int
    element_id: int

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.event_id, self.set_id, self.element_id)


@dataclass(frozen=True)
class Taxonomy:
    """Immutable three-level hierarchy. Safe to share across threads."""

    events: tuple[TaxonomyNode, ...]
    sets: tuple[TaxonomyNode, ...]
    elements: tuple[TaxonomyNode, ...]
    # parent lookup tables, indexed by child id
    set_parent: tuple[int, ...] = field(init=False)
    element_parent: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "set_parent", tuple(n.parent_id for n in self.sets))
        object.__setattr__(
            self, "element_parent", tuple(n.parent_id for n in self.elements)
        )

    @property
    def class_counts(self) -> dict[str, int]:
        return {
            "event": len(self.events),
            "set": len(self.sets),
            "element": len(self.elements),
        }

    def nodes(self, level: str) -> tuple[TaxonomyNode, ...]:
        if level == "event":
            return self.events
        if level == "set":
            return self.sets
        if level == "element":
            return self.elements
        raise TaxonomyError(f"unknown level {level!r}")


def _check_level(level: str, nodes: Sequence[TaxonomyNode], parent_count: int) -> None:
    if not nodes:
        raise TaxonomyError(f"empty level {level!r}")
    seen = set()
    for node in nodes:
        if node.id in seen:
            raise TaxonomyError(f"duplicate id {node.id} within level {level!r}")
        seen.add(node.id)
    if seen != set(range(len(nodes))):
        raise TaxonomyError(
            f"ids in level {level!r} must be contiguous integers starting at 0, "
            f"got {sorted(seen)}"
        )
    for node in nodes:
        if level == "event":
            if node.parent_id is not None:
                raise TaxonomyError(f"event {node.id} must not have a parent")
        else:
            if node.parent_id is None:
                raise TaxonomyError(f"{level} {node.id} is missing a parent")
            if not 0 <= node.parent_id < parent_count:
                raise TaxonomyError(
                    f"dangling parent: {level} {node.id} references parent "
                    f"{node.parent_id}, valid range is [0, {parent_count})"
                )


def build_taxonomy(
    records: Iterable[tuple[str, int, str, Optional[int]]]
) -> Taxonomy:
    """Build and validate a Taxonomy from (level, id, name, parent_id) records.

    Record order does not matter; nodes are sorted by id within each level.
    Raises TaxonomyError on duplicate ids, non-contiguous ids, dangling
    parents, or an empty level.
    """
    by_level: dict[str, list[TaxonomyNode]] = {lvl: [] for lvl in LEVELS}
    for level, node_id, name, parent_id in records:
        if level not in LEVELS:
            raise TaxonomyError(f"unknown level {level!r}")
        by_level[level].append(TaxonomyNode(int(node_id), str(name), level, parent_id))
    for level in LEVELS:
        by_level[level].sort(key=lambda n: n.id)
    _check_level("event", by_level["event"], 0)
    _check_level("set", by_level["set"], len(by_level["event"]))
    _check_level("element", by_level["element"], len(by_level["set"]))
    return Taxonomy(
        events=tuple(by_level["event"]),
        sets=tuple(by_level["set"]),
        elements=tuple(by_level["element"]),
    )


def lift(element_id: int, taxonomy: Taxonomy) -> LabelTriple:
    """Return the unique consistent triple for an element by following parents."""
    n_elements = len(taxonomy.elements)
    if not 0 <= element_id < n_elements:
        raise TaxonomyError(
            f"element id {element_id} out of range [0, {n_elements})"
        )
    set_id = taxonomy.element_parent[element_id]
    event_id = taxonomy.set_parent[set_id]
    return LabelTriple(event_id=event_id, set_id=set_id, element_id=element_id)


def validate_triple(triple: LabelTriple, taxonomy: Taxonomy) -> bool:
    """True iff the triple's parent links hold. Out-of-range ids return False."""
    counts = taxonomy.class_counts
    if not 0 <= triple.element_id < counts["element"]:
        return False
    if not 0 <= triple.set_id < counts["set"]:
        return False
    if not 0 <= triple.event_id < counts["event"]:
        return False
    return (
        taxonomy.element_parent[triple.element_id] == triple.set_id
        and taxonomy.set_parent[triple.set_id] == triple.event_id
    )


def load_taxonomy(path: str | Path) -> Taxonomy:
    """Read a taxonomy file.

    One record per line: level, id, name, parent_id separated by tabs.
    parent_id is empty for events. Lines starting with '#' are comments.
    """
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise TaxonomyError(
                    f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}"
                )
            level, node_id, name, parent = parts
            parent_id = int(parent) if parent.strip() else None
            records.append((level.strip(), int(node_id), name, parent_id))
    return build_taxonomy(records)


def save_taxonomy(taxonomy: Taxonomy, path: str | Path) -> None:
    """Write a taxonomy file in the format read by load_taxonomy."""
    lines = ["# level\tid\tname\tparent_id"]
    for level in LEVELS:
        for node in taxonomy.nodes(level):
            parent = "" if node.parent_id is None else str(node.parent_id)
            lines.append(f"{node.level}\t{node.id}\t{node.name}\t{parent}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
