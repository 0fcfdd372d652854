"""Ontology loading, validation and subsetting.

Ontologies are read from a normalized JSON-Lines export, one concept per
line::

    {"id": "HP:0000118", "name": "Phenotypic abnormality",
     "synonyms": [], "parents": ["HP:0000001"], "obsolete": false}

Both tree-shaped (HPO) and multi-parent (HoIP) ontologies are supported.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

__all__ = [
    "Concept",
    "CycleError",
    "DanglingParentError",
    "NameRecord",
    "Ontology",
    "OntologyError",
    "OntologyParseError",
    "filter_descendants",
    "load_ontology",
    "name_table",
    "write_ontology",
]


class OntologyError(ValueError):
    """Base class for ontology validation failures."""


class OntologyParseError(OntologyError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class DanglingParentError(OntologyError):
    def __init__(self, offenders: list[tuple[str, str]]):
        listing = ", ".join(f"{c}->{p}" for c, p in offenders)
        super().__init__(f"unresolved parent references: {listing}")
        self.offenders = offenders


class CycleError(OntologyError):
    def __init__(self, cycle: list[str]):
        super().__init__("parent relation has a cycle: " + " -> ".join(cycle))
        self.cycle = cycle


@dataclass(frozen=True)
class Concept:
    id: str
    preferred_name: str
    synonyms: tuple[str, ...] = ()
    parents: tuple[str, ...] = ()
    obsolete: bool = False

    @property
    def names(self) -> tuple[str, ...]:
        return (self.preferred_name, *self.synonyms)


@dataclass(frozen=True)
class NameRecord:
    """One (concept, name) pair; ``row`` indexes an embedding matrix."""

    row: int
    concept: str
    text: str
    preferred: bool


@dataclass(frozen=True)
class Ontology:
    concepts: Mapping[str, Concept]
    roots: frozenset[str] = field(default=frozenset())

    def __post_init__(self):
        _validate(self.concepts)
        roots = frozenset(
            cid for cid, c in self.concepts.items()
            if not any(p in self.concepts for p in c.parents)
        )
        if self.concepts and not roots:
            raise OntologyError("ontology has no root concept")
        object.__setattr__(self, "roots", roots)

    def __len__(self) -> int:
        return len(self.concepts)

    def __contains__(self, cid: object) -> bool:
        return cid in self.concepts

    def __getitem__(self, cid: str) -> Concept:
        return self.concepts[cid]

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self.concepts))

    def active_ids(self) -> list[str]:
        """Sorted ids of non-obsolete concepts."""
        return sorted(cid for cid, c in self.concepts.items() if not c.obsolete)

    def children_map(self) -> dict[str, list[str]]:
        children: dict[str, list[str]] = {cid: [] for cid in self.concepts}
        for cid in sorted(self.concepts):
            for p in self.concepts[cid].parents:
                children[p].append(cid)
        return children

    def descendants(self, root: str) -> set[str]:
        """All concepts reachable from ``root`` along child links, root excluded."""
        if root not in self.concepts:
            raise KeyError(f"unknown concept {root!r}")
        children = self.children_map()
        seen: set[str] = set()
        queue = deque(children[root])
        while queue:
            cid = queue.popleft()
            if cid in seen:
                continue
            seen.add(cid)
            queue.extend(children[cid])
        return seen

    def topological_order(self) -> list[str]:
        """Parents before children; ties broken by id."""
        indegree = {cid: len(c.parents) for cid, c in self.concepts.items()}
        children = self.children_map()
        ready = sorted(cid for cid, d in indegree.items() if d == 0)
        order: list[str] = []
        queue = deque(ready)
        while queue:
            cid = queue.popleft()
            order.append(cid)
            for child in children[cid]:
                indegree[child] -= 1
                if indegree[child] == 0:
                    queue.append(child)
        if len(order) != len(self.concepts):
            raise CycleError(_find_cycle(self.concepts))
        return order


def _validate(concepts: Mapping[str, Concept]) -> None:
    dangling = []
    for cid in sorted(concepts):
        c = concepts[cid]
        if cid != c.id:
            raise OntologyError(f"key {cid!r} does not match concept id {c.id!r}")
        if cid in c.parents:
            raise OntologyError(f"{cid} lists itself as a parent")
        if len(set(c.parents)) != len(c.parents):
            raise OntologyError(f"{cid} has duplicate parents")
        if c.preferred_name in c.synonyms:
            raise OntologyError(f"{cid}: preferred name repeated among synonyms")
        dangling.extend((cid, p) for p in c.parents if p not in concepts)
    if dangling:
        raise DanglingParentError(dangling)
    cycle = _find_cycle(concepts)
    if cycle:
        raise CycleError(cycle)


def _find_cycle(concepts: Mapping[str, Concept]) -> list[str]:
    """Return one directed cycle along parent links, or [] if acyclic."""
    WHITE, GREY, BLACK = 0, 1, 2
    color = dict.fromkeys(concepts, WHITE)
    for start in sorted(concepts):
        if color[start] != WHITE:
            continue
        stack = [(start, iter(concepts[start].parents))]
        path = [start]
        color[start] = GREY
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                path.pop()
                color[node] = BLACK
            elif color[nxt] == GREY:
                return path[path.index(nxt):] + [nxt]
            elif color[nxt] == WHITE:
                color[nxt] = GREY
                path.append(nxt)
                stack.append((nxt, iter(concepts[nxt].parents)))
    return []


def _concept_from_json(obj: object, lineno: int) -> Concept:
    if not isinstance(obj, dict):
        raise OntologyParseError(lineno, "expected a JSON object")
    try:
        cid = obj["id"]
        name = obj["name"]
    except KeyError as exc:
        raise OntologyParseError(lineno, f"missing field {exc.args[0]!r}") from None
    if not isinstance(cid, str) or not cid or any(ch.isspace() for ch in cid):
        raise OntologyParseError(lineno, f"invalid concept id {cid!r}")
    if not isinstance(name, str) or not name.strip():
        raise OntologyParseError(lineno, f"{cid}: empty preferred name")
    synonyms = obj.get("synonyms") or []
    parents = obj.get("parents") or []
    obsolete = obj.get("obsolete", False)
    if not all(isinstance(s, str) for s in synonyms):
        raise OntologyParseError(lineno, f"{cid}: synonyms must be strings")
    if not all(isinstance(p, str) for p in parents):
        raise OntologyParseError(lineno, f"{cid}: parents must be strings")
    if not isinstance(obsolete, bool):
        raise OntologyParseError(lineno, f"{cid}: obsolete must be a boolean")
    if cid in parents:
        raise OntologyParseError(lineno, f"{cid} lists itself as a parent")
    # exports routinely repeat the label among synonyms; normalize rather than reject
    syn = tuple(dict.fromkeys(s for s in synonyms if s and s != name))
    return Concept(cid, name, syn, tuple(dict.fromkeys(parents)), obsolete)


def load_ontology(path: str | Path) -> Ontology:
    """Read and validate a JSONL ontology export."""
    concepts: dict[str, Concept] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise OntologyParseError(lineno, exc.msg) from None
            concept = _concept_from_json(obj, lineno)
            if concept.id in concepts:
                raise OntologyParseError(lineno, f"duplicate concept id {concept.id}")
            concepts[concept.id] = concept
    if not concepts:
        raise OntologyError(f"{path}: no concepts")
    return Ontology(concepts)


def write_ontology(o: Ontology, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for cid in o:
            c = o[cid]
            fh.write(json.dumps({
                "id": c.id, "name": c.preferred_name, "synonyms": list(c.synonyms),
                "parents": list(c.parents), "obsolete": c.obsolete,
            }, ensure_ascii=False) + "\n")


def filter_descendants(o: Ontology, root: str, drop_obsolete: bool = True) -> Ontology:
    """Sub-ontology of everything below ``root`` (root itself excluded).

    Parent lists are pruned to in-scope members. With ``drop_obsolete``
    obsolete concepts are removed and their children re-attached to the
    nearest kept ancestors along every path.
    """
    if root not in o:
        raise OntologyError(f"unknown root concept {root!r}")
    scope = o.descendants(root)
    keep = {c for c in scope if not (drop_obsolete and o[c].obsolete)}

    def kept_parents(cid: str) -> tuple[str, ...]:
        found: list[str] = []
        seen: set[str] = set()
        stack = list(reversed(o[cid].parents))
        while stack:
            p = stack.pop()
            if p in seen or p not in scope:
                continue
            seen.add(p)
            if p in keep:
                found.append(p)
            else:
                stack.extend(reversed(o[p].parents))
        return tuple(dict.fromkeys(found))

    concepts = {}
    for cid in sorted(keep):
        c = o[cid]
        concepts[cid] = Concept(cid, c.preferred_name, c.synonyms, kept_parents(cid), c.obsolete)
    if not concepts:
        raise OntologyError(f"{root} has no descendants")
    return Ontology(concepts)


def name_table(o: Ontology, include_obsolete: bool = True) -> list[NameRecord]:
    """One record per (concept, name) pair, rows numbered in output order.

    Order is by concept id, preferred name first, then synonyms ascending.
    Names shared by several concepts are kept once per concept.
    """
    records = []
    for cid in o:
        c = o[cid]
        if c.obsolete and not include_obsolete:
            continue
        records.append(NameRecord(len(records), cid, c.preferred_name, True))
        for syn in sorted(c.synonyms):
            records.append(NameRecord(len(records), cid, syn, False))
    return records


def ontology_from_parents(
    parents: Mapping[str, Iterable[str]],
    names: Mapping[str, str] | None = None,
) -> Ontology:
    """Build a small ontology from an id -> parents mapping (handy for tests)."""
    concepts = {
        cid: Concept(cid, (names or {}).get(cid, cid), (), tuple(ps))
        for cid, ps in parents.items()
    }
    return Ontology(concepts)
