"""Hierarchical label trees and digit-path concept indices.

Every concept sits at exactly one leaf; its index is the sequence of child
positions from the root down to that leaf (``0-0-3`` style when printed).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

__all__ = [
    "ChecksumMismatch",
    "LabelTree",
    "TreeFileError",
    "TreeNode",
    "VersionMismatch",
    "assign_indices",
    "format_index",
    "load_tree",
    "parse_index",
    "save_tree",
    "write_index_tsv",
]

TREE_FILE_VERSION = 1

Index = tuple[int, ...]


class TreeFileError(ValueError):
    pass


class VersionMismatch(TreeFileError):
    pass


class ChecksumMismatch(TreeFileError):
    pass


@dataclass
class TreeNode:
    concept: str | None = None
    children: list["TreeNode"] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return self.concept is not None

    def leaves(self) -> Iterator[str]:
        stack = [self]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                yield node.concept
            else:
                stack.extend(reversed(node.children))

    def min_concept(self) -> str:
        return min(self.leaves())

    def to_nested(self):
        if self.is_leaf:
            return self.concept
        return [c.to_nested() for c in self.children]

    @classmethod
    def from_nested(cls, obj) -> "TreeNode":
        if isinstance(obj, str):
            return cls(concept=obj)
        if not isinstance(obj, list):
            raise TreeFileError(f"bad tree node {obj!r}")
        return cls(children=[cls.from_nested(c) for c in obj])


def format_index(index: Sequence[int]) -> str:
    return "-".join(str(d) for d in index)


def parse_index(text: str) -> Index:
    text = text.strip()
    if not text:
        return ()
    digits = tuple(int(p) for p in text.split("-"))
    if any(d < 0 or d > 9 for d in digits):
        raise ValueError(f"index digits must be 0-9: {text!r}")
    return digits


class LabelTree:
    """A rooted tree whose leaves are concepts.

    Children are kept in canonical order (ascending smallest concept id in
    the subtree), so positions double as index digits.
    """

    def __init__(self, root: TreeNode, max_children: int = 10):
        if root.is_leaf:
            root = TreeNode(children=[root])
        self.root = root
        self.max_children = max_children
        self._check()
        _canonicalize(root)
        self._sizes: dict[int, int] = {}
        for node in _postorder(root):
            self._sizes[id(node)] = 1 if node.is_leaf else sum(
                self._sizes[id(c)] for c in node.children)
        self.index: dict[str, Index] = {}
        self._number(root, ())

    def _check(self) -> None:
        seen: set[str] = set()
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                if node.children:
                    raise ValueError(f"leaf {node.concept} has children")
                if node.concept in seen:
                    raise ValueError(f"concept {node.concept} appears in two leaves")
                seen.add(node.concept)
                continue
            if not 1 <= len(node.children) <= self.max_children:
                raise ValueError(
                    f"internal node with {len(node.children)} children "
                    f"(allowed 1..{self.max_children})")
            stack.extend(node.children)
        if not seen:
            raise ValueError("tree has no leaves")

    def _number(self, node: TreeNode, prefix: Index) -> None:
        stack = [(node, prefix)]
        while stack:
            n, p = stack.pop()
            if n.is_leaf:
                self.index[n.concept] = p
            else:
                for i, child in enumerate(n.children):
                    stack.append((child, p + (i,)))

    @property
    def size(self) -> int:
        """T: number of leaf concepts."""
        return self._sizes[id(self.root)]

    def concepts(self) -> list[str]:
        return sorted(self.index)

    def node_at(self, prefix: Sequence[int]) -> TreeNode | None:
        node = self.root
        for d in prefix:
            if node.is_leaf or not 0 <= d < len(node.children):
                return None
            node = node.children[d]
        return node

    def decode(self, index: Sequence[int]) -> str | None:
        """Concept at the leaf addressed by ``index``, or None."""
        node = self.node_at(index)
        if node is None or not node.is_leaf:
            return None
        return node.concept

    def count_prefix(self, prefix: Sequence[int]) -> int:
        node = self.node_at(prefix)
        if node is None:
            raise KeyError(f"no tree node at prefix {format_index(prefix)!r}")
        return self._sizes[id(node)]

    def internal_nodes(self) -> Iterator[tuple[Index, TreeNode]]:
        stack: list[tuple[Index, TreeNode]] = [((), self.root)]
        while stack:
            p, node = stack.pop()
            if node.is_leaf:
                continue
            yield p, node
            for i, c in enumerate(node.children):
                stack.append((p + (i,), c))

    def depth_stats(self) -> tuple[float, int]:
        lengths = [len(i) for i in self.index.values()]
        return sum(lengths) / len(lengths), max(lengths)

    def to_nested(self):
        return self.root.to_nested()

    def __eq__(self, other: object) -> bool:
        return isinstance(other, LabelTree) and self.to_nested() == other.to_nested()

    def __repr__(self) -> str:
        mean, deepest = self.depth_stats()
        return f"LabelTree(T={self.size}, mean_depth={mean:.2f}, max_depth={deepest})"


def _postorder(root: TreeNode) -> list[TreeNode]:
    out: list[TreeNode] = []
    stack = [root]
    while stack:
        node = stack.pop()
        out.append(node)
        stack.extend(node.children)
    out.reverse()
    return out


def _canonicalize(root: TreeNode) -> None:
    """Sort children by smallest contained concept id."""
    smallest: dict[int, str] = {}
    for node in _postorder(root):
        if node.is_leaf:
            smallest[id(node)] = node.concept
            continue
        node.children.sort(key=lambda c: smallest[id(c)])
        smallest[id(node)] = smallest[id(node.children[0])]


def assign_indices(tree: LabelTree) -> dict[str, Index]:
    """Concept id -> digit path, children numbered in canonical order."""
    return dict(sorted(tree.index.items()))


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _checksum(fingerprint: str, nested) -> str:
    payload = _canonical_json({"config": fingerprint, "tree": nested})
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def save_tree(tree: LabelTree, path: str | Path, fingerprint: str = "") -> None:
    nested = tree.to_nested()
    doc = {
        "version": TREE_FILE_VERSION,
        "config": fingerprint,
        "max_children": tree.max_children,
        "checksum": _checksum(fingerprint, nested),
        "tree": nested,
    }
    Path(path).write_text(_canonical_json(doc) + "\n", encoding="utf-8")


def load_tree(path: str | Path) -> tuple[LabelTree, dict[str, Index]]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TreeFileError(f"{path}: unreadable tree file ({exc})") from None
    if not isinstance(doc, dict) or doc.get("version") != TREE_FILE_VERSION:
        raise VersionMismatch(
            f"{path}: expected version {TREE_FILE_VERSION}, got {doc.get('version') if isinstance(doc, dict) else None}")
    fingerprint = doc.get("config", "")
    if _checksum(fingerprint, doc.get("tree")) != doc.get("checksum"):
        raise ChecksumMismatch(f"{path}: checksum mismatch")
    tree = LabelTree(TreeNode.from_nested(doc["tree"]), doc.get("max_children", 10))
    return tree, assign_indices(tree)


def write_index_tsv(indices: dict[str, Index], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for cid in sorted(indices):
            fh.write(f"{cid}\t{format_index(indices[cid])}\n")


def read_index_tsv(path: str | Path) -> dict[str, Index]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                cid, idx = line.rstrip("\n").split("\t")
                out[cid] = parse_index(idx)
    return out
