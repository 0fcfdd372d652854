"""Recursive graph partitioning into a label tree.

Each connected node set larger than ``max_children`` is split by seeded
Louvain community detection. Communities are made connected (a
disconnected community is split into its components). When Louvain finds
no structure (a single community) the set is cut by greedy balanced
bisection with Kernighan-Lin style boundary refinement. When it finds too
many communities, the communities themselves are grouped by the same
bisection on the community quotient graph. Every resulting group is a
connected subgraph, so every internal node below a component root is
connected.

Disconnected inputs are handled at the top: components become siblings,
isolated nodes are pooled into their own group, and more than
``max_children`` siblings are packed into balanced bins.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
from collections import deque
from dataclasses import asdict, dataclass

import networkx as nx

from .graph import ConceptGraph
from .tree import LabelTree, TreeNode

__all__ = ["PartitionConfig", "partition"]

Adjacency = dict[str, dict[str, float]]


@dataclass(frozen=True)
class PartitionConfig:
    max_children: int = 10
    resolution: float = 1.0
    seed: int = 0
    balance_tolerance: float = 0.1
    refine_passes: int = 4

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


def _adjacency(g: ConceptGraph) -> Adjacency:
    adj: Adjacency = {n: {} for n in g.nodes}
    for (a, b), w in g.edges.items():
        adj[a][b] = w
        adj[b][a] = w
    return adj


def _components(adj: Adjacency, nodes: set[str]) -> list[set[str]]:
    """Connected components of the induced subgraph, ordered by smallest id."""
    seen: set[str] = set()
    comps = []
    for start in sorted(nodes):
        if start in seen:
            continue
        comp = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v in nodes and v not in comp:
                    comp.add(v)
                    queue.append(v)
        seen |= comp
        comps.append(comp)
    return comps


def _leaf_group(nodes) -> TreeNode:
    return TreeNode(children=[TreeNode(concept=c) for c in sorted(nodes)])


class _Partitioner:
    def __init__(self, adj: Adjacency, cfg: PartitionConfig):
        self.adj = adj
        self.cfg = cfg
        self.m = cfg.max_children
        # (tree node to fill, node set, kind); kind is "connected" or "loose"
        self.tasks: list[tuple[TreeNode, set[str], str]] = []

    def run(self, nodes: set[str]) -> TreeNode:
        root = TreeNode()
        if len(nodes) <= self.m:
            return _leaf_group(nodes)
        comps = _components(self.adj, nodes)
        if len(comps) == 1:
            self.tasks.append((root, nodes, "connected"))
        else:
            items = [(c, "connected") for c in comps if len(c) > 1]
            isolated = set().union(*(c for c in comps if len(c) == 1))
            if isolated:
                items.append((isolated, "loose"))
            self._pack(root, items)
        while self.tasks:
            node, members, kind = self.tasks.pop()
            if kind == "connected":
                self._split_connected(node, members)
            else:
                self._split_loose(node, members)
        return root

    def _child(self, members: set[str], kind: str) -> TreeNode:
        if len(members) == 1:
            return TreeNode(concept=next(iter(members)))
        if len(members) <= self.m:
            return _leaf_group(members)
        node = TreeNode()
        self.tasks.append((node, members, kind))
        return node

    def _pack(self, node: TreeNode, items: list[tuple[set[str], str]]) -> None:
        """Attach sub-problems as children, binning them when there are too many."""
        if len(items) <= self.m:
            node.children = [self._child(members, kind) for members, kind in items]
            return
        bins: list[list[tuple[set[str], str]]] = [[] for _ in range(self.m)]
        loads = [0] * self.m
        for item in sorted(items, key=lambda it: (-len(it[0]), min(it[0]))):
            b = min(range(self.m), key=lambda i: (loads[i], i))
            bins[b].append(item)
            loads[b] += len(item[0])
        for b in bins:
            if len(b) == 1:
                node.children.append(self._child(*b[0]))
            else:
                child = TreeNode()
                self._pack(child, b)
                node.children.append(child)

    def _split_loose(self, node: TreeNode, members: set[str]) -> None:
        ordered = sorted(members)
        k = min(self.m, math.ceil(len(ordered) / self.m))
        size = math.ceil(len(ordered) / k)
        for i in range(0, len(ordered), size):
            node.children.append(self._child(set(ordered[i:i + size]), "loose"))

    def _split_connected(self, node: TreeNode, members: set[str]) -> None:
        parts = self._louvain(members)
        if parts is None:
            parts = self._fallback(members, {n: 1 for n in members}, self._sub_adj(members))
        for p in sorted(parts, key=min):
            node.children.append(self._child(p, "connected"))

    def _sub_adj(self, members: set[str]) -> Adjacency:
        return {u: {v: w for v, w in self.adj[u].items() if v in members} for u in members}

    def _louvain(self, members: set[str]) -> list[set[str]] | None:
        sub = self._sub_adj(members)
        g = nx.Graph()
        g.add_nodes_from(sorted(members))
        for u in sorted(sub):
            for v in sorted(sub[u]):
                if u < v:
                    g.add_edge(u, v, weight=sub[u][v])
        comms = nx.community.louvain_communities(
            g, weight="weight", resolution=self.cfg.resolution, seed=self.cfg.seed)
        parts: list[set[str]] = []
        for c in comms:
            parts.extend(_components(sub, set(c)))
        parts.sort(key=min)
        if len(parts) == 1:
            return None
        if len(parts) <= self.m:
            return parts
        # too many communities: group them on the quotient graph
        label = {n: i for i, p in enumerate(parts) for n in p}
        q: Adjacency = {str(i): {} for i in range(len(parts))}
        for u in sub:
            for v, w in sub[u].items():
                a, b = label[u], label[v]
                if a != b:
                    q[str(a)][str(b)] = q[str(a)].get(str(b), 0.0) + w
        weights = {str(i): len(p) for i, p in enumerate(parts)}
        groups = self._fallback(set(q), weights, q, target=self.m)
        return [set().union(*(parts[int(i)] for i in grp)) for grp in groups]

    def _fallback(self, members: set[str], weight: dict[str, int], adj: Adjacency,
                  target: int | None = None) -> list[set[str]]:
        """Recursive balanced bisection into between 2 and max_children connected parts."""
        total = sum(weight[n] for n in members)
        if target is None:
            target = max(2, math.ceil(total / self.m))
        target = min(target, self.m, len(members))
        parts = [set(members)]
        while len(parts) < target:
            splittable = [p for p in parts if len(p) > 1]
            if not splittable:
                break
            big = min(splittable, key=lambda p: (-sum(weight[n] for n in p), len(p), min(p)))
            parts.remove(big)
            allowed = self.m - len(parts)
            parts.extend(self._bisect(big, weight, adj, allowed))
        return parts

    def _bisect(self, members: set[str], weight: dict[str, int], adj: Adjacency,
                max_pieces: int) -> list[set[str]]:
        total = sum(weight[n] for n in members)
        start = _pseudo_peripheral(adj, members)
        region = _grow(adj, members, weight, start, total / 2)
        rest = members - region
        comps = sorted(_components(adj, rest), key=lambda c: (-len(c), min(c)))
        keep = comps[:max_pieces - 1]
        for c in comps[max_pieces - 1:]:
            region |= c
        if len(keep) == 1:
            region, other = _refine(adj, region, keep[0], weight, self.cfg)
            keep = [other]
        return [region, *keep]


def _bfs_far(adj: Adjacency, members: set[str], start: str) -> str:
    dist = {start: 0}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in sorted(adj[u]):
            if v in members and v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    best = max(dist.values())
    return min(n for n, d in dist.items() if d == best)


def _pseudo_peripheral(adj: Adjacency, members: set[str]) -> str:
    return _bfs_far(adj, members, _bfs_far(adj, members, min(members)))


def _grow(adj: Adjacency, members: set[str], weight: dict[str, int], start: str,
          goal: float) -> set[str]:
    """Greedy graph growing: absorb the frontier node with the best cut gain."""
    region = {start}
    load = weight[start]
    to_region: dict[str, float] = {}
    degree = {u: sum(w for v, w in adj[u].items() if v in members) for u in members}
    heap: list[tuple[float, str]] = []

    def touch(u: str) -> None:
        for v, w in adj[u].items():
            if v in members and v not in region:
                to_region[v] = to_region.get(v, 0.0) + w
                heapq.heappush(heap, (-(2 * to_region[v] - degree[v]), v))

    touch(start)
    while heap and load < goal:
        gain, v = heapq.heappop(heap)
        if v in region or -gain != 2 * to_region[v] - degree[v]:
            continue
        if load + weight[v] > goal and load + weight[v] - goal > goal - load:
            break
        region.add(v)
        load += weight[v]
        touch(v)
    return region


def _connected_without(adj: Adjacency, side: set[str], v: str) -> bool:
    rest = side - {v}
    if not rest:
        return False
    start = next(iter(rest))
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for x in adj[u]:
            if x in rest and x not in seen:
                seen.add(x)
                queue.append(x)
    return len(seen) == len(rest)


def _refine(adj: Adjacency, a: set[str], b: set[str], weight: dict[str, int],
            cfg: PartitionConfig) -> tuple[set[str], set[str]]:
    """Boundary moves that cut less weight while keeping both sides balanced and connected."""
    a, b = set(a), set(b)
    total = sum(weight[n] for n in a) + sum(weight[n] for n in b)
    slack = max(1.0, cfg.balance_tolerance * total)
    load = {0: sum(weight[n] for n in a), 1: sum(weight[n] for n in b)}
    sides = (a, b)
    for _ in range(cfg.refine_passes):
        moved = False
        for src in (0, 1):
            own, other = sides[src], sides[1 - src]
            candidates = []
            for u in sorted(own):
                ext = sum(w for v, w in adj[u].items() if v in other)
                if ext == 0:
                    continue
                internal = sum(w for v, w in adj[u].items() if v in own)
                if ext > internal:
                    candidates.append((internal - ext, u))
            for _, u in sorted(candidates):
                if u not in own:
                    continue
                ext = sum(w for v, w in adj[u].items() if v in other)
                internal = sum(w for v, w in adj[u].items() if v in own)
                if ext <= internal:
                    continue
                new_src, new_dst = load[src] - weight[u], load[1 - src] + weight[u]
                if abs(new_src - new_dst) > max(slack, abs(load[src] - load[1 - src])):
                    continue
                if not _connected_without(adj, own, u):
                    continue
                own.remove(u)
                other.add(u)
                load[src], load[1 - src] = new_src, new_dst
                moved = True
        if not moved:
            break
    return a, b


def partition(g: ConceptGraph, cfg: PartitionConfig | None = None) -> LabelTree:
    """Recursively partition ``g`` into a label tree with bounded branching."""
    cfg = cfg or PartitionConfig()
    if not g.nodes:
        raise ValueError("cannot partition an empty graph")
    root = _Partitioner(_adjacency(g), cfg).run(set(g.nodes))
    return LabelTree(root, cfg.max_children)
