"""Directed call graphs from nested trace events, plus scalar graph features.

Graph construction follows the nesting structure of the event stream: every
entry or leaf event at depth d > 0 receives an edge from the innermost open
entry at depth d-1 within the same (cpu, pid) stream.  Nodes accumulate
invocation counts; exit and leaf durations accumulate into their symbol's
total duration.

Metric conventions (shortest paths treat the graph as simple and unweighted):

* betweenness: directed, endpoints excluded, normalized by (n-1)(n-2) for
  n >= 3 and defined as 0 below that;
* clustering: local coefficient on the undirected projection, 0 for
  degree < 2;
* avg_shortest_path: mean directed hop distance over ordered reachable
  distinct pairs, 0 when no such pair exists;
* scalars aggregate node values by unweighted mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .ingest import ENTRY, EXIT, LEAF, TraceEvent


@dataclass
class CallGraph:
    # symbol -> {"invocations": int, "total_duration_us": float}
    nodes: dict[str, dict] = field(default_factory=dict)
    # (caller, callee) -> {"count": int}
    edges: dict[tuple[str, str], dict] = field(default_factory=dict)

    @property
    def total_duration_us(self) -> float:
        return sum(n["total_duration_us"] for n in self.nodes.values())


@dataclass
class GraphMetrics:
    betweenness: float = 0.0
    clustering: float = 0.0
    avg_shortest_path: float = 0.0
    total_duration_us: float = 0.0


def build_graph(events: list[TraceEvent]) -> CallGraph:
    g = CallGraph()
    stacks: dict[tuple[int, int], list[str]] = {}

    def node(sym: str) -> dict:
        n = g.nodes.get(sym)
        if n is None:
            n = {"invocations": 0, "total_duration_us": 0.0}
            g.nodes[sym] = n
        return n

    for ev in events:
        stack = stacks.setdefault((ev.cpu, ev.pid), [])
        # windowed slices may begin mid-call; treat orphaned depth as root
        if ev.kind in (ENTRY, LEAF):
            n = node(ev.symbol)
            n["invocations"] += 1
            if ev.depth > 0 and stack:
                e = g.edges.get((stack[-1], ev.symbol))
                if e is None:
                    e = {"count": 0}
                    g.edges[(stack[-1], ev.symbol)] = e
                e["count"] += 1
            if ev.kind == ENTRY:
                stack.append(ev.symbol)
            else:
                n["total_duration_us"] += ev.dur_us or 0.0
        elif ev.kind == EXIT:
            if stack:
                stack.pop()
            if ev.symbol in g.nodes:
                g.nodes[ev.symbol]["total_duration_us"] += ev.dur_us or 0.0
    return g


def _csr(g: CallGraph) -> tuple[list[str], np.ndarray, np.ndarray,
                                np.ndarray, np.ndarray]:
    """Forward and reverse CSR adjacency in node insertion order."""
    names = list(g.nodes)
    index = {s: i for i, s in enumerate(names)}
    n = len(names)
    fwd: list[list[int]] = [[] for _ in range(n)]
    rev: list[list[int]] = [[] for _ in range(n)]
    for (a, b) in g.edges:
        fwd[index[a]].append(index[b])
        rev[index[b]].append(index[a])
    indptr = np.zeros(n + 1, np.int64)
    rindptr = np.zeros(n + 1, np.int64)
    for i in range(n):
        indptr[i + 1] = indptr[i] + len(fwd[i])
        rindptr[i + 1] = rindptr[i] + len(rev[i])
    indices = np.asarray([v for adj in fwd for v in adj], np.int64)
    rindices = np.asarray([v for adj in rev for v in adj], np.int64)
    return names, indptr, indices, rindptr, rindices


def betweenness(g: CallGraph) -> dict[str, float]:
    names, indptr, indices, rindptr, rindices = _csr(g)
    n = len(names)
    if n == 0:
        return {}
    if n < 3:
        return {s: 0.0 for s in names}
    raw = _kernels.betweenness_counts(indptr, indices, rindptr, rindices, n)
    norm = float((n - 1) * (n - 2))
    return {s: float(raw[i]) / norm for i, s in enumerate(names)}


def clustering(g: CallGraph) -> dict[str, float]:
    # undirected projection, self-loops ignored
    adj: dict[str, set[str]] = {s: set() for s in g.nodes}
    for (a, b) in g.edges:
        if a != b:
            adj[a].add(b)
            adj[b].add(a)
    out: dict[str, float] = {}
    for v, nbrs in adj.items():
        k = len(nbrs)
        if k < 2:
            out[v] = 0.0
            continue
        ns = sorted(nbrs)
        tri = 0
        for i in range(len(ns)):
            for j in range(i + 1, len(ns)):
                if ns[j] in adj[ns[i]]:
                    tri += 1
        out[v] = 2.0 * tri / (k * (k - 1))
    return out


def avg_shortest_path(g: CallGraph) -> float:
    names, indptr, indices, _, _ = _csr(g)
    n = len(names)
    if n < 2:
        return 0.0
    total, pairs = _kernels.distance_sums(indptr, indices, n)
    if pairs == 0:
        return 0.0
    return float(total) / float(pairs)


def aggregate_metrics(g: CallGraph) -> GraphMetrics:
    if not g.nodes:
        return GraphMetrics()
    bc = betweenness(g)
    cc = clustering(g)
    n = len(g.nodes)
    return GraphMetrics(
        betweenness=sum(bc.values()) / n,
        clustering=sum(cc.values()) / n,
        avg_shortest_path=avg_shortest_path(g),
        total_duration_us=g.total_duration_us,
    )


def dump_graph(g: CallGraph) -> str:
    """Adjacency text `caller -> callee [count]`, lexicographically sorted."""
    lines = [f"{a} -> {b} [{g.edges[(a, b)]['count']}]"
             for (a, b) in sorted(g.edges)]
    return "\n".join(lines) + ("\n" if lines else "")
