"""Restricted path sets: k shortest loopless paths per OD pair.

Paths are enumerated once at zero flow (free-flow latencies) and then frozen.
Ties between equal-cost paths are broken by the lexicographic order of their
edge-id sequences so enumeration is deterministic.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .net_model import Network, ODPair

__all__ = [
    "NoPathError",
    "Path",
    "PathSet",
    "shortest_path",
    "k_shortest_paths",
    "build_pathset",
    "path_cost",
    "format_path_dump",
    "parse_path_dump",
]


class NoPathError(ValueError):
    def __init__(self, origin: int, destination: int, pair_index: int | None = None) -> None:
        self.origin = origin
        self.destination = destination
        self.pair_index = pair_index
        label = f"pair {pair_index} " if pair_index is not None else ""
        super().__init__(f"no path for {label}({origin} -> {destination})")


@dataclass(frozen=True)
class Path:
    pair_index: int
    edges: tuple[int, ...]


def path_cost(edges: Iterable[int], edge_costs: Sequence[float]) -> float:
    return math.fsum(edge_costs[e] for e in edges)


def _dijkstra(
    net: Network,
    origin: int,
    dest: int,
    edge_costs: Sequence[float],
    banned_nodes: frozenset[int] = frozenset(),
    banned_edges: frozenset[int] = frozenset(),
) -> tuple[float, tuple[int, ...]] | None:
    # heap entries carry the edge sequence so equal costs pop in lexicographic order
    best: dict[int, tuple[float, tuple[int, ...]]] = {origin: (0.0, ())}
    heap: list[tuple[float, tuple[int, ...], int]] = [(0.0, (), origin)]
    done: set[int] = set()
    adj = net.out_edges
    while heap:
        cost, edges, node = heapq.heappop(heap)
        if node in done:
            continue
        done.add(node)
        if node == dest:
            return cost, edges
        for e in adj.get(node, ()):
            nxt = e.head
            if nxt in done or nxt in banned_nodes or e.id in banned_edges:
                continue
            label = (cost + edge_costs[e.id], edges + (e.id,))
            if nxt not in best or label < best[nxt]:
                best[nxt] = label
                heapq.heappush(heap, (label[0], label[1], nxt))
    return None


def _check_costs(net: Network, edge_costs: Sequence[float]) -> np.ndarray:
    costs = np.asarray(edge_costs, dtype=float)
    if costs.shape != (len(net.edges),):
        raise ValueError(f"expected {len(net.edges)} edge costs, got shape {costs.shape}")
    if np.any(costs < 0) or not np.all(np.isfinite(costs)):
        raise ValueError("edge costs must be finite and nonnegative")
    return costs


def shortest_path(
    net: Network, origin: int, dest: int, edge_costs: Sequence[float], pair_index: int = -1
) -> Path:
    """Minimum-cost path by Dijkstra (lazy deletion)."""
    if origin == dest:
        raise ValueError("origin and destination must differ")
    costs = _check_costs(net, edge_costs)
    found = _dijkstra(net, origin, dest, costs.tolist())
    if found is None:
        raise NoPathError(origin, dest, pair_index if pair_index >= 0 else None)
    return Path(pair_index, found[1])


def k_shortest_paths(
    net: Network, pair: ODPair, k: int, edge_costs: Sequence[float], pair_index: int = -1
) -> list[Path]:
    """Yen's algorithm: up to ``k`` loopless paths in nondecreasing cost order."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    costs = _check_costs(net, edge_costs).tolist()
    first = _dijkstra(net, pair.origin, pair.destination, costs)
    if first is None:
        raise NoPathError(pair.origin, pair.destination, pair_index if pair_index >= 0 else None)

    heads = {e.id: e.head for e in net.edges}
    accepted: list[tuple[int, ...]] = [first[1]]
    candidates: list[tuple[float, tuple[int, ...]]] = []
    seen: set[tuple[int, ...]] = {first[1]}
    while len(accepted) < k:
        prev = accepted[-1]
        nodes = [pair.origin] + [heads[e] for e in prev]
        for i in range(len(prev)):
            root = prev[:i]
            banned_edges = frozenset(p[i] for p in accepted if len(p) > i and p[:i] == root)
            spur = _dijkstra(
                net, nodes[i], pair.destination, costs,
                banned_nodes=frozenset(nodes[:i]), banned_edges=banned_edges,
            )
            if spur is None:
                continue
            full = root + spur[1]
            if full not in seen:
                seen.add(full)
                heapq.heappush(candidates, (path_cost(full, costs), full))
        if not candidates:
            break
        accepted.append(heapq.heappop(candidates)[1])
    ranked = sorted(accepted, key=lambda p: (path_cost(p, costs), p))
    return [Path(pair_index, p) for p in ranked]


@dataclass(frozen=True)
class PathSet:
    """Paths of every OD pair, stored flat and grouped by pair.

    ``paths`` lists pair 0's paths first, then pair 1's and so on;
    ``offsets[k]:offsets[k+1]`` slices out pair ``k``.
    """

    paths: tuple[Path, ...]
    offsets: tuple[int, ...]
    n_edges: int
    demands: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.offsets) != len(self.demands) + 1:
            raise ValueError("offsets must have one entry per pair plus one")
        for k in range(self.n_pairs):
            lo, hi = self.offsets[k], self.offsets[k + 1]
            if hi <= lo:
                raise ValueError(f"pair {k} has no paths")
            group = [p.edges for p in self.paths[lo:hi]]
            if len(set(group)) != len(group):
                raise ValueError(f"pair {k} has duplicate paths")
            if any(p.pair_index != k for p in self.paths[lo:hi]):
                raise ValueError(f"pair {k} slice holds paths of another pair")

    @classmethod
    def from_groups(cls, groups: Sequence[Sequence[Path]], n_edges: int, demands: Sequence[float]) -> "PathSet":
        offsets = [0]
        for g in groups:
            offsets.append(offsets[-1] + len(g))
        return cls(tuple(p for g in groups for p in g), tuple(offsets), n_edges, tuple(float(d) for d in demands))

    @property
    def n_pairs(self) -> int:
        return len(self.demands)

    @property
    def n_paths(self) -> int:
        return len(self.paths)

    def pair_paths(self, k: int) -> tuple[Path, ...]:
        return self.paths[self.offsets[k]:self.offsets[k + 1]]

    @cached_property
    def path_pair(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_pairs), np.diff(self.offsets))

    @cached_property
    def demand_array(self) -> np.ndarray:
        return np.array(self.demands, dtype=float)

    @cached_property
    def incidence(self) -> dict[int, tuple[int, ...]]:
        """Edge id -> indices of the paths using it (edges used by no path omitted)."""
        inc: dict[int, list[int]] = {}
        for j, p in enumerate(self.paths):
            for e in p.edges:
                inc.setdefault(e, []).append(j)
        return {e: tuple(v) for e, v in sorted(inc.items())}

    @cached_property
    def matrix(self) -> sparse.csr_matrix:
        """Edge-by-path 0/1 incidence matrix."""
        rows = [e for p in self.paths for e in p.edges]
        cols = [j for j, p in enumerate(self.paths) for _ in p.edges]
        data = np.ones(len(rows))
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n_edges, self.n_paths))

    @cached_property
    def matrix_t(self) -> sparse.csr_matrix:
        return self.matrix.T.tocsr()

    def edge_flows(self, path_flows: np.ndarray) -> np.ndarray:
        return self.matrix @ path_flows

    def path_sums(self, edge_values: np.ndarray) -> np.ndarray:
        """Sum an edge quantity along every path."""
        return self.matrix_t @ edge_values

    def pair_sums(self, path_values: np.ndarray) -> np.ndarray:
        return np.bincount(self.path_pair, weights=path_values, minlength=self.n_pairs)

    def pair_min(self, path_values: np.ndarray) -> np.ndarray:
        if self.n_pairs == 0:
            return np.zeros(0)
        return np.minimum.reduceat(path_values, np.asarray(self.offsets[:-1], dtype=np.intp))

    def pair_argmin(self, path_values: np.ndarray) -> np.ndarray:
        """Flat index of the first minimum-value path of each pair."""
        out = np.empty(self.n_pairs, dtype=int)
        for k in range(self.n_pairs):
            lo, hi = self.offsets[k], self.offsets[k + 1]
            out[k] = lo + int(np.argmin(path_values[lo:hi]))
        return out

    def all_or_nothing(self, path_values: np.ndarray) -> np.ndarray:
        """Full demand of each pair on its cheapest path."""
        out = np.zeros(self.n_paths)
        out[self.pair_argmin(path_values)] = self.demand_array
        return out


def build_pathset(net: Network, k: int) -> PathSet:
    """k shortest zero-flow paths for every OD pair of ``net``."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    costs = net.free_flow_costs()
    groups = [k_shortest_paths(net, od, k, costs, pair_index=i) for i, od in enumerate(net.od_pairs)]
    return PathSet.from_groups(groups, len(net.edges), [od.demand for od in net.od_pairs])


def format_path_dump(pathset: PathSet, edge_costs: Sequence[float]) -> str:
    """One ``pair<TAB>cost<TAB>e,e,...`` line per path."""
    lines = [
        f"{p.pair_index}\t{path_cost(p.edges, edge_costs):.9g}\t{','.join(str(e) for e in p.edges)}"
        for p in pathset.paths
    ]
    return "\n".join(lines) + "\n"


def parse_path_dump(text: str) -> list[tuple[int, float, tuple[int, ...]]]:
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        pair, cost, edges = line.split("\t")
        out.append((int(pair), float(cost), tuple(int(e) for e in edges.split(","))))
    return out
