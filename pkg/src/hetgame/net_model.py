"""Traffic network representation and TNTP-format parsing.

Edge latencies come in two closed-form families, ``Linear`` (``a*f + b``) and
``Polynomial`` (BPR form ``d*(1 + b*(f/c)**a)``). Both reduce to the common
shape ``free + coef * f**power`` which is what the vectorised
:class:`LatencyArrays` uses inside the solvers.
"""

from __future__ import annotations

import io
import logging
import os
import re
from dataclasses import dataclass
from functools import cached_property
from typing import IO, Iterable, Union

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "Linear",
    "Polynomial",
    "LatencyFunction",
    "LatencyArrays",
    "Node",
    "Edge",
    "ODPair",
    "Network",
    "ParseError",
    "latency_eval",
    "latency_integral",
    "latency_marginal",
    "parse_network",
    "read_network",
    "serialize_network",
]


def _check_flow(f: float) -> None:
    if f < 0:
        raise ValueError(f"edge flow must be nonnegative, got {f!r}")


@dataclass(frozen=True)
class Linear:
    """Linear latency ``a*f + b``; ``b`` is the free-flow time."""

    a: float
    b: float

    def __post_init__(self) -> None:
        if self.a < 0 or self.b < 0:
            raise ValueError(f"Linear latency needs a >= 0 and b >= 0, got a={self.a}, b={self.b}")

    @property
    def free(self) -> float:
        return float(self.b)

    @property
    def coef(self) -> float:
        return float(self.a)

    @property
    def power(self) -> float:
        return 1.0


@dataclass(frozen=True)
class Polynomial:
    """BPR-style latency ``d*(1 + b*(f/c)**a)``."""

    d: float
    b: float
    c: float
    a: float

    def __post_init__(self) -> None:
        if self.d < 0 or self.b < 0:
            raise ValueError(f"Polynomial latency needs d >= 0 and b >= 0, got d={self.d}, b={self.b}")
        if not self.c > 0:
            raise ValueError(f"Polynomial latency needs capacity c > 0, got {self.c}")
        if self.a < 1:
            raise ValueError(f"Polynomial latency needs exponent a >= 1, got {self.a}")

    @property
    def free(self) -> float:
        return float(self.d)

    @property
    def coef(self) -> float:
        return float(self.d * self.b / self.c**self.a)

    @property
    def power(self) -> float:
        return float(self.a)


LatencyFunction = Union[Linear, Polynomial]


def latency_eval(l: LatencyFunction, f: float) -> float:
    """Latency of an edge carrying flow ``f``."""
    _check_flow(f)
    if isinstance(l, Linear):
        return l.a * f + l.b
    return l.d * (1.0 + l.b * (f / l.c) ** l.a)


def latency_integral(l: LatencyFunction, f: float) -> float:
    """Beckmann term: integral of the latency from 0 to ``f``."""
    _check_flow(f)
    if isinstance(l, Linear):
        return 0.5 * l.a * f * f + l.b * f
    return l.d * f + l.d * l.b * f ** (l.a + 1) / (l.c**l.a * (l.a + 1))


def latency_marginal(l: LatencyFunction, f: float) -> float:
    """Marginal social cost ``d/df [f * l(f)]``."""
    _check_flow(f)
    if isinstance(l, Linear):
        return 2.0 * l.a * f + l.b
    return l.d * (1.0 + l.b * (l.a + 1) * (f / l.c) ** l.a)


@dataclass(frozen=True)
class LatencyArrays:
    """Vectorised latencies ``free + coef * f**power`` for every edge."""

    free: np.ndarray
    coef: np.ndarray
    power: np.ndarray

    @classmethod
    def from_functions(cls, functions: Iterable[LatencyFunction]) -> "LatencyArrays":
        fns = list(functions)
        return cls(
            free=np.array([fn.free for fn in fns], dtype=float),
            coef=np.array([fn.coef for fn in fns], dtype=float),
            power=np.array([fn.power for fn in fns], dtype=float),
        )

    def __len__(self) -> int:
        return len(self.free)

    def value(self, f: np.ndarray) -> np.ndarray:
        return self.free + self.coef * f**self.power

    def integral(self, f: np.ndarray) -> np.ndarray:
        return self.free * f + self.coef * f ** (self.power + 1) / (self.power + 1)

    def slope(self, f: np.ndarray) -> np.ndarray:
        """First derivative of the latency."""
        return self.coef * self.power * f ** (self.power - 1)

    def cost(self, f: np.ndarray) -> np.ndarray:
        """Per-edge total cost ``f * l(f)``."""
        return f * self.value(f)

    def marginal(self, f: np.ndarray) -> np.ndarray:
        return self.free + self.coef * (self.power + 1) * f**self.power

    def marginal_slope(self, f: np.ndarray) -> np.ndarray:
        return self.coef * self.power * (self.power + 1) * f ** (self.power - 1)


@dataclass(frozen=True)
class Node:
    id: int


@dataclass(frozen=True)
class Edge:
    id: int
    tail: int
    head: int
    latency: LatencyFunction

    def __post_init__(self) -> None:
        if self.tail == self.head:
            raise ValueError(f"edge {self.id}: self-loop at node {self.tail}")


@dataclass(frozen=True)
class ODPair:
    origin: int
    destination: int
    demand: float

    def __post_init__(self) -> None:
        if self.origin == self.destination:
            raise ValueError(f"OD pair with origin == destination ({self.origin})")
        if self.demand < 0:
            raise ValueError(f"OD pair ({self.origin},{self.destination}) has negative demand")


@dataclass(frozen=True)
class Network:
    """Directed graph with per-edge latencies and an OD demand table.

    Edge ids are dense, ``0..len(edges)-1``, in input order.
    """

    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    od_pairs: tuple[ODPair, ...]

    def __post_init__(self) -> None:
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        known = set(ids)
        for i, e in enumerate(self.edges):
            if e.id != i:
                raise ValueError(f"edge ids must be dense in order; position {i} has id {e.id}")
            if e.tail not in known or e.head not in known:
                raise ValueError(f"edge {e.id} references an unknown node")
        for od in self.od_pairs:
            if od.origin not in known or od.destination not in known:
                raise ValueError(f"OD pair ({od.origin},{od.destination}) references an unknown node")

    @classmethod
    def build(
        cls,
        links: Iterable[tuple[int, int, LatencyFunction]],
        demands: Iterable[tuple[int, int, float]],
        nodes: Iterable[int] | None = None,
    ) -> "Network":
        """Convenience constructor from ``(tail, head, latency)`` and ``(o, d, demand)`` rows.

        Zero-demand rows are dropped. Nodes default to every id mentioned.
        """
        links = list(links)
        demands = [(o, d, float(q)) for o, d, q in demands]
        if nodes is None:
            seen = {t for t, _, _ in links} | {h for _, h, _ in links}
            seen |= {o for o, _, _ in demands} | {d for _, d, _ in demands}
            nodes = sorted(seen)
        return cls(
            nodes=tuple(Node(n) for n in nodes),
            edges=tuple(Edge(i, t, h, lat) for i, (t, h, lat) in enumerate(links)),
            od_pairs=tuple(ODPair(o, d, q) for o, d, q in demands if q > 0),
        )

    @cached_property
    def latencies(self) -> LatencyArrays:
        return LatencyArrays.from_functions(e.latency for e in self.edges)

    @cached_property
    def out_edges(self) -> dict[int, tuple[Edge, ...]]:
        adj: dict[int, list[Edge]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            adj[e.tail].append(e)
        return {k: tuple(v) for k, v in adj.items()}

    @property
    def demands(self) -> np.ndarray:
        return np.array([od.demand for od in self.od_pairs], dtype=float)

    def free_flow_costs(self) -> np.ndarray:
        return self.latencies.value(np.zeros(len(self.edges)))


# --------------------------------------------------------------------------
# TNTP text format


class ParseError(ValueError):
    """Malformed network or trips file; ``line`` is 1-based (0 when unknown)."""

    def __init__(self, message: str, line: int = 0, source: str = "") -> None:
        self.line = line
        self.source = source
        where = f"{source}:" if source else ""
        super().__init__(f"{where}line {line}: {message}" if line else f"{where}{message}")


NET_KEYS = {"NUMBER OF ZONES", "NUMBER OF NODES", "FIRST THRU NODE", "NUMBER OF LINKS", "ORIGINAL HEADER"}
TRIPS_KEYS = {"NUMBER OF ZONES", "TOTAL OD FLOW"}
_META = re.compile(r"^<([^>]+)>(.*)$")

Source = Union[str, bytes, os.PathLike, IO]


def _read_lines(src: Source) -> list[str]:
    if isinstance(src, (str, os.PathLike)):
        with open(src, "r") as fh:
            return fh.read().splitlines()
    if isinstance(src, bytes):
        return src.decode().splitlines()
    data = src.read()
    if isinstance(data, bytes):
        data = data.decode()
    return data.splitlines()


def _read_metadata(lines: list[str], known: set[str], strict: bool, source: str) -> tuple[dict[str, str], int]:
    """Return the metadata dict and the index of the first body line."""
    meta: dict[str, str] = {}
    for i, raw in enumerate(lines):
        line = raw.strip()
        if not line:
            continue
        m = _META.match(line)
        if m is None:
            raise ParseError("expected '<KEY> value' metadata line before <END OF METADATA>", i + 1, source)
        key, value = m.group(1).strip().upper(), m.group(2).strip()
        if key == "END OF METADATA":
            return meta, i + 1
        if key not in known:
            if strict:
                raise ParseError(f"unknown metadata key <{key}>", i + 1, source)
            logger.warning("%s: line %d: ignoring unknown metadata key <%s>", source, i + 1, key)
        meta[key] = value
    raise ParseError("missing <END OF METADATA>", len(lines), source)


def _meta_int(meta: dict[str, str], key: str, source: str) -> int | None:
    if key not in meta:
        return None
    try:
        return int(float(meta[key]))
    except ValueError:
        raise ParseError(f"metadata <{key}> is not a number: {meta[key]!r}", 0, source) from None


def _strip_comment(line: str) -> str:
    pos = line.find("~")
    return (line[:pos] if pos >= 0 else line).strip()


def parse_network(net_file: Source, trips_file: Source, strict: bool = True) -> Network:
    """Parse a TNTP network file and trips file into a :class:`Network`.

    Link rows give ``tail head capacity length free_flow_time b power ...``;
    every link becomes a :class:`Polynomial` latency. Zero-demand trip entries
    are dropped. With ``strict`` unknown metadata keys raise, otherwise they
    are logged and skipped.
    """
    net_lines = _read_lines(net_file)
    src = getattr(net_file, "name", None) or (str(net_file) if isinstance(net_file, (str, os.PathLike)) else "net")
    meta, start = _read_metadata(net_lines, NET_KEYS, strict, src)
    n_nodes = _meta_int(meta, "NUMBER OF NODES", src)
    n_links = _meta_int(meta, "NUMBER OF LINKS", src)

    rows: list[tuple[int, int, int, Polynomial]] = []
    seen: dict[tuple[int, int], int] = {}
    for i in range(start, len(net_lines)):
        line = _strip_comment(net_lines[i])
        if not line:
            continue
        fields = line.replace(";", " ").split()
        lineno = i + 1
        if len(fields) < 7:
            raise ParseError(f"link row needs at least 7 fields, got {len(fields)}", lineno, src)
        try:
            tail, head = int(fields[0]), int(fields[1])
            cap, _length, fft, bpr_b, bpr_a = (float(v) for v in fields[2:7])
        except ValueError as exc:
            raise ParseError(f"bad numeric field ({exc})", lineno, src) from None
        if cap < 0:
            raise ParseError(f"negative capacity {cap}", lineno, src)
        if n_nodes is not None and not (1 <= tail <= n_nodes and 1 <= head <= n_nodes):
            raise ParseError(f"link ({tail},{head}) references a node outside 1..{n_nodes}", lineno, src)
        if tail == head:
            raise ParseError(f"self-loop at node {tail}", lineno, src)
        if (tail, head) in seen:
            raise ParseError(f"duplicate link ({tail},{head}), first seen on line {seen[tail, head]}", lineno, src)
        seen[tail, head] = lineno
        try:
            lat = Polynomial(d=fft, b=bpr_b, c=cap, a=bpr_a)
        except ValueError as exc:
            raise ParseError(str(exc), lineno, src) from None
        rows.append((lineno, tail, head, lat))
    if n_links is not None and n_links != len(rows):
        raise ParseError(f"header declares {n_links} links but {len(rows)} were read", 0, src)

    if n_nodes is not None:
        node_ids = list(range(1, n_nodes + 1))
    else:
        node_ids = sorted({t for _, t, _, _ in rows} | {h for _, _, h, _ in rows})
    known = set(node_ids)

    demands = _parse_trips(trips_file, known, strict)
    return Network(
        nodes=tuple(Node(n) for n in node_ids),
        edges=tuple(Edge(k, t, h, lat) for k, (_, t, h, lat) in enumerate(rows)),
        od_pairs=tuple(ODPair(o, d, q) for o, d, q in demands if q > 0),
    )


_TRIP = re.compile(r"(-?\d+)\s*:\s*([-+0-9.eE]+)\s*;?")


def _parse_trips(trips_file: Source, known: set[int], strict: bool) -> list[tuple[int, int, float]]:
    lines = _read_lines(trips_file)
    src = getattr(trips_file, "name", None) or (
        str(trips_file) if isinstance(trips_file, (str, os.PathLike)) else "trips"
    )
    if not any(l.strip() for l in lines):
        return []
    _meta, start = _read_metadata(lines, TRIPS_KEYS, strict, src)
    origin: int | None = None
    out: list[tuple[int, int, float]] = []
    for i in range(start, len(lines)):
        line = _strip_comment(lines[i])
        lineno = i + 1
        if not line:
            continue
        if line.lower().startswith("origin"):
            parts = line.split()
            try:
                origin = int(parts[1])
            except (IndexError, ValueError):
                raise ParseError("bad 'Origin n' line", lineno, src) from None
            if origin not in known:
                raise ParseError(f"unknown origin node {origin}", lineno, src)
            continue
        if origin is None:
            raise ParseError("demand entry before any 'Origin' line", lineno, src)
        pos = 0
        for m in _TRIP.finditer(line):
            if line[pos:m.start()].strip():
                raise ParseError(f"cannot parse demand entry {line[pos:m.start()].strip()!r}", lineno, src)
            pos = m.end()
            dest, flow = int(m.group(1)), float(m.group(2))
            if dest not in known:
                raise ParseError(f"unknown destination node {dest}", lineno, src)
            if flow < 0:
                raise ParseError(f"negative demand {flow} for ({origin},{dest})", lineno, src)
            if flow > 0 and dest == origin:
                raise ParseError(f"positive demand from node {origin} to itself", lineno, src)
            out.append((origin, dest, flow))
        if line[pos:].strip():
            raise ParseError(f"cannot parse demand entry {line[pos:].strip()!r}", lineno, src)
    return out


def read_network(net_path: str | os.PathLike, trips_path: str | os.PathLike, strict: bool = True) -> Network:
    return parse_network(net_path, trips_path, strict=strict)


def serialize_network(net: Network) -> tuple[str, str]:
    """Write ``net`` back out as TNTP ``(net_text, trips_text)``.

    Only :class:`Polynomial` latencies, and linear ones with a positive
    free-flow time, have a TNTP representation.
    """
    node_ids = [n.id for n in net.nodes]
    if node_ids != list(range(1, len(node_ids) + 1)):
        raise ValueError("TNTP output needs nodes numbered 1..N")
    out = io.StringIO()
    out.write(f"<NUMBER OF NODES> {len(node_ids)}\n<NUMBER OF LINKS> {len(net.edges)}\n<END OF METADATA>\n\n")
    out.write("~\ttail\thead\tcapacity\tlength\tfree_flow_time\tb\tpower\t;\n")
    for e in net.edges:
        lat = e.latency
        if isinstance(lat, Linear):
            if lat.b <= 0:
                raise ValueError(f"edge {e.id}: linear latency with zero free-flow time has no TNTP form")
            lat = Polynomial(d=lat.b, b=lat.a / lat.b, c=1.0, a=1.0)
        out.write(f"\t{e.tail}\t{e.head}\t{lat.c!r}\t{lat.d!r}\t{lat.d!r}\t{lat.b!r}\t{lat.a!r}\t;\n")
    net_text = out.getvalue()

    out = io.StringIO()
    out.write(f"<NUMBER OF ZONES> {len(node_ids)}\n<TOTAL OD FLOW> {sum(od.demand for od in net.od_pairs)!r}\n")
    out.write("<END OF METADATA>\n\n")
    current = None
    for od in net.od_pairs:
        # a repeated Origin block keeps the pair order intact on re-parse
        if od.origin != current:
            current = od.origin
            out.write(f"Origin {current}\n")
        out.write(f"    {od.destination} : {od.demand!r};\n")
    return net_text, out.getvalue()
