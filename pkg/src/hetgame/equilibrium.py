"""Equilibrium solvers for the two-class (socialist / anarchist) routing game.

Strategies live in path space. A class strategy is a vector of path flows
that sums to the full demand ``d_k`` of every OD pair; the physical flow of
the class is that vector scaled by its share (``1 - alpha`` for socialists,
``alpha`` for anarchists). Edge flows are always derived::

    f = Delta @ ((1 - alpha) * x + alpha * y)

Every block problem (social optimum, Wardrop equilibrium, the socialist block
with the anarchists held fixed, the anarchist block with the socialists held
fixed) is a convex program over a product of per-pair simplices and is solved
by the same conditional-gradient engine in :func:`_solve_block`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import sparse

from .net_model import LatencyArrays, LatencyFunction, Linear, Network, latency_integral
from .path_enum import PathSet

logger = logging.getLogger(__name__)

__all__ = [
    "SolverConfig",
    "HetGameInstance",
    "BlockResult",
    "OuterStep",
    "EquilibriumResult",
    "WardropReport",
    "DegenerateClassError",
    "aggregate_flows",
    "modified_link_cost",
    "modified_potential",
    "beckmann_potential",
    "system_cost",
    "path_latencies",
    "path_marginals",
    "anarchist_best_response",
    "socialist_best_response",
    "wardrop_equilibrium",
    "social_optimum",
    "solve_hetgame",
    "verify_wardrop",
    "default_start",
    "check_feasible",
    "result_to_csv",
]

FEAS_TOL = 1e-9


class DegenerateClassError(ValueError):
    """A class with zero mass was asked to route itself."""


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and caps for the alternating solver.

    ``inner_tol`` bounds the relative Frank-Wolfe gap of each block solve,
    ``outer_tol`` the max-norm change of ``(x, y)`` between outer iterations
    relative to the largest OD demand. ``direction`` picks the
    conditional-gradient step: ``"pairwise"`` shifts flow from every costlier
    used path onto the cheapest path with a Newton-scaled amount, ``"fw"`` is
    the classical step towards the all-or-nothing vertex.
    """

    outer_tol: float = 1e-6
    inner_tol: float = 1e-8
    max_outer_iters: int = 200
    max_inner_iters: int = 5000
    line_search_tol: float = 1e-12
    direction: Literal["pairwise", "fw"] = "pairwise"

    def __post_init__(self) -> None:
        for name in ("outer_tol", "inner_tol", "line_search_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer_iters < 1 or self.max_inner_iters < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.direction not in ("pairwise", "fw"):
            raise ValueError(f"unknown direction rule {self.direction!r}")


@dataclass(frozen=True)
class HetGameInstance:
    network: Network
    pathset: PathSet
    alpha: float
    config: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.pathset.n_edges != len(self.network.edges):
            raise ValueError("path set was built for a different network")

    def with_alpha(self, alpha: float) -> "HetGameInstance":
        return HetGameInstance(self.network, self.pathset, alpha, self.config)


@dataclass(frozen=True)
class BlockResult:
    flows: np.ndarray
    objective: float
    gap: float
    rel_gap: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class OuterStep:
    cost_before: float
    cost_after_socialist: float
    cost_after_anarchist: float
    change: float
    socialist: BlockResult
    anarchist: BlockResult


@dataclass(frozen=True)
class EquilibriumResult:
    x: np.ndarray
    y: np.ndarray
    alpha: float
    edge_flows: np.ndarray
    total_cost: float
    outer_iters: int
    converged: bool
    history: tuple[float, ...]
    steps: tuple[OuterStep, ...] = ()


# ---------------------------------------------------------------------------
# objectives and gradients


def check_feasible(pathset: PathSet, h: np.ndarray, name: str = "strategy") -> None:
    h = np.asarray(h)
    if h.shape != (pathset.n_paths,):
        raise ValueError(f"{name} has shape {h.shape}, expected ({pathset.n_paths},)")
    if np.any(h < -FEAS_TOL):
        raise ValueError(f"{name} has negative path flows")
    err = np.abs(pathset.pair_sums(h) - pathset.demand_array)
    if err.size and err.max() > FEAS_TOL * max(1.0, pathset.demand_array.max()):
        raise ValueError(f"{name} violates per-pair demand by up to {err.max():.3g}")


def aggregate_flows(x: np.ndarray, y: np.ndarray, alpha: float, pathset: PathSet) -> np.ndarray:
    """Edge flows ``sum over paths through e of (1-alpha) x_P + alpha y_P``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != (pathset.n_paths,) or y.shape != (pathset.n_paths,):
        raise ValueError(f"strategies must have shape ({pathset.n_paths},), got {x.shape} and {y.shape}")
    return pathset.edge_flows((1.0 - alpha) * x + alpha * y)


def modified_link_cost(latency: LatencyFunction, y_e: float, x_e: float, alpha: float) -> float:
    """Anarchist potential term ``int_0^y_e l((1-alpha) x_e + alpha z) dz``.

    ``x_e`` is the socialist strategy flow on the edge (unscaled).
    """
    if y_e < 0:
        raise ValueError(f"y_e must be nonnegative, got {y_e}")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    base = (1.0 - alpha) * x_e
    if isinstance(latency, Linear):
        return 0.5 * latency.a * alpha * y_e * y_e + (latency.b + latency.a * base) * y_e
    return (latency_integral(latency, base + alpha * y_e) - latency_integral(latency, base)) / alpha


def path_latencies(net: Network, pathset: PathSet, edge_flows: np.ndarray) -> np.ndarray:
    return pathset.path_sums(net.latencies.value(edge_flows))


def path_marginals(net: Network, pathset: PathSet, edge_flows: np.ndarray) -> np.ndarray:
    return pathset.path_sums(net.latencies.marginal(edge_flows))


def beckmann_potential(net: Network, pathset: PathSet, h: np.ndarray) -> float:
    return float(net.latencies.integral(pathset.edge_flows(h)).sum())


def system_cost(net: Network, pathset: PathSet, h: np.ndarray) -> float:
    return float(net.latencies.cost(pathset.edge_flows(h)).sum())


def modified_potential(inst: HetGameInstance, x: np.ndarray, y: np.ndarray) -> float:
    """Sum of :func:`modified_link_cost` over edges."""
    a = inst.alpha
    if a <= 0:
        raise DegenerateClassError("modified potential is undefined without anarchists")
    lat = inst.network.latencies
    base = (1.0 - a) * inst.pathset.edge_flows(x)
    f = base + a * inst.pathset.edge_flows(y)
    return float(((lat.integral(f) - lat.integral(base)) / a).sum())


# ---------------------------------------------------------------------------
# block engine


@dataclass
class _Block:
    """One class routing its strategy ``h`` with edge flow ``base + weight * Delta h``.

    ``kind="beckmann"`` minimises the (shifted) Beckmann potential, whose
    path gradient is the path latency; ``kind="system"`` minimises total cost.
    """

    lat: LatencyArrays
    pathset: PathSet
    base: np.ndarray
    weight: float
    kind: Literal["beckmann", "system"]

    def flows(self, h: np.ndarray) -> np.ndarray:
        return self.base + self.weight * self.pathset.edge_flows(h)

    def edge_grad(self, f: np.ndarray) -> np.ndarray:
        if self.kind == "beckmann":
            return self.lat.value(f)
        return self.weight * self.lat.marginal(f)

    def edge_curv(self, f: np.ndarray) -> np.ndarray:
        if self.kind == "beckmann":
            return self.weight * self.lat.slope(f)
        return self.weight**2 * self.lat.marginal_slope(f)

    def objective(self, h: np.ndarray) -> float:
        f = self.flows(h)
        if self.kind == "beckmann":
            return float(((self.lat.integral(f) - self.lat.integral(self.base)) / self.weight).sum())
        return float(self.lat.cost(f).sum())


def _gap(pathset: PathSet, h: np.ndarray, g: np.ndarray) -> tuple[float, float]:
    gmin = pathset.pair_min(g)
    gap = float(h @ g - pathset.demand_array @ gmin)
    scale = float(h @ g)
    gap = max(gap, 0.0)
    return gap, (gap / scale if scale > 0 else gap)


def _line_search(block: _Block, f: np.ndarray, df: np.ndarray, tol: float) -> float:
    """Minimise the objective along ``f + t * df`` over ``t`` in [0, 1] by bisection."""

    def slope(t: float) -> float:
        return float(block.edge_grad(f + t * df) @ df)

    if slope(1.0) <= 0.0:
        return 1.0
    if slope(0.0) >= 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if slope(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _pairwise_direction(block: _Block, h: np.ndarray, g: np.ndarray, f: np.ndarray) -> np.ndarray:
    ps = block.pathset
    best = ps.pair_argmin(g)
    best_of_path = best[ps.path_pair]
    excess = g - g[best_of_path]
    move = (h > 0) & (excess > 0)
    if not move.any():
        return np.zeros_like(h)
    curv = block.edge_curv(f)
    M = ps.matrix_t
    shared = M.multiply(M[best_of_path]) @ curv
    own = M @ curv
    hess = own + own[best_of_path] - 2.0 * shared
    with np.errstate(divide="ignore", invalid="ignore"):
        newton = np.where(hess > 0, excess / hess, np.inf)
    delta = np.where(move, np.minimum(h, newton), 0.0)
    d = -delta
    np.add.at(d, best_of_path, delta)
    return d


def _solve_block(block: _Block, h0: np.ndarray, cfg: SolverConfig) -> BlockResult:
    ps = block.pathset
    h = np.array(h0, dtype=float)
    f = block.flows(h)
    gap = rel = np.inf
    it = 0
    for it in range(cfg.max_inner_iters + 1):
        g = ps.path_sums(block.edge_grad(f))
        gap, rel = _gap(ps, h, g)
        if rel <= cfg.inner_tol or it == cfg.max_inner_iters:
            break
        if cfg.direction == "fw":
            d = ps.all_or_nothing(g) - h
        else:
            d = _pairwise_direction(block, h, g, f)
        df = block.weight * ps.edge_flows(d)
        t = _line_search(block, f, df, cfg.line_search_tol)
        if t == 0.0 and cfg.direction != "fw":
            d = ps.all_or_nothing(g) - h
            df = block.weight * ps.edge_flows(d)
            t = _line_search(block, f, df, cfg.line_search_tol)
        if t == 0.0:
            # no descent available along d at this precision
            break
        h = np.maximum(h + t * d, 0.0)
        f = block.flows(h)
    converged = bool(rel <= cfg.inner_tol)
    if not converged:
        logger.debug("block solve stopped at relative gap %.3g after %d iterations", rel, it)
    return BlockResult(h, block.objective(h), gap, rel, it, converged)


def default_start(net: Network, pathset: PathSet) -> np.ndarray:
    """All-or-nothing on each pair's zero-flow shortest path."""
    return pathset.all_or_nothing(path_latencies(net, pathset, np.zeros(len(net.edges))))


def _start(inst: HetGameInstance, h: np.ndarray | None, name: str) -> np.ndarray:
    if h is None:
        return default_start(inst.network, inst.pathset)
    h = np.asarray(h, dtype=float)
    check_feasible(inst.pathset, h, name)
    return h


# ---------------------------------------------------------------------------
# block best responses


def anarchist_best_response(
    inst: HetGameInstance, x: np.ndarray, y_start: np.ndarray | None = None
) -> BlockResult:
    """Wardrop equilibrium of the anarchists with the socialist strategy ``x`` held fixed.

    Minimises the sum of modified link costs over anarchist strategies.
    """
    if inst.alpha <= 0:
        raise DegenerateClassError("alpha = 0: there are no anarchists to route")
    x = _start(inst, x, "x")
    y0 = _start(inst, y_start, "y_start")
    base = (1.0 - inst.alpha) * inst.pathset.edge_flows(x)
    block = _Block(inst.network.latencies, inst.pathset, base, inst.alpha, "beckmann")
    return _solve_block(block, y0, inst.config)


def socialist_best_response(
    inst: HetGameInstance, y: np.ndarray, x_start: np.ndarray | None = None
) -> BlockResult:
    """Total-cost minimising socialist strategy with the anarchist strategy ``y`` held fixed."""
    if inst.alpha >= 1:
        raise DegenerateClassError("alpha = 1: there are no socialists to route")
    y = _start(inst, y, "y")
    x0 = _start(inst, x_start, "x_start")
    base = inst.alpha * inst.pathset.edge_flows(y)
    block = _Block(inst.network.latencies, inst.pathset, base, 1.0 - inst.alpha, "system")
    return _solve_block(block, x0, inst.config)


def _result(inst: HetGameInstance, x, y, alpha, iters, converged, history, steps=()) -> EquilibriumResult:
    f = aggregate_flows(x, y, alpha, inst.pathset)
    cost = float(inst.network.latencies.cost(f).sum())
    return EquilibriumResult(x, y, alpha, f, cost, iters, converged, tuple(history), tuple(steps))


def wardrop_equilibrium(inst: HetGameInstance, h0: np.ndarray | None = None) -> EquilibriumResult:
    """Route all demand selfishly (Beckmann potential minimum); ``alpha`` is ignored."""
    start = _start(inst, h0, "h0")
    block = _Block(inst.network.latencies, inst.pathset, np.zeros(len(inst.network.edges)), 1.0, "beckmann")
    res = _solve_block(block, start, inst.config)
    return _result(inst, res.flows.copy(), res.flows, 1.0, res.iterations, res.converged, [])


def social_optimum(inst: HetGameInstance, h0: np.ndarray | None = None) -> EquilibriumResult:
    """Route all demand to minimise total cost; ``alpha`` is ignored."""
    start = _start(inst, h0, "h0")
    block = _Block(inst.network.latencies, inst.pathset, np.zeros(len(inst.network.edges)), 1.0, "system")
    res = _solve_block(block, start, inst.config)
    return _result(inst, res.flows, res.flows.copy(), 0.0, res.iterations, res.converged, [])


def solve_hetgame(
    inst: HetGameInstance, x0: np.ndarray | None = None, y0: np.ndarray | None = None
) -> EquilibriumResult:
    """Alternate socialist and anarchist best responses until the strategies settle.

    At ``alpha`` 0 or 1 one class has no weight and the call delegates to
    :func:`social_optimum` or :func:`wardrop_equilibrium`.
    """
    alpha = inst.alpha
    x = _start(inst, x0, "x0")
    y = _start(inst, y0, "y0")
    if alpha == 0.0:
        return social_optimum(inst, x)
    if alpha == 1.0:
        return wardrop_equilibrium(inst, y)

    cfg = inst.config
    lat = inst.network.latencies
    ps = inst.pathset
    scale = max(float(ps.demand_array.max(initial=0.0)), 1e-300)

    def cost(xx, yy):
        return float(lat.cost(aggregate_flows(xx, yy, alpha, ps)).sum())

    steps: list[OuterStep] = []
    converged = False
    current = cost(x, y)
    for it in range(1, cfg.max_outer_iters + 1):
        rs = socialist_best_response(inst, y, x_start=x)
        mid = cost(rs.flows, y)
        ra = anarchist_best_response(inst, rs.flows, y_start=y)
        after = cost(rs.flows, ra.flows)
        change = max(np.abs(rs.flows - x).max(initial=0.0), np.abs(ra.flows - y).max(initial=0.0)) / scale
        steps.append(OuterStep(current, mid, after, change, rs, ra))
        x, y, current = rs.flows, ra.flows, after
        if change <= cfg.outer_tol:
            converged = rs.converged and ra.converged
            break
    else:
        logger.info("alternation hit %d outer iterations (alpha=%g)", cfg.max_outer_iters, alpha)
    return _result(inst, x, y, alpha, len(steps), converged, [s.cost_after_anarchist for s in steps], steps)


# ---------------------------------------------------------------------------
# certificates and output


@dataclass(frozen=True)
class WardropReport:
    violations: np.ndarray
    max_violation: float
    max_path_latency: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.max_violation <= self.tol


def verify_wardrop(
    inst: HetGameInstance, x: np.ndarray, y: np.ndarray, tol: float, used_tol: float = 1e-9
) -> WardropReport:
    """Per pair, the worst excess latency of a used anarchist path over the cheapest path.

    A path counts as used when its anarchist strategy flow exceeds
    ``used_tol`` times the pair demand.
    """
    ps = inst.pathset
    f = aggregate_flows(x, y, inst.alpha, ps)
    c = path_latencies(inst.network, ps, f)
    excess = c - ps.pair_min(c)[ps.path_pair]
    used = np.asarray(y) > used_tol * ps.demand_array[ps.path_pair]
    viol = np.zeros(ps.n_pairs)
    np.maximum.at(viol, ps.path_pair, np.where(used, excess, 0.0))
    return WardropReport(viol, float(viol.max(initial=0.0)), float(c.max(initial=0.0)), tol)


def _fmt(v: float) -> str:
    return f"{v:.9g}"


def result_to_csv(result: EquilibriumResult, net: Network, pathset: PathSet) -> str:
    """Edge section then path section, separated by a blank line."""
    lat = net.latencies.value(result.edge_flows)
    rows = ["edge_id,f_e,latency,f_e_latency"]
    for e in range(len(net.edges)):
        f = result.edge_flows[e]
        rows.append(",".join([str(e), _fmt(f), _fmt(lat[e]), _fmt(f * lat[e])]))
    rows.append("")
    rows.append("pair,path_index,x_P,y_P,path_latency")
    c = pathset.path_sums(lat)
    for j, p in enumerate(pathset.paths):
        idx = j - pathset.offsets[p.pair_index]
        rows.append(",".join([str(p.pair_index), str(idx), _fmt(result.x[j]), _fmt(result.y[j]), _fmt(c[j])]))
    return "\n".join(rows) + "\n"
