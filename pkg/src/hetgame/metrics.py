"""Price of alpha-anarchy, price of good behaviour, and alpha sweeps."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .equilibrium import (
    EquilibriumResult,
    HetGameInstance,
    SolverConfig,
    path_latencies,
    social_optimum,
    solve_hetgame,
)
from .net_model import Network
from .path_enum import PathSet

logger = logging.getLogger(__name__)

__all__ = [
    "UndefinedMetricError",
    "PriceReport",
    "total_cost",
    "class_average_cost",
    "price_of_alpha_anarchy",
    "price_of_good_behavior",
    "price_report",
    "alpha_sweep",
    "sweep_to_csv",
]

SWEEP_HEADER = "alpha,total_cost,social_opt_cost,P_A,socialist_avg,anarchist_avg,P_G,converged"


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class PriceReport:
    alpha: float
    total_cost: float
    social_opt_cost: float
    price_of_alpha_anarchy: float
    socialist_avg_cost: float | None
    anarchist_avg_cost: float | None
    price_of_good_behavior: float | None
    converged: bool
    outer_iters: int = 0
    error: str | None = None


def total_cost(result: EquilibriumResult, net: Network) -> float:
    f = result.edge_flows
    return float((f * net.latencies.value(f)).sum())


def class_average_cost(
    result: EquilibriumResult,
    net: Network,
    pathset: PathSet,
    cls: Literal["socialist", "anarchist"],
    alpha: float,
) -> float:
    """Flow-weighted mean path latency experienced by one class."""
    if cls == "socialist":
        mass, strategy = 1.0 - alpha, result.x
    elif cls == "anarchist":
        mass, strategy = alpha, result.y
    else:
        raise ValueError(f"unknown class {cls!r}")
    if mass <= 0:
        raise UndefinedMetricError(f"{cls} class has zero mass at alpha={alpha}")
    flows = mass * np.asarray(strategy)
    c = path_latencies(net, pathset, result.edge_flows)
    return float(flows @ c / flows.sum())


def _ratio(num: float, den: float) -> float:
    if den <= 0:
        raise UndefinedMetricError("social optimum cost is zero; price of anarchy undefined")
    return num / den


def price_of_alpha_anarchy(inst: HetGameInstance) -> float:
    if inst.alpha == 0.0:
        return 1.0
    opt = social_optimum(inst).total_cost
    return _ratio(solve_hetgame(inst).total_cost, opt)


def price_of_good_behavior(inst: HetGameInstance, result: EquilibriumResult | None = None) -> float:
    if inst.alpha in (0.0, 1.0):
        raise UndefinedMetricError(f"price of good behaviour needs both classes (alpha={inst.alpha})")
    res = result if result is not None else solve_hetgame(inst)
    soc = class_average_cost(res, inst.network, inst.pathset, "socialist", inst.alpha)
    ana = class_average_cost(res, inst.network, inst.pathset, "anarchist", inst.alpha)
    return soc / ana


def price_report(inst: HetGameInstance, result: EquilibriumResult, social_opt_cost: float) -> PriceReport:
    a = inst.alpha
    soc = ana = p_g = None
    if a < 1.0:
        soc = class_average_cost(result, inst.network, inst.pathset, "socialist", a)
    if a > 0.0:
        ana = class_average_cost(result, inst.network, inst.pathset, "anarchist", a)
    if soc is not None and ana is not None:
        p_g = soc / ana
    return PriceReport(
        alpha=a,
        total_cost=result.total_cost,
        social_opt_cost=social_opt_cost,
        price_of_alpha_anarchy=_ratio(result.total_cost, social_opt_cost),
        socialist_avg_cost=soc,
        anarchist_avg_cost=ana,
        price_of_good_behavior=p_g,
        converged=result.converged,
        outer_iters=result.outer_iters,
    )


def alpha_sweep(
    net: Network,
    pathset: PathSet,
    alphas: Sequence[float],
    config: SolverConfig | None = None,
    max_workers: int | None = None,
) -> list[PriceReport]:
    """One :class:`PriceReport` per alpha, in input order.

    The social optimum is solved once and shared. Each alpha starts from the
    default all-or-nothing strategies; failures are recorded in the report.
    """
    config = config or SolverConfig()
    base = HetGameInstance(net, pathset, 0.0, config)
    opt = social_optimum(base)
    opt_cost = opt.total_cost

    def one(alpha: float) -> PriceReport:
        try:
            inst = base.with_alpha(float(alpha))
            res = opt if alpha == 0.0 else solve_hetgame(inst)
            return price_report(inst, res, opt_cost)
        except Exception as exc:  # recorded, the sweep goes on
            logger.warning("alpha=%g failed: %s", alpha, exc)
            return PriceReport(float(alpha), np.nan, opt_cost, np.nan, None, None, None, False, 0, str(exc))

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(one, alphas))
    return [one(a) for a in alphas]


def _cell(v: float | None) -> str:
    return "" if v is None else f"{v:.9g}"


def sweep_to_csv(reports: Sequence[PriceReport]) -> str:
    lines = [SWEEP_HEADER]
    for r in reports:
        lines.append(",".join([
            _cell(r.alpha), _cell(r.total_cost), _cell(r.social_opt_cost), _cell(r.price_of_alpha_anarchy),
            _cell(r.socialist_avg_cost), _cell(r.anarchist_avg_cost), _cell(r.price_of_good_behavior),
            "true" if r.converged else "false",
        ]))
    return "\n".join(lines) + "\n"
