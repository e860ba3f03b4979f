"""Closed forms for the two-node, two-link network with linear latencies.

Link ``i`` has latency ``a_i * f_i + b_i`` and one unit of demand travels
between the nodes; link 1 is the one with the larger free-flow time. Two
constants drive everything:

* ``A``: the link-2 flow at the all-selfish (Wardrop) equilibrium,
  ``(b1 - b2 + a1) / (a1 + a2)``;
* ``f2opt``: the socially optimal link-2 flow, ``(a1 + (b1 - b2)/2) / (a1 + a2)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .net_model import Linear, Network

__all__ = [
    "ModelAssumptionError",
    "Regime",
    "TwoLinkInstance",
    "TwoLinkSolution",
    "REFERENCE_INSTANCE",
    "PIGOU_INSTANCE",
    "threshold_A",
    "social_opt_f2",
    "y2_of_x2",
    "solve_regimes",
    "pigou_prices",
    "link_costs",
    "two_link_prices",
]


class ModelAssumptionError(ValueError):
    """Parameters outside the closed-form model (e.g. ``A`` not in [0, 1])."""


class Regime(enum.Enum):
    COMPENSATING = 1
    SATURATED = 2
    ANARCHY_DOMINATED = 3


@dataclass(frozen=True)
class TwoLinkInstance:
    a1: float
    b1: float
    a2: float
    b2: float
    alpha: float = 0.0

    def __post_init__(self) -> None:
        if min(self.a1, self.b1, self.a2, self.b2) < 0:
            raise ModelAssumptionError("latency parameters must be nonnegative")
        if not self.a1 + self.a2 > 0:
            raise ModelAssumptionError("a1 + a2 must be positive")
        if self.b1 < self.b2:
            raise ModelAssumptionError(f"link 1 must have the larger free-flow time (b1={self.b1} < b2={self.b2})")
        if not 0.0 <= self.alpha <= 1.0:
            raise ModelAssumptionError(f"alpha must lie in [0, 1], got {self.alpha}")
        A = (self.b1 - self.b2 + self.a1) / (self.a1 + self.a2)
        if not 0.0 <= A <= 1.0:
            raise ModelAssumptionError(f"A = {A:.9g} lies outside [0, 1]")

    def with_alpha(self, alpha: float) -> "TwoLinkInstance":
        return TwoLinkInstance(self.a1, self.b1, self.a2, self.b2, alpha)

    def to_network(self) -> Network:
        """Nodes 1 -> 2, edge 0 is link 1 and edge 1 is link 2, unit demand."""
        return Network.build(
            [(1, 2, Linear(self.a1, self.b1)), (1, 2, Linear(self.a2, self.b2))],
            [(1, 2, 1.0)],
        )


# regime breakpoints are compared with this slack so that rounding keeps them in the lower regime
_BREAK_TOL = 1e-12

REFERENCE_INSTANCE = TwoLinkInstance(a1=0.3, b1=1.0, a2=0.7, b2=0.8)
PIGOU_INSTANCE = TwoLinkInstance(a1=0.0, b1=1.0, a2=1.0, b2=0.0)


@dataclass(frozen=True)
class TwoLinkSolution:
    x: tuple[float, float]
    y: tuple[float, float]
    flow: tuple[float, float]
    total_cost: float
    regime: Regime


def threshold_A(inst: TwoLinkInstance) -> float:
    return (inst.b1 - inst.b2 + inst.a1) / (inst.a1 + inst.a2)


def social_opt_f2(inst: TwoLinkInstance, with_flag: bool = False) -> float | tuple[float, bool]:
    """Socially optimal link-2 flow, clamped to [0, 1].

    With ``with_flag`` returns ``(value, clamped)``.
    """
    raw = (inst.a1 + 0.5 * (inst.b1 - inst.b2)) / (inst.a1 + inst.a2)
    val = min(max(raw, 0.0), 1.0)
    return (val, val != raw) if with_flag else val


def y2_of_x2(inst: TwoLinkInstance, x2: float) -> float:
    """Anarchist link-2 strategy at equilibrium, given the socialist link-2 strategy."""
    a = inst.alpha
    A = threshold_A(inst)
    if a == 0.0:
        raise ValueError("y2(x2) is undefined without anarchists (alpha = 0)")
    if a == 1.0:
        return min(max(A, 0.0), 1.0)
    if x2 <= (A - a) / (1.0 - a):
        return 1.0
    if x2 >= A / (1.0 - a):
        return 0.0
    return A / a - (1.0 - a) / a * x2


def link_costs(inst: TwoLinkInstance, flow: tuple[float, float]) -> tuple[float, float]:
    return inst.a1 * flow[0] + inst.b1, inst.a2 * flow[1] + inst.b2


def _total(inst: TwoLinkInstance, flow: tuple[float, float]) -> float:
    l1, l2 = link_costs(inst, flow)
    return flow[0] * l1 + flow[1] * l2


def solve_regimes(inst: TwoLinkInstance) -> TwoLinkSolution:
    """Optimal socialist strategy and the anarchists' response, by regime.

    Breakpoints ``alpha == f2opt`` and ``alpha == A`` belong to the lower
    regime. In the anarchy-dominated regime every strategy reaching the
    Wardrop flow is optimal; ``x = y = (1 - A, A)`` is returned.
    """
    a = inst.alpha
    fopt = social_opt_f2(inst)
    A = threshold_A(inst)
    if a <= fopt + _BREAK_TOL:
        x2 = max(fopt - a, 0.0) / (1.0 - a) if a < 1.0 else 0.0
        x, y, regime = (1.0 - x2, x2), (0.0, 1.0), Regime.COMPENSATING
    elif a <= A + _BREAK_TOL:
        x, y, regime = (1.0, 0.0), (0.0, 1.0), Regime.SATURATED
    else:
        x = y = (1.0 - A, A)
        regime = Regime.ANARCHY_DOMINATED
    flow = ((1 - a) * x[0] + a * y[0], (1 - a) * x[1] + a * y[1])
    return TwoLinkSolution(x, y, flow, _total(inst, flow), regime)


def two_link_prices(inst: TwoLinkInstance) -> tuple[float, float | None]:
    """``(P_A, P_G)`` of the closed-form solution; ``P_G`` is None at alpha 0 or 1."""
    sol = solve_regimes(inst)
    opt = solve_regimes(inst.with_alpha(0.0)).total_cost
    p_a = sol.total_cost / opt
    if inst.alpha in (0.0, 1.0):
        return p_a, None
    l1, l2 = link_costs(inst, sol.flow)
    soc = sol.x[0] * l1 + sol.x[1] * l2
    ana = sol.y[0] * l1 + sol.y[1] * l2
    return p_a, soc / ana


def pigou_prices(alpha: float) -> tuple[float, float]:
    """Price of alpha-anarchy and of good behaviour for ``l1 = 1``, ``l2 = f``.

    At ``alpha = 0`` the good-behaviour price is the formula's limit value 3/2.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha <= 0.5:
        return 1.0, (3.0 - 2.0 * alpha) / (2.0 * (1.0 - alpha))
    return 4.0 / 3.0 * (1.0 - alpha + alpha**2), 1.0 / alpha


def sweep_table(inst: TwoLinkInstance, alphas: np.ndarray) -> list[dict[str, float | None]]:
    rows = []
    for a in alphas:
        sub = inst.with_alpha(float(a))
        sol = solve_regimes(sub)
        p_a, p_g = two_link_prices(sub)
        rows.append(
            {"alpha": float(a), "x2": sol.x[1], "y2": sol.y[1], "f2": sol.flow[1],
             "total_cost": sol.total_cost, "P_A": p_a, "P_G": p_g}
        )
    return rows
