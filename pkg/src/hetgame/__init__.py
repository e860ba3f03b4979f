"""Equilibria of routing games with selfish and planner-directed traffic."""

from .equilibrium import (
    EquilibriumResult,
    HetGameInstance,
    SolverConfig,
    aggregate_flows,
    anarchist_best_response,
    social_optimum,
    socialist_best_response,
    solve_hetgame,
    verify_wardrop,
    wardrop_equilibrium,
)
from .metrics import PriceReport, alpha_sweep, price_of_alpha_anarchy, price_of_good_behavior
from .net_model import Linear, Network, Polynomial, parse_network, read_network
from .path_enum import PathSet, build_pathset, k_shortest_paths, shortest_path

__version__ = "0.1.0"
