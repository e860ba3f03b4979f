from __future__ import annotations

import numpy as np
import pytest

from hetgame import equilibrium as eq
from hetgame.cli import sioux_falls_paths
from hetgame.net_model import Linear, Network, read_network
from hetgame.path_enum import build_pathset
from hetgame.two_link import PIGOU_INSTANCE, REFERENCE_INSTANCE

CONSERVATION_TOL = 1e-9


def conservation_violations(pathset, h) -> list[str]:
    """Per-pair demand sums and nonnegativity, relative to the largest demand."""
    problems = []
    scale = max(1.0, float(pathset.demand_array.max(initial=0.0)))
    if h.size and h.min() < -CONSERVATION_TOL * scale:
        problems.append(f"negative path flow {h.min():.3g}")
    err = np.abs(pathset.pair_sums(h) - pathset.demand_array)
    if err.size and err.max() > CONSERVATION_TOL * scale:
        problems.append(f"demand mismatch {err.max():.3g}")
    return problems


def accounting_error(net, pathset, result) -> float:
    """Relative gap between edge-side and path-side total cost."""
    f = result.edge_flows
    edge_side = float((f * net.latencies.value(f)).sum())
    c = pathset.path_sums(net.latencies.value(f))
    path_side = float(((1 - result.alpha) * result.x + result.alpha * result.y) @ c)
    return abs(edge_side - path_side) / max(1.0, abs(edge_side))


class ConservationWatch:
    """Checks every block and equilibrium result the solvers produce."""

    def __init__(self) -> None:
        self.checked = 0
        self.failures: list[str] = []

    def install(self, monkeypatch) -> None:
        solve_block, make_result = eq._solve_block, eq._result

        def checked_block(block, h0, cfg):
            res = solve_block(block, h0, cfg)
            self._record(conservation_violations(block.pathset, res.flows))
            return res

        def checked_result(inst, x, y, alpha, *args, **kwargs):
            res = make_result(inst, x, y, alpha, *args, **kwargs)
            problems = conservation_violations(inst.pathset, res.x) + conservation_violations(inst.pathset, res.y)
            if accounting_error(inst.network, inst.pathset, res) > CONSERVATION_TOL:
                problems.append("edge/path cost accounting mismatch")
            if np.abs(res.edge_flows - eq.aggregate_flows(res.x, res.y, res.alpha, inst.pathset)).max(initial=0) > 1e-9 * max(1.0, inst.pathset.demand_array.max(initial=0)):
                problems.append("edge flows inconsistent with strategies")
            self._record(problems)
            return res

        monkeypatch.setattr(eq, "_solve_block", checked_block)
        monkeypatch.setattr(eq, "_result", checked_result)

    def _record(self, problems: list[str]) -> None:
        self.checked += 1
        self.failures.extend(problems)
        assert not problems, problems


CONSERVATION_TOTALS = {"outputs": 0, "violations": 0}


@pytest.fixture(autouse=True)
def conservation_watch(monkeypatch):
    watch = ConservationWatch()
    watch.install(monkeypatch)
    yield watch
    CONSERVATION_TOTALS["outputs"] += watch.checked
    CONSERVATION_TOTALS["violations"] += len(watch.failures)


def pytest_terminal_summary(terminalreporter):
    t = CONSERVATION_TOTALS
    terminalreporter.write_line(
        f"conservation watch: {t['outputs']} solver outputs checked, {t['violations']} violations")


@pytest.fixture(scope="session")
def sioux_falls():
    net = read_network(*sioux_falls_paths())
    return net, build_pathset(net, 4)


@pytest.fixture(scope="session")
def reference_two_link():
    net = REFERENCE_INSTANCE.to_network()
    return net, build_pathset(net, 4)


@pytest.fixture(scope="session")
def pigou():
    net = PIGOU_INSTANCE.to_network()
    return net, build_pathset(net, 4)


def link_view(pathset, h) -> np.ndarray:
    """Strategy of a two-link network ordered as (link 1, link 2)."""
    out = np.zeros(2)
    for j, p in enumerate(pathset.paths):
        out[p.edges[0]] = h[j]
    return out


def from_links(pathset, v1: float, v2: float) -> np.ndarray:
    vals = (v1, v2)
    return np.array([vals[p.edges[0]] for p in pathset.paths], dtype=float)


def braess_network(params, demand: float = 1.0) -> Network:
    """4-node network 1->2->4, 1->3->4 plus the cross link 2->3 (three paths 1->4)."""
    links = [(1, 2), (1, 3), (2, 3), (2, 4), (3, 4)]
    return Network.build([(t, h, Linear(a, b)) for (t, h), (a, b) in zip(links, params)], [(1, 4, demand)])


def simplex_grid(n: int):
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    keep = i + j <= n
    return np.stack([i[keep], j[keep], n - i[keep] - j[keep]], axis=1) / n


def brute_force_anarchist(net, ps, x, alpha, demand=1.0):
    """Grid minimiser of the modified potential over the 3-path simplex, refined twice."""
    lat = net.latencies
    dense = ps.matrix.toarray()
    base = (1 - alpha) * dense @ x

    def potential(Y):
        f = base[:, None] + alpha * dense @ Y.T
        return ((lat.integral(f.T) - lat.integral(base)) / alpha).sum(axis=1)

    pts = simplex_grid(400) * demand
    best = pts[np.argmin(potential(pts))]
    for width in (4 / 400, 4 / 40000):
        local = best + (simplex_grid(800) - 1 / 3) * 3 * width * demand
        local = local[(local >= 0).all(axis=1)]
        local = local / local.sum(axis=1, keepdims=True) * demand
        best = local[np.argmin(potential(local))]
    return best
