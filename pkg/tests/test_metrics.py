import math

import numpy as np
import pytest

from hetgame.equilibrium import HetGameInstance, SolverConfig, social_optimum, solve_hetgame
from hetgame.metrics import (
    SWEEP_HEADER,
    UndefinedMetricError,
    alpha_sweep,
    class_average_cost,
    price_of_alpha_anarchy,
    price_of_good_behavior,
    sweep_to_csv,
    total_cost,
)
from hetgame.net_model import Linear, Network
from hetgame.path_enum import build_pathset
from hetgame.two_link import REFERENCE_INSTANCE, pigou_prices, two_link_prices

TIGHT = SolverConfig(inner_tol=1e-10, outer_tol=1e-9)


def inst_for(fixture, alpha):
    net, ps = fixture
    return HetGameInstance(net, ps, alpha, TIGHT)


class TestTotalCost:
    def test_two_link_compensating(self, reference_two_link):
        res = solve_hetgame(inst_for(reference_two_link, 0.2))
        assert total_cost(res, reference_two_link[0]) == pytest.approx(1.14, abs=1e-9)

    def test_zero_demand(self):
        net = Network.build([(1, 2, Linear(1, 1))], [])
        ps = build_pathset(net, 4)
        assert total_cost(social_optimum(HetGameInstance(net, ps, 0.0)), net) == 0.0

    def test_pigou_wardrop(self, pigou):
        res = solve_hetgame(inst_for(pigou, 1.0))
        assert total_cost(res, pigou[0]) == pytest.approx(1.0, abs=1e-9)

    def test_matches_result_field(self, sioux_falls):
        net, ps = sioux_falls
        res = social_optimum(HetGameInstance(net, ps, 0.0, SolverConfig(inner_tol=1e-6)))
        assert total_cost(res, net) == pytest.approx(res.total_cost, rel=1e-12)


class TestClassAverages:
    def test_pigou_quarter(self, pigou):
        inst = inst_for(pigou, 0.25)
        res = solve_hetgame(inst)
        net, ps = pigou
        assert class_average_cost(res, net, ps, "socialist", 0.25) == pytest.approx(5 / 6, abs=1e-5)
        assert class_average_cost(res, net, ps, "anarchist", 0.25) == pytest.approx(0.5, abs=1e-5)

    def test_zero_mass_class(self, pigou):
        net, ps = pigou
        res = solve_hetgame(inst_for(pigou, 1.0))
        with pytest.raises(UndefinedMetricError):
            class_average_cost(res, net, ps, "socialist", 1.0)
        res0 = solve_hetgame(inst_for(pigou, 0.0))
        with pytest.raises(UndefinedMetricError):
            class_average_cost(res0, net, ps, "anarchist", 0.0)

    def test_unknown_class(self, pigou):
        net, ps = pigou
        with pytest.raises(ValueError):
            class_average_cost(solve_hetgame(inst_for(pigou, 0.5)), net, ps, "altruist", 0.5)

    def test_weighted_averages_recover_total(self, reference_two_link):
        net, ps = reference_two_link
        a = 0.3
        res = solve_hetgame(inst_for(reference_two_link, a))
        soc = class_average_cost(res, net, ps, "socialist", a)
        ana = class_average_cost(res, net, ps, "anarchist", a)
        assert (1 - a) * soc + a * ana == pytest.approx(res.total_cost, rel=1e-12)


class TestPrices:
    @pytest.mark.parametrize("alpha", [0.25, 0.75])
    def test_pigou(self, pigou, alpha):
        inst = inst_for(pigou, alpha)
        p_a, p_g = pigou_prices(alpha)
        assert price_of_alpha_anarchy(inst) == pytest.approx(p_a, abs=1e-6)
        assert price_of_good_behavior(inst) == pytest.approx(p_g, abs=1e-5)

    def test_alpha_zero_is_exactly_one(self, reference_two_link):
        assert price_of_alpha_anarchy(inst_for(reference_two_link, 0.0)) == 1.0

    def test_symmetric_links_good_behaviour_is_one(self):
        # two identical routes; the second runs through a free connector
        net = Network.build([(1, 2, Linear(1, 1)), (1, 3, Linear(0, 0)), (3, 2, Linear(1, 1))], [(1, 2, 1.0)])
        ps = build_pathset(net, 4)
        for a in (0.2, 0.6):
            assert price_of_good_behavior(HetGameInstance(net, ps, a, TIGHT)) == pytest.approx(1.0, abs=1e-6)

    def test_good_behaviour_undefined_at_endpoints(self, pigou):
        for a in (0.0, 1.0):
            with pytest.raises(UndefinedMetricError):
                price_of_good_behavior(inst_for(pigou, a))

    def test_zero_optimum_cost(self):
        net = Network.build([(1, 2, Linear(1, 0))], [])
        ps = build_pathset(net, 4)
        with pytest.raises(UndefinedMetricError):
            price_of_alpha_anarchy(HetGameInstance(net, ps, 0.5))


class TestSweep:
    def test_two_link_against_closed_form(self, reference_two_link):
        net, ps = reference_two_link
        alphas = np.round(np.linspace(0, 1, 11), 10)
        reports = alpha_sweep(net, ps, alphas, TIGHT)
        assert [r.alpha for r in reports] == list(alphas)
        assert reports[0].price_of_alpha_anarchy == 1.0
        assert reports[0].price_of_good_behavior is None and reports[-1].price_of_good_behavior is None
        for r in reports:
            assert r.converged and r.error is None
            p_a, p_g = two_link_prices(REFERENCE_INSTANCE.with_alpha(r.alpha))
            assert r.price_of_alpha_anarchy == pytest.approx(p_a, abs=1e-6)
            if p_g is not None and r.alpha <= 0.5:
                # above the threshold the class split is not unique, only the flow is
                assert r.price_of_good_behavior == pytest.approx(p_g, abs=1e-4)

    def test_parallel_matches_serial(self, reference_two_link):
        net, ps = reference_two_link
        alphas = [0.1, 0.3, 0.7]
        serial = alpha_sweep(net, ps, alphas, TIGHT)
        parallel = alpha_sweep(net, ps, alphas, TIGHT, max_workers=3)
        assert [r.total_cost for r in serial] == [r.total_cost for r in parallel]

    def test_failure_is_recorded(self, reference_two_link):
        net, ps = reference_two_link
        reports = alpha_sweep(net, ps, [0.5, 1.7], TIGHT)
        assert reports[0].error is None
        assert reports[1].error is not None and not reports[1].converged
        assert math.isnan(reports[1].total_cost)

    def test_csv(self, pigou):
        net, ps = pigou
        text = sweep_to_csv(alpha_sweep(net, ps, [0.0, 0.5, 1.0], TIGHT))
        lines = text.splitlines()
        assert lines[0] == SWEEP_HEADER
        assert len(lines) == 4
        first, last = lines[1].split(","), lines[3].split(",")
        assert first[0] == "0" and first[3] == "1" and first[6] == "" and first[7] == "true"
        assert last[4] == "" and last[6] == ""
        assert float(lines[2].split(",")[6]) == pytest.approx(2.0, abs=1e-5)
