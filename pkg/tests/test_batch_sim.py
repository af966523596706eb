import numpy as np
import pytest

from banditscape import batch_sim
from banditscape import measure_core as mc
from banditscape import strategies as stg
from banditscape.game_engine import estimate_regret, play_episode, replay_beliefs
from banditscape.strategies import StrategySpec

UNIFORM_ADV = StrategySpec("balanced_uniform_adversary")
PDE = StrategySpec("pde_forecaster")


class TestFamily:
    def test_point_mass(self):
        m = batch_sim.family_measure([1, -2], [0, 0])
        assert m.size == 1
        np.testing.assert_array_equal(m.points[0], [1, -2])

    def test_binomial_marginals(self):
        m = batch_sim.family_measure([0, 0], [3, 1])
        np.testing.assert_allclose(mc.mean(m), [1.5, 0.5])
        assert m.size == 8

    def test_uniform_adversary_beliefs_stay_in_family(self):
        # replay a game and follow the family parameters next to the exact beliefs
        k, T = 2, 12
        trace = play_episode(k, T, mc.point_mass(0, k), stg.build({"kind": "uniform_forecaster"}), stg.build({"kind": "balanced_uniform_adversary"}), seed=7)
        beliefs = replay_beliefs(mc.point_mass(0, k), trace.adversary_mixes, trace.signals)
        offset, counts = np.zeros(k, dtype=int), np.zeros(k, dtype=int)
        for n, y in enumerate(trace.signals):
            others = np.ones(k, dtype=int)
            others[y.index] = 0
            if y.positive:
                offset -= others
            counts += others
            fam = batch_sim.family_measure(offset, counts)
            assert mc.max_weight_diff(fam, beliefs[n + 1]) <= 1e-13


class TestSupport:
    @pytest.mark.parametrize(
        "k, m0, f, a, ok",
        [
            (2, mc.point_mass(0, 2), PDE, UNIFORM_ADV, True),
            (3, mc.point_mass(0, 3), PDE, UNIFORM_ADV, False),
            (3, mc.point_mass(0, 3), StrategySpec("pde_forecaster", {"at_mean": True}), UNIFORM_ADV, True),
            (2, mc.from_atoms([[0, 0], [1, 0]], [0.5, 0.5]), PDE, UNIFORM_ADV, False),
            (2, mc.point_mass([1, 0], scale=0.5), PDE, UNIFORM_ADV, False),
            (2, mc.point_mass(0, 2), PDE, StrategySpec("grid_best_response_adversary", {"depth": 2, "forecaster": {"kind": "pde_forecaster"}}), False),
            (2, mc.point_mass(0, 2), PDE, StrategySpec("grid_best_response_adversary", {"forecaster": {"kind": "mw_forecaster"}}), False),
            (3, mc.point_mass(0, 3), StrategySpec("mw_forecaster"), StrategySpec("vertex_adversary", {"subset": 1}), True),
        ],
    )
    def test_supports(self, k, m0, f, a, ok):
        got, why = batch_sim.supports(k, m0, f, a)
        assert got is ok
        assert bool(why) is not ok

    def test_refuses_unsupported(self):
        with pytest.raises(ValueError, match="unavailable"):
            batch_sim.simulate_regrets(2, 4, mc.point_mass(0, 2), PDE, StrategySpec("grid_best_response_adversary", {"depth": 2}), 5)


class TestSimulation:
    def test_deterministic(self):
        a = batch_sim.simulate_regrets(2, 32, mc.point_mass(0, 2), PDE, UNIFORM_ADV, 50, seed=3)
        b = batch_sim.simulate_regrets(2, 32, mc.point_mass(0, 2), PDE, UNIFORM_ADV, 50, seed=3)
        np.testing.assert_array_equal(a, b)

    def test_full_subset_no_regret(self):
        r = batch_sim.simulate_regrets(3, 20, mc.point_mass(0, 3), StrategySpec("uniform_forecaster"), StrategySpec("vertex_adversary", {"subset": 7}), 30)
        np.testing.assert_array_equal(r, 0.0)

    def test_vertex_against_uniform_exact_mean(self):
        # singleton {1}: X^1 gains 1 with probability 1/2 each round
        r = batch_sim.simulate_regrets(2, 40, mc.point_mass(0, 2), StrategySpec("uniform_forecaster"), StrategySpec("vertex_adversary", {"subset": 1}), 4000, seed=1)
        assert r.mean() == pytest.approx(20.0, abs=4 * r.std() / np.sqrt(len(r)))

    @pytest.mark.parametrize(
        "f, a",
        [
            (PDE, UNIFORM_ADV),
            (StrategySpec("mw_forecaster"), UNIFORM_ADV),
            (PDE, StrategySpec("grid_best_response_adversary", {"forecaster": {"kind": "pde_forecaster"}})),
            (StrategySpec("mw_forecaster"), StrategySpec("grid_best_response_adversary", {"forecaster": {"kind": "mw_forecaster"}})),
        ],
    )
    def test_agrees_with_generic_engine(self, f, a):
        k, T, n = 2, 16, 600
        m0 = mc.point_mass(0, k)
        fast = batch_sim.simulate_regrets(k, T, m0, f, a, n, seed=11)
        mean, se = estimate_regret(k, T, m0, stg.build(f), stg.build(a), n, seed=12)
        joint = np.hypot(fast.std(ddof=1) / np.sqrt(n), se)
        assert abs(fast.mean() - mean) <= 4 * joint + 1e-12

    def test_pde_mix_matches_generic_forecaster(self):
        # the convolution formula equals pde_forecaster on the expanded belief
        T = 30
        batch = batch_sim._Batch(2, T, np.zeros(2, dtype=np.int64), 1, PDE, UNIFORM_ADV)
        batch.offset[:] = [-3, 1]
        batch.counts[:] = [4, 5]
        m = batch_sim.family_measure(batch.offset[0], batch.counts[0])
        np.testing.assert_allclose(batch.mixes(9)[0], stg.pde_forecaster(9, m, T), atol=1e-12)
