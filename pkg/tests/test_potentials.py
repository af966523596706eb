import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from banditscape import potentials as pot


def fd_grad(t, x, sigma=1.0, h=1e-5):
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (pot.heat_phi(t, x + e, sigma) - pot.heat_phi(t, x - e, sigma)) / (2 * h)
    return out


class TestValues:
    def test_origin_two_actions(self):
        assert pot.heat_phi(0.0, [0.0, 0.0]) == pytest.approx(1 / math.sqrt(math.pi), abs=1e-14)

    def test_half_sigma(self):
        assert pot.heat_phi(0.0, [0.0, 0.0], sigma=0.5) == pytest.approx(0.5 / math.sqrt(math.pi), abs=1e-14)

    def test_known_expected_max_of_three(self):
        # E max of three iid standard normals is 3 / (2 sqrt(pi))
        assert pot.heat_phi(0.0, np.zeros(3)) == pytest.approx(1.5 / math.sqrt(math.pi), abs=1e-13)

    @pytest.mark.parametrize("k", range(2, 11))
    def test_below_sqrt_two_log_k(self, k):
        assert pot.heat_phi(0.0, np.zeros(k)) <= math.sqrt(2 * math.log(k))

    def test_terminal_condition(self, rng):
        x = rng.normal(size=(10, 3))
        np.testing.assert_array_equal(pot.heat_phi(1.0, x), x.max(axis=1))

    def test_qmc_agrees(self, rng):
        x = rng.normal(size=(3, 3))
        quad = pot.heat_phi(0.2, x)
        qmc = pot.heat_phi(0.2, x, method="qmc")
        np.testing.assert_allclose(quad, qmc, atol=2e-4)

    def test_two_action_closed_form(self, rng):
        x = 2 * rng.normal(size=(40, 2))
        for t in (0.0, 0.4, 0.97):
            np.testing.assert_allclose(pot.heat_phi(t, x), pot.heat_phi_two(t, x), atol=1e-14)
            np.testing.assert_allclose(pot.heat_grad(t, x), pot.heat_grad_two(t, x), atol=1e-14)
            np.testing.assert_allclose(pot.heat_hessian(t, x), pot.heat_hessian_two(t, x), atol=1e-13)

    def test_rejects_bad_time(self):
        with pytest.raises(ValueError):
            pot.heat_phi(1.5, [0.0, 0.0])

    def test_gradient_undefined_on_terminal_tie(self):
        with pytest.raises(ValueError):
            pot.heat_grad(1.0, [0.0, 0.0])


class TestDerivatives:
    def test_grad_matches_differences(self, rng):
        for _ in range(20):
            k = int(rng.integers(2, 5))
            x, t = rng.normal(size=k), float(rng.uniform(0, 0.95))
            np.testing.assert_allclose(pot.heat_grad(t, x), fd_grad(t, x), atol=1e-8)

    def test_hessian_matches_differences(self, rng):
        x, t, h = rng.normal(size=3), 0.3, 1e-5
        fd = np.stack([(pot.heat_grad(t, x + h * e) - pot.heat_grad(t, x - h * e)) / (2 * h) for e in np.eye(3)])
        np.testing.assert_allclose(pot.heat_hessian(t, x), fd, atol=1e-8)

    def test_time_derivative_matches_differences(self, rng):
        x, t, h = rng.normal(size=3), 0.4, 1e-6
        fd = (pot.heat_phi(t + h, x) - pot.heat_phi(t - h, x)) / (2 * h)
        assert pot.heat_dt(t, x) == pytest.approx(fd, abs=1e-7)

    def test_heat_equation(self, rng):
        for sigma in (0.5, 1.0, 2.0):
            x = rng.normal(size=4)
            lap = np.trace(pot.heat_hessian(0.25, x, sigma))
            assert pot.heat_dt(0.25, x, sigma) + 0.5 * sigma**2 * lap == pytest.approx(0.0, abs=1e-12)

    @given(st.lists(st.floats(-3, 3), min_size=2, max_size=5), st.floats(0, 0.99))
    def test_gradient_in_simplex(self, x, t):
        g = pot.heat_grad(t, np.array(x))
        assert np.all(g >= 0)
        assert g.sum() == pytest.approx(1.0, abs=1e-12)

    @given(st.lists(st.floats(-3, 3), min_size=2, max_size=5), st.floats(0, 0.99), st.floats(-5, 5))
    def test_translation(self, x, t, c):
        x = np.array(x)
        assert pot.heat_phi(t, x + c) == pytest.approx(pot.heat_phi(t, x) + c, abs=1e-12)

    def test_hessian_rows_sum_to_zero(self, rng):
        h = pot.heat_hessian(0.5, rng.normal(size=4))
        np.testing.assert_allclose(h.sum(axis=1), 0.0, atol=1e-14)
        np.testing.assert_allclose(h, h.T)


class TestResiduals:
    def test_supersolution_two_actions(self, rng):
        # sup of v'Hv over vertex directions is H22 (or H11); residual = -H/2 < 0
        x, t = rng.normal(size=2), 0.3
        h = pot.heat_hessian_two(t, x)
        assert pot.supersolution_residual(t, x) == pytest.approx(-0.5 * h[0, 0], abs=1e-13)

    def test_supersolution_sign(self, rng):
        for _ in range(30):
            k = int(rng.integers(2, 5))
            assert pot.supersolution_residual(float(rng.uniform(0, 0.99)), 2 * rng.normal(size=k)) <= 1e-12

    def test_subsolution_is_an_equality_for_uniform(self, rng):
        for k in (2, 3):
            a = np.full(2**k, 2.0**-k)
            for _ in range(10):
                r = pot.subsolution_residual(float(rng.uniform(0, 0.99)), 2 * rng.normal(size=k), a)
                assert abs(r) <= 1e-10

    def test_subsolution_requires_balance(self):
        with pytest.raises(ValueError):
            pot.subsolution_residual(0.1, [0.0, 0.0], np.eye(4)[1])

    def test_direction_matrix_uniform(self):
        # uniform a, K = 2, action 0: E e_{j^c} e_{j^c}' over j containing 0, plus e_j e_j' over j not containing 0
        m = pot.direction_matrix(0, np.full(4, 0.25))
        np.testing.assert_allclose(m, [[0.0, 0.0], [0.0, 0.5]])


class TestGrowth:
    def test_scaled_derivatives_flat(self, rng):
        probe = pot.derivative_growth_probe(1.0, 2, [0.0, 0.5, 0.9, 0.99], rng.normal(size=(6, 2)))
        assert probe.bounded, probe.slopes
        assert np.isfinite(probe.constant) and probe.constant > 0

    def test_wrapper(self):
        hp = pot.HeatPotential(3, 0.5)
        assert hp.phi(0.0, np.zeros(3)) == pytest.approx(0.5 * 1.5 / math.sqrt(math.pi))
        with pytest.raises(ValueError):
            pot.HeatPotential(1)
