"""One test per acceptance criterion, each printing a pass/fail line."""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.optimize import linprog

from banditscape import calculus_checks as cc
from banditscape import exact_dp as dp
from banditscape import game_engine as ge
from banditscape import measure_core as mc
from banditscape import potentials as pot
from banditscape import regret_lab as rl
from banditscape.game_engine import Signal

pytestmark = pytest.mark.acceptance

T2_VALUE = 0.50029174804687493


def random_case(rng):
    k = int(rng.integers(2, 4))
    m = mc.random_measure(rng, k, int(rng.integers(1, 21)), radius=6)
    if rng.random() < 0.3:
        # sparse adversary mixes exercise zero-weight branches
        a = rng.dirichlet(np.ones(2**k)) * (rng.random(2**k) < 0.5)
        a = a / a.sum() if a.sum() > 0 else np.eye(2**k)[int(rng.integers(2**k))]
    else:
        a = rng.dirichlet(np.ones(2**k))
    b = rng.dirichlet(np.ones(k))
    return k, m, a, b


def test_bayes_oracle_equivalence(criterion):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst, checked = 0.0, 0
    while checked < 1000:
        k, m, a, b = random_case(rng)
        signals = [y for y, p in ge.signal_probabilities(a, b).items() if p > 0]
        y = signals[int(rng.integers(len(signals)))]
        fast, brute = ge.belief_update(m, a, y), ge.bayes_oracle(m, a, b, y)
        same_support = fast.atoms.shape == brute.atoms.shape and np.array_equal(fast.atoms, brute.atoms)
        worst = max(worst, mc.max_weight_diff(fast, brute) if same_support else math.inf)
        checked += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 10
    criterion(1, ok, f"{checked} instances, max |dweight| = {worst:.2e}, {elapsed:.1f}s")
    assert ok


def test_mixture_consistency(criterion):
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        k, m, a, b = random_case(rng)
        parts = [(p, ge.belief_update(m, a, y)) for y, p in ge.signal_probabilities(a, b).items() if p > 0]
        mixed, direct = mc.mix(parts), ge.one_step_law(m, a, b)
        assert np.array_equal(mixed.atoms, direct.atoms)
        worst = max(worst, mc.max_weight_diff(mixed, direct))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 5
    criterion(2, ok, f"200 instances, max |dweight| = {worst:.2e}, {elapsed:.1f}s")
    assert ok


def one_round_matrix_value(x0):
    """Value of the one-round game from delta_x0 by enumerating outcomes and solving the LP."""
    subsets = [[(j >> i) & 1 for i in range(2)] for j in range(4)]
    payoff = np.array(
        [[max(x0[c] + s[c] - s[i] for c in range(2)) for s in subsets] for i in range(2)]
    )  # rows: forecaster action, cols: adversary subset
    # min_b max_j b @ payoff[:, j]  ->  variables (b0, b1, v)
    res = linprog(
        c=[0, 0, 1],
        A_ub=np.hstack([payoff.T, -np.ones((4, 1))]),
        b_ub=np.zeros(4),
        A_eq=[[1, 1, 0]],
        b_eq=[1],
        bounds=[(0, 1), (0, 1), (None, None)],
    )
    return res.fun


def test_exact_dp(criterion):
    start = time.perf_counter()
    one = dp.solve_dpp(2, 1, grid_b=100, grid_a=20)
    oracle = one_round_matrix_value([0, 0])
    ok_one = one.gap <= 0.01 and abs(one.value - 0.5) <= one.gap + 1e-12 and abs(oracle - 0.5) <= 1e-12
    shifts = []
    for c in (-2, 3):
        moved = dp.solve_dpp(2, 1, mc.point_mass([c, c]), grid_b=100, grid_a=20)
        shifts.append(abs(moved.value - (one.value + c)) <= 2 * max(one.gap, moved.gap) + 1e-12)
        shifts.append(abs(one_round_matrix_value([c, c]) - (0.5 + c)) <= 1e-12)
    two = dp.solve_dpp(2, 2, grid_b=100, grid_a=20)
    two_moved = dp.solve_dpp(2, 2, mc.point_mass([1, 1]), grid_b=100, grid_a=20)
    shifts.append(abs(two_moved.value - (two.value + 1)) <= 2 * max(two.gap, two_moved.gap) + 1e-12)
    pinned = abs(two.value - T2_VALUE) <= 1e-9
    elapsed = time.perf_counter() - start
    ok = ok_one and all(shifts) and pinned and elapsed < 120
    criterion(
        3,
        ok,
        f"v1 = {one.value:.6f} (gap {one.gap:.2e}, LP oracle {oracle:.6f}), translations ok = {all(shifts)}, "
        f"v2 = {two.value:.17g} (gap {two.gap:.2e}), {elapsed:.1f}s",
    )
    assert ok


def test_expansion_checks(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    full = [4, 16, 64, 256, 1024, 4096]
    fit = [16, 64, 256, 1024, 4096]
    origin = mc.point_mass(0, 2)
    uniform = np.full(4, 0.25)
    y = Signal(0, True)

    linear_err = 0.0
    for _ in range(10):
        k = int(rng.integers(2, 4))
        spec = cc.FunctionalSpec("linear", w=rng.normal(size=k))
        m = mc.scale(mc.random_measure(rng, k, 5, radius=3), 0.5)
        a = rng.dirichlet(np.ones(2**k))
        for sig in ge.all_signals(k):
            if ge.hat_a(a, sig) > 0:
                linear_err = max(linear_err, cc.first_order_check(spec, a, m, sig, full).max_error)

    quad = cc.second_order_check(cc.FunctionalSpec("quadratic_x", M=np.eye(2)), uniform, origin, y, full)
    sq_spec = cc.FunctionalSpec("squared_mean", g=[1.0, 1.0])
    sq_second = cc.second_order_check(sq_spec, uniform, origin, y, fit)
    sq_first = cc.first_order_check(sq_spec, uniform, origin, y, fit)
    elapsed = time.perf_counter() - start

    # the squared-mean second-order limit is reached exactly (errors at roundoff);
    # its -1/2 convergence rate shows up in the first-order residual
    ok = (
        linear_err <= 1e-12
        and quad.exact
        and sq_second.exact
        and abs(sq_second.predicted[0] - 0.25) <= 1e-15
        and -0.55 <= sq_first.slope <= -0.45
        and elapsed < 60
    )
    criterion(
        4,
        ok,
        f"linear first-order max err {linear_err:.1e}; quadratic_x second-order max err {quad.max_error:.1e}; "
        f"squared_mean second-order max err {sq_second.max_error:.1e} vs prediction 0.25, "
        f"first-order slope {sq_first.slope:.4f}; {elapsed:.1f}s",
    )
    assert ok


def test_potential_correctness(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    value = float(pot.heat_phi(0.0, np.zeros(2), 1.0))
    ok_value = abs(value - 1 / math.sqrt(math.pi)) <= 1e-6

    grad_err = 0.0
    h = 1e-5
    for _ in range(100):
        k = int(rng.integers(2, 4))
        t = float(rng.uniform(0, 0.95))
        x = rng.normal(size=k)
        fd = np.array(
            [(pot.heat_phi(t, x + h * e, 1.0) - pot.heat_phi(t, x - h * e, 1.0)) / (2 * h) for e in np.eye(k)]
        )
        grad_err = max(grad_err, float(np.max(np.abs(fd - pot.heat_grad(t, x, 1.0)))))

    sup, sub = -math.inf, math.inf
    for _ in range(100):
        k = int(rng.integers(2, 4))
        t = float(rng.uniform(0, 0.95))
        x = rng.normal(size=k)
        sup = max(sup, float(pot.supersolution_residual(t, x, 1.0)))
        sub = min(sub, float(pot.subsolution_residual(t, x, np.full(2**k, 2.0**-k), 0.5)))

    bound_ok = all(
        float(pot.heat_phi(0.0, np.zeros(k), 1.0)) <= math.sqrt(2 * math.log(k)) for k in range(2, 11)
    )
    elapsed = time.perf_counter() - start
    ok = ok_value and grad_err <= 1e-5 and sup <= 1e-7 and sub >= -1e-7 and bound_ok and elapsed < 60
    criterion(
        5,
        ok,
        f"phi(0,0) - 1/sqrt(pi) = {value - 1 / math.sqrt(math.pi):.1e}, grad FD err {grad_err:.1e}, "
        f"max supersolution residual {sup:.1e}, min subsolution residual {sub:.1e}, "
        f"sqrt(2 log K) bound K=2..10 ok = {bound_ok}, {elapsed:.1f}s",
    )
    assert ok


def test_regret_bounds(criterion):
    start = time.perf_counter()
    lines, ok = [], True
    for adversary in ({"kind": "balanced_uniform_adversary"}, {"kind": "grid_best_response_adversary"}):
        cfg = rl.ExperimentConfig.from_json(
            {"K": 2, "T": [4096], "n_episodes": 10_000, "seed": 2024, "forecaster": {"kind": "pde_forecaster"}, "adversary": adversary}
        )
        row = rl.run_experiment(cfg).rows[0]
        se = row["normalized_stderr"]
        upper = row["normalized"] <= 1.1774 * 1.15 + 3 * se
        lower = True
        if adversary["kind"] == "balanced_uniform_adversary":
            lower = row["normalized"] >= 0.2821 * 0.85 - 3 * se
        ok = ok and upper and lower
        lines.append(f"{adversary['kind']}: regret/sqrt(T) = {row['normalized']:.4f} +- {se:.4f}")
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < 600
    criterion(6, ok, "; ".join(lines) + f"; {elapsed:.1f}s")
    assert ok


def test_scaling_law(criterion):
    start = time.perf_counter()
    res = rl.sweep({"K": 2, "n_episodes": 10_000, "seed": 7}, horizons=[256, 1024, 4096])
    slope = res.fits[0]["slope"]
    elapsed = time.perf_counter() - start
    ok = 0.45 <= slope <= 0.55 and elapsed < 900
    criterion(7, ok, f"log-log slope {slope:.4f} over T = 256, 1024, 4096; {elapsed:.1f}s")
    assert ok


def test_error_budget(criterion):
    start = time.perf_counter()
    totals = [cc.total_error_budget(T, 1.0) for T in (100, 1000, 10000)]
    decreasing = totals[0] > totals[1] > totals[2]
    worst = 0.0
    for T in (100, 1000, 10000):
        for n in range(T):
            a, q = cc.error_budget(T, n), cc.error_budget_quad(T, n)
            worst = max(worst, abs(a - q) / q)
    elapsed = time.perf_counter() - start
    ok = decreasing and worst <= 1e-10 and elapsed < 10
    criterion(8, ok, f"totals {totals[0]:.4f} > {totals[1]:.4f} > {totals[2]:.4f}; max rel. quad diff {worst:.1e}; {elapsed:.1f}s")
    assert ok


CLI_CONFIGS = {
    "simulate": {"K": 2, "T": 16, "n_episodes": 4, "seed": 11},
    "dp-value": {"K": 2, "T": 1, "grid_b": 40, "grid_a": 10},
    "expansion-check": {"functional": {"kind": "squared_mean", "g": [1, 2]}, "T": [16, 64, 256]},
    "potential-probe": {"K": 3, "t": [0.0, 0.3, 0.6], "n_points": 5, "seed": 3},
    "regret-sweep": {"K": 2, "T": [64, 128, 256], "n_episodes": 200, "seed": 3,
                     "forecasters": [{"kind": "pde_forecaster"}, {"kind": "mw_forecaster"}],
                     "adversaries": [{"kind": "balanced_uniform_adversary"}, {"kind": "grid_best_response_adversary"}]},
}


def test_cli_reproducibility(criterion, tmp_path):
    results = {}
    for command, cfg in CLI_CONFIGS.items():
        path = tmp_path / f"{command}.json"
        path.write_text(json.dumps(cfg))
        outputs = []
        for run in range(2):
            prefix = tmp_path / f"{command}-{run}"
            proc = subprocess.run(
                [sys.executable, "-m", "banditscape.cli", command, "--config", str(path), "--output", str(prefix)],
                capture_output=True,
                cwd=tmp_path,
            )
            files = sorted(p for p in tmp_path.iterdir() if p.name.startswith(f"{command}-{run}"))
            outputs.append((proc.returncode, proc.stdout, [p.read_bytes() for p in files]))
        results[command] = outputs[0][0] == 0 and outputs[0] == outputs[1] and bool(outputs[0][2])
    ok = all(results.values())
    criterion(9, ok, ", ".join(f"{c}: {'identical' if v else 'DIFFERENT'}" for c, v in results.items()))
    assert ok
