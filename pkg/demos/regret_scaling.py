"""Regret of three forecasters against two adversaries over growing horizons.

Prints the normalized regret of every pair and the fitted exponent of
regret ~ T^slope.  Takes about a minute.

    python3 demos/regret_scaling.py
"""

from banditscape import regret_lab

result = regret_lab.sweep(
    {"K": 2, "n_episodes": 4000, "seed": 1},
    horizons=[256, 1024, 4096],
    forecasters=[{"kind": "pde_forecaster"}, {"kind": "mw_forecaster"}, {"kind": "uniform_forecaster"}],
    adversaries=[{"kind": "balanced_uniform_adversary"}, {"kind": "grid_best_response_adversary"}],
)
for report, fit in zip(result.reports, result.fits):
    cells = "  ".join(f"T={r['T']}: {r['normalized']:.3f}" for r in report.rows)
    print(f"{fit['forecaster']:>22} vs {fit['adversary'][:30]:<30} {cells}  slope {fit['slope']:.3f}")
for c in result.comparisons:
    print(f"mw vs pde against the best response at T={c['T']}: {c['outcome']} (margin {c['margin']:.2f})")
print(f"reference levels: upper {regret_lab.upper_reference(2):.4f}, lower {regret_lab.lower_reference(2):.4f}")
