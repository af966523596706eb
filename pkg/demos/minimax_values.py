"""Exact minimax values of the short games by grid backward induction.

At one round the forecaster splits evenly and the value is 1/2.  The grid gap
bounds the discretization error of each solve.

    python3 demos/minimax_values.py
"""

from banditscape import exact_dp
from banditscape import measure_core as mc

for horizon, grid_a in ((1, 20), (2, 20)):
    res = exact_dp.solve_dpp(2, horizon, grid_b=100, grid_a=grid_a)
    print(f"K=2 T={horizon}: value {res.value:.6f}  gap {res.gap:.2e}  b0 {res.b0.round(4)}  nodes {res.nodes}")

# a common shift of every coordinate moves the value by the same amount
shifted = exact_dp.solve_dpp(2, 1, mc.point_mass([2, 2]))
print(f"K=2 T=1 from (2, 2): value {shifted.value:.6f}")

res = exact_dp.solve_dpp(3, 1, grid_b=12, grid_a=6)
print(f"K=3 T=1: value {res.value:.6f}  gap {res.gap:.2e}")
