"""The heat potential, its playable gradient and the two residuals.

    python3 demos/potential_tour.py
"""

import math

import numpy as np

from banditscape import potentials as pot

print("expected maximum of K standard Gaussians, against sqrt(2 log K):")
for k in (2, 3, 5, 10):
    print(f"  K={k:2d}  phi(0, 0) = {float(pot.heat_phi(0.0, np.zeros(k))):.4f}   sqrt(2 log K) = {math.sqrt(2 * math.log(k)):.4f}")

x = np.array([0.3, -0.2, 0.1])
for t in (0.0, 0.5, 0.9):
    g = pot.heat_grad(t, x)
    print(f"t={t}: grad {g.round(4)} (sum {g.sum():.12f})")
    print(f"  supersolution residual (sigma=1)   {float(pot.supersolution_residual(t, x)):+.2e}")
    print(f"  uniform-mix residual  (sigma=1/2)  {float(pot.subsolution_residual(t, x, np.full(8, 1 / 8))):+.2e}")
