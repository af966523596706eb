"""Simulation laboratory for the K-action prediction game with signal feedback.

Submodules
----------
measure_core      finitely supported measures on a scaled lattice
game_engine       game dynamics, Bayes belief updates, episode simulation
exact_dp          grid backward induction for the minimax value
potentials        heat-equation potentials and their derivatives
strategies        playable forecaster and adversary strategies
calculus_checks   numerical checks of the belief-update expansions
regret_lab        regret experiments and bound comparisons
"""

from . import calculus_checks, exact_dp, game_engine, measure_core, potentials, regret_lab, strategies
from .game_engine import Signal, belief_update, estimate_regret, play_episode
from .measure_core import DiscreteMeasure, from_atoms, point_mass
from .strategies import StrategySpec

__version__ = "0.1.0"

__all__ = [
    "calculus_checks",
    "exact_dp",
    "game_engine",
    "measure_core",
    "potentials",
    "regret_lab",
    "strategies",
    "Signal",
    "belief_update",
    "estimate_regret",
    "play_episode",
    "DiscreteMeasure",
    "from_atoms",
    "point_mass",
    "StrategySpec",
]
