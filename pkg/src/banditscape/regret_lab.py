"""Regret experiments: Monte-Carlo sweeps over (K, T) with bound comparisons.

An experiment plays a forecaster against an adversary from a fixed initial
belief for each horizon in a list and reports the mean terminal regret, its
standard error and the regret normalized by sqrt(T).  The normalized value is
compared with two reference levels:

* upper: sqrt(2 log K), the bound on the heat potential phi(0, 0) that the
  PDE forecaster (sigma = 1) guarantees;
* lower: phi_{sigma=1/2}(0, m0 / sqrt(T)), the level the balanced uniform
  adversary forces on any forecaster.

Both are asymptotic statements, so the checks allow a relative slack
``epsilon`` (0.15 by default) plus three standard errors.
"""

from __future__ import annotations

import concurrent.futures as cf
import csv
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import batch_sim
from .formatting import csv_cell, dumps
from . import measure_core as mc
from .game_engine import estimate_regret, is_balanced, summarize
from .measure_core import DiscreteMeasure
from .potentials import heat_phi
from .strategies import ADVERSARY_KINDS, FORECASTER_KINDS, StrategySpec, build, vertex_adversary

__all__ = [
    "ExperimentConfig",
    "BoundReport",
    "BoundCheck",
    "SweepResult",
    "run_experiment",
    "bound_check",
    "sweep",
    "upper_reference",
    "lower_reference",
    "analytic_floor",
    "cell_seed",
    "worker_count",
]

log = logging.getLogger(__name__)

EPSILON = 0.15
MIN_BOUND_EPISODES = 100
WORKERS_ENV = "BANDITSCAPE_WORKERS"
SLOPE_BAND = (0.45, 0.55)
ANOMALOUS_SLOPE = 0.9


def worker_count() -> int:
    """Process count from the ``BANDITSCAPE_WORKERS`` environment variable (default 1)."""
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def parse_m0(obj, k: int) -> DiscreteMeasure:
    """``"origin"``/None, an integer point ``[x1, ..., xK]`` or a serialized measure."""
    if obj is None or obj == "origin":
        return mc.point_mass(0, k)
    if isinstance(obj, dict):
        m = mc.from_json(obj)
    else:
        m = mc.point_mass(list(obj))
    if m.k != k:
        raise ValueError(f"initial belief has dimension {m.k}, expected K={k}")
    return m


@dataclass
class ExperimentConfig:
    """One forecaster against one adversary over a list of horizons.

    ``engine`` selects the simulator: ``"batch"`` (vectorized, closed belief
    family), ``"generic"`` (full belief measures) or ``"auto"`` (batch when
    supported).
    """

    k: int
    horizons: list[int]
    forecaster: StrategySpec
    adversary: StrategySpec
    n_episodes: int = 1000
    seed: int = 0
    m0: DiscreteMeasure | None = None
    output: str | None = None
    engine: str = "auto"
    epsilon: float = EPSILON

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("K must be at least 2")
        self.horizons = [int(t) for t in self.horizons]
        if not self.horizons or min(self.horizons) < 1:
            raise ValueError("horizons must be positive integers")
        if isinstance(self.forecaster, dict):
            self.forecaster = StrategySpec.from_json(self.forecaster)
        if isinstance(self.adversary, dict):
            self.adversary = StrategySpec.from_json(self.adversary)
        if not self.forecaster.is_forecaster or self.adversary.is_forecaster:
            raise ValueError(
                f"invalid strategy combination ({self.forecaster.kind}, {self.adversary.kind}); "
                f"forecaster kinds: {', '.join(FORECASTER_KINDS)}; adversary kinds: {', '.join(ADVERSARY_KINDS)}"
            )
        if self.adversary.kind == "grid_best_response_adversary" and "forecaster" not in self.adversary.params:
            # the best response targets the forecaster actually in play
            params = dict(self.adversary.params, forecaster=self.forecaster.to_json())
            self.adversary = StrategySpec(self.adversary.kind, params)
        if self.m0 is None:
            self.m0 = mc.point_mass(0, self.k)
        if self.n_episodes < 1:
            raise ValueError("n_episodes must be at least 1")
        if self.engine not in ("auto", "batch", "generic"):
            raise ValueError(f"unknown engine {self.engine!r}")

    @classmethod
    def from_json(cls, obj) -> "ExperimentConfig":
        if isinstance(obj, str):
            obj = json.loads(obj)
        k = int(obj["K"])
        horizons = obj["T"] if isinstance(obj["T"], list) else [obj["T"]]
        return cls(
            k=k,
            horizons=horizons,
            forecaster=StrategySpec.from_json(obj.get("forecaster", {"kind": "pde_forecaster"})),
            adversary=StrategySpec.from_json(obj.get("adversary", {"kind": "balanced_uniform_adversary"})),
            n_episodes=int(obj.get("n_episodes", 1000)),
            seed=int(obj.get("seed", 0)),
            m0=parse_m0(obj.get("m0"), k),
            output=obj.get("output"),
            engine=obj.get("engine", "auto"),
            epsilon=float(obj.get("epsilon", EPSILON)),
        )

    def to_json(self) -> dict:
        return {
            "K": self.k,
            "T": list(self.horizons),
            "forecaster": self.forecaster.to_json(),
            "adversary": self.adversary.to_json(),
            "n_episodes": self.n_episodes,
            "seed": self.seed,
            "m0": mc.to_json(self.m0),
            "output": self.output,
            "engine": self.engine,
            "epsilon": self.epsilon,
        }


def upper_reference(k: int, m0: DiscreteMeasure | None = None, horizon: int = 1) -> float:
    """sqrt(2 log K), shifted by int max(x / sqrt(T)) dm0 when m0 is not the origin."""
    base = math.sqrt(2.0 * math.log(k))
    if m0 is None:
        return base
    return base + float(m0.weights @ (m0.points / math.sqrt(horizon)).max(axis=1))


def lower_reference(k: int, m0: DiscreteMeasure | None = None, horizon: int = 1) -> float:
    """phi_{sigma=1/2}(0, m0 / sqrt(T)), the level forced by the uniform adversary."""
    if m0 is None:
        m0 = mc.point_mass(0, k)
    return float(m0.weights @ heat_phi(0.0, m0.points / math.sqrt(horizon), sigma=0.5))


def analytic_floor(k: int) -> float:
    """0.065 sqrt(log K) - 0.35, a closed-form lower estimate of the Gaussian level.

    Negative, hence uninformative, unless log K > (0.35 / 0.065)^2 (about 29).
    """
    return 0.065 * math.sqrt(math.log(k)) - 0.35


def cell_seed(master: int, k: int, horizon: int) -> int:
    """Seed of the (K, T) cell derived from the master seed.

    Strategy pairs in a sweep share the seed of a cell, so their comparison
    uses common random numbers.
    """
    ss = np.random.SeedSequence(master, spawn_key=(k, horizon))
    return int(ss.generate_state(1, np.uint32)[0])


def _adversary_balanced_uniform(spec: StrategySpec) -> bool:
    return spec.kind == "balanced_uniform_adversary"


def _adversary_is_balanced(spec: StrategySpec, k: int) -> bool:
    if spec.kind == "balanced_uniform_adversary":
        return True
    if spec.kind == "vertex_adversary":
        return is_balanced(vertex_adversary(int(spec.params["subset"]), k))
    return False


def _estimate(config: ExperimentConfig, horizon: int, seed: int) -> tuple[float, float, str]:
    ok, why = batch_sim.supports(config.k, config.m0, config.forecaster, config.adversary)
    if config.engine == "batch" and not ok:
        raise ValueError(f"batch engine unavailable: {why}")
    if ok and config.engine != "generic":
        samples = batch_sim.simulate_regrets(
            config.k, horizon, config.m0, config.forecaster, config.adversary, config.n_episodes, seed
        )
        return (*summarize(samples), "batch")
    mean, stderr = estimate_regret(
        config.k, horizon, config.m0, build(config.forecaster), build(config.adversary), config.n_episodes, seed
    )
    return mean, stderr, "generic"


def _run_cell(args):
    config, horizon = args
    seed = cell_seed(config.seed, config.k, horizon)
    mean, stderr, engine = _estimate(config, horizon, seed)
    root = math.sqrt(horizon)
    return {
        "K": config.k,
        "T": horizon,
        "forecaster": config.forecaster.ident,
        "adversary": config.adversary.ident,
        "n": config.n_episodes,
        "mean": mean,
        "stderr": stderr,
        "seed": seed,
        "normalized": mean / root,
        "normalized_stderr": stderr / root,
        "upper_ref": upper_reference(config.k, config.m0, horizon),
        "lower_ref": lower_reference(config.k, config.m0, horizon),
        "analytic_floor": analytic_floor(config.k),
        "balanced": _adversary_is_balanced(config.adversary, config.k),
        "uniform_adversary": _adversary_balanced_uniform(config.adversary),
        "engine": engine,
    }


CSV_COLUMNS = [
    "K", "T", "forecaster", "adversary", "n", "mean", "stderr", "seed", "normalized",
    "normalized_stderr", "upper_ref", "lower_ref", "analytic_floor", "upper_pass", "lower_pass", "engine",
]


@dataclass
class BoundCheck:
    """Margins of one row against the references; positive margin means pass."""

    upper_margin: float
    lower_margin: float | None

    @property
    def upper_pass(self) -> bool:
        return self.upper_margin >= 0

    @property
    def lower_pass(self) -> bool | None:
        return None if self.lower_margin is None else self.lower_margin >= 0

    @property
    def passed(self) -> bool:
        return self.upper_pass and self.lower_pass is not False


@dataclass
class BoundReport:
    """Per-(K, T) regret estimates with reference levels."""

    config: ExperimentConfig
    rows: list[dict] = field(default_factory=list)

    def checks(self) -> list[BoundCheck]:
        return [bound_check_row(r, self.config.epsilon) for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row, chk in zip(self.rows, self.checks()):
            full = dict(row, upper_pass=chk.upper_pass, lower_pass=chk.lower_pass)
            writer.writerow([csv_cell(full[c]) for c in CSV_COLUMNS])
        return buf.getvalue()

    def summary(self) -> dict:
        checks = self.checks()
        return {
            "config": self.config.to_json(),
            "rows": [
                {
                    **row,
                    "upper_margin": c.upper_margin,
                    "lower_margin": c.lower_margin,
                    "upper_pass": c.upper_pass,
                    "lower_pass": c.lower_pass,
                }
                for row, c in zip(self.rows, checks)
            ],
            "passed": all(c.passed for c in checks),
        }

    def to_json(self) -> str:
        return dumps(self.summary())

    def write(self, prefix: str):
        """Write ``prefix.csv`` and ``prefix.json``."""
        with open(prefix + ".csv", "w", newline="") as fh:
            fh.write(self.to_csv())
        with open(prefix + ".json", "w") as fh:
            fh.write(self.to_json() + "\n")


def _map_cells(fn, cells, workers: int | None):
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with cf.ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves input order, so outputs do not depend on scheduling
        return list(pool.map(fn, cells))


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> BoundReport:
    """Estimate the regret for every horizon of the config.

    Each (K, T) cell draws from its own seed derived from the master seed, so
    results do not depend on the worker count.  Writes CSV and JSON when
    ``config.output`` is set.
    """
    if config.n_episodes < MIN_BOUND_EPISODES:
        log.warning("n_episodes=%d is below %d; bound checks are not meaningful", config.n_episodes, MIN_BOUND_EPISODES)
    rows = _map_cells(_run_cell, [(config, t) for t in config.horizons], workers)
    report = BoundReport(config, rows)
    if config.output:
        report.write(config.output)
    return report


def bound_check_row(row: dict, epsilon: float = EPSILON) -> BoundCheck:
    root = math.sqrt(row["T"])
    slack = 3.0 * row["stderr"] / root
    upper = row["upper_ref"] * (1.0 + epsilon) + slack - row["normalized"]
    lower = None
    if row["uniform_adversary"]:
        lower = row["normalized"] - (row["lower_ref"] * (1.0 - epsilon) - slack)
    return BoundCheck(upper, lower)


def bound_check(report: BoundReport, epsilon: float | None = None) -> list[BoundCheck]:
    """Upper check on every row; lower check on rows against the uniform adversary.

    upper: regret / sqrt(T) <= upper_ref (1 + eps) + 3 stderr / sqrt(T)
    lower: regret / sqrt(T) >= lower_ref (1 - eps) - 3 stderr / sqrt(T)

    The analytic floor is carried in the rows for reference only.
    """
    eps = report.config.epsilon if epsilon is None else epsilon
    return [bound_check_row(r, eps) for r in report.rows]


def scaling_slope(horizons: Sequence[int], means: Sequence[float]) -> float:
    """Least-squares slope of log(mean regret) against log T; nan if any mean is not positive."""
    means = np.asarray(means, dtype=np.float64)
    if np.any(means <= 0):
        return math.nan
    return float(np.polyfit(np.log(np.asarray(horizons, dtype=np.float64)), np.log(means), 1)[0])


@dataclass
class SweepResult:
    reports: list[BoundReport]
    fits: list[dict]
    comparisons: list[dict]

    def to_csv(self) -> str:
        out = [self.reports[0].to_csv()] + [r.to_csv().split("\n", 1)[1] for r in self.reports[1:]]
        return "".join(out)

    def summary(self) -> dict:
        return {
            "fits": self.fits,
            "comparisons": self.comparisons,
            "passed": all(r.summary()["passed"] for r in self.reports),
        }

    def to_json(self) -> str:
        return dumps(self.summary())

    def write(self, prefix: str):
        with open(prefix + ".csv", "w", newline="") as fh:
            fh.write(self.to_csv())
        with open(prefix + ".json", "w") as fh:
            fh.write(self.to_json() + "\n")


def _compare(reports: list[BoundReport]) -> list[dict]:
    """Multiplicative weights against the PDE forecaster, both facing the grid best response.

    Records whether mw regret >= pde regret - 3 joint stderr at the largest T;
    an outcome below that line is kept as an exception report, not an error.
    """
    out = []
    by_pair = {(r.config.forecaster.kind, r.config.adversary.kind): r for r in reports}
    mw = by_pair.get(("mw_forecaster", "grid_best_response_adversary"))
    pde = by_pair.get(("pde_forecaster", "grid_best_response_adversary"))
    if mw is None or pde is None:
        return out
    row_mw, row_pde = mw.rows[-1], pde.rows[-1]
    joint = math.hypot(row_mw["stderr"], row_pde["stderr"])
    margin = row_mw["mean"] - (row_pde["mean"] - 3.0 * joint)
    entry = {
        "T": row_mw["T"],
        "mw_mean": row_mw["mean"],
        "pde_mean": row_pde["mean"],
        "joint_stderr": joint,
        "margin": margin,
        "outcome": "mw_not_better" if margin >= 0 else "exception_mw_better",
    }
    if margin < 0:
        log.warning("mw baseline beat the PDE forecaster against the grid best response: %s", entry)
    out.append(entry)
    return out


def sweep(
    template: dict,
    horizons: Sequence[int] = (256, 1024, 4096),
    forecasters: Sequence[dict] | None = None,
    adversaries: Sequence[dict] | None = None,
    workers: int | None = None,
) -> SweepResult:
    """Run every forecaster x adversary pair over ``horizons`` and fit the scaling law.

    ``template`` holds the shared config fields (K, n_episodes, seed, m0,
    engine, epsilon).  Each pair gets a fit of log(mean regret) vs log T;
    slopes in [0.45, 0.55] are the sqrt(T) law and slopes above 0.9 are
    flagged anomalous (linear regret).
    """
    horizons = [int(t) for t in horizons]
    if len(horizons) < 3:
        raise ValueError("a scaling fit needs at least three horizons")
    forecasters = forecasters or [{"kind": "pde_forecaster"}]
    adversaries = adversaries or [{"kind": "balanced_uniform_adversary"}]
    configs = []
    for f in forecasters:
        for a in adversaries:
            obj = dict(template, T=horizons, forecaster=f, adversary=a)
            obj.pop("output", None)
            configs.append(ExperimentConfig.from_json(obj))
    cells = [(c, t) for c in configs for t in horizons]
    rows = _map_cells(_run_cell, cells, workers)
    reports = []
    fits = []
    for i, c in enumerate(configs):
        rep = BoundReport(c, rows[i * len(horizons) : (i + 1) * len(horizons)])
        reports.append(rep)
        slope = scaling_slope(horizons, [r["mean"] for r in rep.rows])
        fits.append(
            {
                "forecaster": c.forecaster.ident,
                "adversary": c.adversary.ident,
                "slope": slope,
                "sqrt_law": bool(SLOPE_BAND[0] <= slope <= SLOPE_BAND[1]),
                "anomalous": bool(slope > ANOMALOUS_SLOPE),
            }
        )
        if slope > ANOMALOUS_SLOPE:
            log.warning("near-linear regret growth (slope %.3f) for %s vs %s", slope, c.forecaster.ident, c.adversary.ident)
    result = SweepResult(reports, fits, _compare(reports))
    if template.get("output"):
        result.write(template["output"])
    return result
