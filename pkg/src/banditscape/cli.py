"""Command-line entry point: ``banditscape <command> --config <json>``.

Commands
--------
simulate          play episodes and write their traces as JSON lines
dp-value          exact minimax value by grid backward induction
expansion-check   first/second-order expansion checks as CSV + JSON
potential-probe   heat potential, gradient and residuals on points, as CSV
regret-sweep      regret Monte-Carlo over horizons and strategy pairs

Every command is deterministic given its config: running it twice produces
byte-identical output.  The worker count of ``regret-sweep`` comes from the
``BANDITSCAPE_WORKERS`` environment variable and does not change results.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys

import numpy as np

from . import calculus_checks as cc
from . import exact_dp
from . import measure_core as mc
from . import potentials as pot
from . import regret_lab
from .formatting import csv_cell, dumps
from .game_engine import Signal, play_episode
from .strategies import build


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    if path == "-":
        return json.load(sys.stdin)
    with open(path) as fh:
        return json.load(fh)


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def parse_signal(obj) -> Signal:
    """``"+1"``, ``"-2"`` or the integer codes 1, -2 (1-based action labels)."""
    code = int(str(obj).strip())
    return Signal.from_int(code)


def parse_subset_mix(obj, k: int) -> np.ndarray:
    if obj is None or obj == "uniform":
        return np.full(2**k, 2.0**-k)
    a = np.asarray(obj, dtype=np.float64)
    if a.shape != (2**k,):
        raise ValueError(f"subset mix must have 2**K = {2**k} entries")
    return a / a.sum()


def cmd_simulate(cfg: dict) -> str:
    exp = regret_lab.ExperimentConfig.from_json(dict(cfg, n_episodes=cfg.get("n_episodes", 1)))
    horizon = exp.horizons[0]
    fore, adv = build(exp.forecaster), build(exp.adversary)
    keep = bool(cfg.get("beliefs", True))
    seeds = np.random.SeedSequence(exp.seed).generate_state(exp.n_episodes, np.uint32)
    lines = []
    for s in seeds:
        trace = play_episode(exp.k, horizon, exp.m0, fore, adv, seed=int(s), keep_beliefs=keep)
        lines.append(dumps(trace.to_json(), indent=None))
    return "\n".join(lines) + "\n"


def cmd_dp_value(cfg: dict) -> str:
    m0 = regret_lab.parse_m0(cfg.get("m0"), int(cfg.get("K", 2)))
    res = exact_dp.solve_dpp(
        int(cfg.get("K", 2)),
        int(cfg.get("T", 2)),
        m0,
        grid_b=int(cfg.get("grid_b", exact_dp.DEFAULT_GRID_B)),
        grid_a=None if cfg.get("grid_a") is None else int(cfg["grid_a"]),
        max_nodes=int(cfg.get("max_nodes", exact_dp.DEFAULT_MAX_NODES)),
    )
    return dumps(res.to_json()) + "\n"


def _measure_on_lattice(obj, k: int) -> mc.DiscreteMeasure:
    if obj is None or obj == "origin":
        return mc.point_mass(0, k)
    return mc.from_json(obj)


def cmd_expansion_check(cfg: dict) -> tuple[str, str]:
    spec = cc.FunctionalSpec.from_json(cfg["functional"])
    k = spec.k
    a = parse_subset_mix(cfg.get("a"), k)
    m = _measure_on_lattice(cfg.get("m0"), k)
    y = parse_signal(cfg.get("signal", "+1"))
    ts = cfg.get("T", [16, 64, 256, 1024, 4096])
    order = cfg.get("order", "both")
    orders = [1, 2] if order == "both" else [int(order)]
    reports = []
    for o in orders:
        check = cc.first_order_check if o == 1 else cc.second_order_check
        reports.append(check(spec, a, m, y, ts))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["order", "T", "measured", "predicted", "error"])
    for rep in reports:
        for row in rep.rows():
            writer.writerow([rep.order] + [csv_cell(v) if isinstance(v, float) else v for v in row])
    summary = {"reports": [r.summary() for r in reports], "passed": all(r.passed for r in reports)}
    return buf.getvalue(), dumps(summary) + "\n"


def cmd_potential_probe(cfg: dict) -> str:
    k = int(cfg.get("K", 2))
    sigma = float(cfg.get("sigma", 1.0))
    ts = [float(t) for t in cfg.get("t", [0.0, 0.25, 0.5, 0.75])]
    if any(not 0.0 <= t < 1.0 for t in ts):
        raise ValueError("probe times must lie in [0, 1)")
    if "points" in cfg:
        pts = np.asarray(cfg["points"], dtype=np.float64).reshape(-1, k)
    else:
        rng = np.random.default_rng(int(cfg.get("seed", 0)))
        pts = rng.normal(scale=float(cfg.get("scale", 1.0)), size=(int(cfg.get("n_points", 10)), k))
    uniform = np.full(2**k, 2.0**-k)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["t"] + [f"x{i + 1}" for i in range(k)] + ["phi"] + [f"grad{i + 1}" for i in range(k)]
        + ["dt", "supersolution_residual", "uniform_residual"]
    )
    for t in ts:
        phi = pot.heat_phi(t, pts, sigma)
        grad = pot.heat_grad(t, pts, sigma)
        dt = pot.heat_dt(t, pts, sigma)
        for p, f, g, d in zip(pts, phi, grad, dt):
            sup = pot.supersolution_residual(t, p, sigma)
            sub = pot.subsolution_residual(t, p, uniform, sigma)
            writer.writerow([csv_cell(v) for v in [t, *p, f, *g, d, sup, sub]])
    return buf.getvalue()


def cmd_regret_sweep(cfg: dict) -> tuple[str, str]:
    horizons = cfg.get("T", [256, 1024, 4096])
    template = {key: cfg[key] for key in ("K", "n_episodes", "seed", "m0", "engine", "epsilon") if key in cfg}
    forecasters = cfg.get("forecasters") or [cfg.get("forecaster", {"kind": "pde_forecaster"})]
    adversaries = cfg.get("adversaries") or [cfg.get("adversary", {"kind": "balanced_uniform_adversary"})]
    if len(horizons) >= 3:
        result = regret_lab.sweep(template, horizons, forecasters, adversaries)
        return result.to_csv(), result.to_json() + "\n"
    # fewer than three horizons: plain experiments without a scaling fit
    reports = []
    for f in forecasters:
        for a in adversaries:
            exp = regret_lab.ExperimentConfig.from_json(dict(template, T=horizons, forecaster=f, adversary=a))
            reports.append(regret_lab.run_experiment(exp))
    text = reports[0].to_csv() + "".join(r.to_csv().split("\n", 1)[1] for r in reports[1:])
    return text, dumps({"reports": [r.summary() for r in reports]}) + "\n"


def _write_pair(csv_text: str, json_text: str, output: str | None):
    if output:
        _emit(csv_text, output + ".csv")
        _emit(json_text, output + ".json")
        sys.stdout.write(json_text)
    else:
        sys.stdout.write(csv_text)
        sys.stdout.write(json_text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="banditscape", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [
        ("simulate", "play episodes and write JSON-lines traces"),
        ("dp-value", "minimax value by grid backward induction"),
        ("expansion-check", "expansion checks of the belief update"),
        ("potential-probe", "heat potential values and residuals"),
        ("regret-sweep", "regret Monte-Carlo and bound checks"),
    ]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON config file ('-' for stdin)")
        p.add_argument("--output", help="output path (prefix for CSV + JSON pairs)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "dp-value":
            p.add_argument("--k", type=int)
            p.add_argument("--t", type=int)
            p.add_argument("--grid-b", type=int)
            p.add_argument("--grid-a", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    cfg = _load_config(args.config)
    output = args.output or cfg.get("output")
    try:
        if args.command == "simulate":
            _emit(cmd_simulate(cfg), output)
        elif args.command == "dp-value":
            for flag, key in (("k", "K"), ("t", "T"), ("grid_b", "grid_b"), ("grid_a", "grid_a")):
                if getattr(args, flag) is not None:
                    cfg[key] = getattr(args, flag)
            _emit(cmd_dp_value(cfg), output)
        elif args.command == "expansion-check":
            _write_pair(*cmd_expansion_check(cfg), output)
        elif args.command == "potential-probe":
            _emit(cmd_potential_probe(cfg), output)
        elif args.command == "regret-sweep":
            cfg.pop("output", None)
            _write_pair(*cmd_regret_sweep(cfg), output)
    except (ValueError, KeyError, exact_dp.DPBudgetExceeded) as exc:
        print(f"banditscape {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
