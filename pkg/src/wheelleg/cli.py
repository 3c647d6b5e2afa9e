"""Command-line entry point: ``wheelleg run`` and ``wheelleg bench``.

Only two environment variables are read: ``WHEELLEG_OUT`` (default output
directory) and ``WHEELLEG_VERBOSE`` (any non-empty value enables info logs).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import ocp
from .config import ConfigError, ScenarioConfig, load_config
from .errors import SimulationError
from .sim.log import TrajectoryLog

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _load(args) -> ScenarioConfig:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return load_config(args.config, overrides)


def _artifact_paths(out: Path, name: str):
    return out / f"{name}.csv", out / f"{name}_metrics.json"


def cmd_run(args) -> int:
    from .sim.scenarios import ScenarioFailed, run_scenario

    cfg = _load(args)
    out = Path(args.out or os.environ.get("WHEELLEG_OUT") or "out")
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = _artifact_paths(out, cfg.name)
    try:
        log, metrics = run_scenario(cfg)
    except ScenarioFailed as exc:
        if exc.log is not None:
            exc.log.to_csv(csv_path)
        print(f"scenario failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except SimulationError as exc:
        print(f"simulation halted: {exc}", file=sys.stderr)
        return EXIT_FAILED
    log.to_csv(csv_path)
    metrics.to_json(json_path)
    print(metrics.table())
    print(f"wrote {csv_path} and {json_path}")
    return EXIT_OK


def bench_sequence(cfg: ScenarioConfig, steps: int | None = None):
    """Warm-started receding-horizon run, then a cold solve at every state
    the warm run solved from. Returns a table with one row per step:
    ``(step, t, warm_iterations, cold_iterations, warm_wall, cold_wall)``."""
    from .sim.scenarios import run_scenario

    if steps is not None:
        period = cfg.timing.sim_dt * cfg.timing.lfc_ticks_per_solve
        cfg = cfg.model_copy(update={"duration": steps * period, "compare_ik": False})
    cfg = cfg.model_copy(update={"horizon": cfg.horizon.model_copy(update={"warm_start": True})})
    calls = []
    holder = {}

    def hook(ctl):
        factory = ctl.factory
        holder["ctl"] = ctl

        def recording(x, t, mode):
            calls.append((np.array(x), t, mode))
            return factory(x, t, mode)

        ctl.factory = recording
        holder["factory"] = factory

    run_scenario(cfg, on_controller=hook)
    ctl = holder["ctl"]
    rows = []
    for i, ((x, t, mode), rep) in enumerate(zip(calls, ctl.reports)):
        opts = ocp.SolverOptions(max_iter=(cfg.horizon.first_max_iter if i == 0 else cfg.horizon.max_iter),
                                 tol_cost=cfg.horizon.tol_cost, tol_grad=cfg.horizon.tol_grad)
        problem = holder["factory"](x, t, mode)
        t0 = time.perf_counter()
        cold = ocp.solve(problem, None, opts)
        rows.append((i, t, rep.iterations, cold.iterations, rep.wall_time, time.perf_counter() - t0))
    return np.array(rows, dtype=float)


def bench_summary(rows: np.ndarray) -> dict:
    warm, cold = rows[:, 2], rows[:, 3]
    return {
        "steps": len(rows),
        "warm_mean_iterations": float(np.mean(warm)),
        "cold_mean_iterations": float(np.mean(cold)),
        "iteration_ratio": float(np.sum(warm) / max(np.sum(cold), 1)),
        "warm_le_cold_fraction": float(np.mean(warm <= cold)),
        "warm_lt_cold_fraction": float(np.mean(warm < cold)),
        "warm_mean_wall_s": float(np.mean(rows[:, 4])),
        "cold_mean_wall_s": float(np.mean(rows[:, 5])),
    }


def cmd_bench(args) -> int:
    cfg = _load(args)
    rows = bench_sequence(cfg, args.steps)
    print(f"{'step':>5} {'t':>8} {'warm_it':>8} {'cold_it':>8} {'warm_ms':>9} {'cold_ms':>9}")
    for i, t, w, c, ww, cw in rows:
        print(f"{int(i):5d} {t:8.3f} {int(w):8d} {int(c):8d} {1e3 * ww:9.2f} {1e3 * cw:9.2f}")
    for k, v in bench_summary(rows).items():
        print(f"{k}: {v:.6g}" if isinstance(v, float) else f"{k}: {v}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        log = TrajectoryLog(["step", "t", "warm_iterations", "cold_iterations", "warm_wall_s", "cold_wall_s", "mode"])
        for r in rows:
            log.append(r, "bench")
        log.to_csv(out / f"{cfg.name}_bench.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wheelleg", description="Wheel-legged whole-body control scenarios")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run a scenario and write trajectory + metrics"),
                        ("bench", "compare warm- and cold-started receding-horizon solves")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("config", help="scenario YAML file")
        s.add_argument("--out", help="output directory (default $WHEELLEG_OUT or ./out)")
        s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry, e.g. horizon.N=20")
        s.add_argument("--seed", type=int, help="random seed override")
        s.add_argument("--verbose", action="store_true", help="log solver progress")
        if name == "bench":
            s.add_argument("--steps", type=int, default=None, help="number of receding-horizon steps")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    verbose = args.verbose or bool(os.environ.get("WHEELLEG_VERBOSE"))
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return cmd_run(args) if args.command == "run" else cmd_bench(args)
    except ConfigError as exc:
        for msg in exc.messages:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
