"""Command-line entry point: ``anchor-mppi {run,batch,sweep,scenario gen}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from anchor_mppi.config import EnsembleConfig, load_config, save_config
from anchor_mppi.harness import SCENARIO_KINDS, density_sweep, make_scenario, run_batch, run_episode
from anchor_mppi.sim import KINDS, Scenario, generate_scenario


def _seeds(text: str) -> list[int]:
    """``"0-4"`` or ``"1,3,5"`` or a mix such as ``"0-2,7"``."""
    out: list[int] = []
    for part in filter(None, text.split(",")):
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _caps(text: str | None) -> list[float | None]:
    if not text:
        return [None]
    return [None if c in ("none", "inf") else float(c) for c in text.split(",")]


def _config(path: str | None) -> EnsembleConfig:
    return load_config(path) if path else EnsembleConfig()


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (flat parameter names)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--timeout", type=float, default=60.0, help="episode timeout, s")


def cmd_run(args) -> int:
    cfg = _config(args.config)
    scene = Scenario.load(args.scenario) if args.scenario else make_scenario(args.kind, args.seed)
    cap = _caps(args.cap)[0]
    res = run_episode(scene, cfg, seed=args.seed, cap=cap, timeout=args.timeout)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    traj = out / f"{scene.kind}_seed{args.seed}.csv"
    res.trajectory.write_csv(traj)
    summary = {
        "scenario": scene.kind,
        "seed": args.seed,
        "cap": cap,
        "status": res.status,
        "duration": res.duration,
        "metrics": res.metrics.as_dict() if res.metrics else None,
        "trajectory": str(traj),
    }
    (out / "episode.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    return 0


def cmd_batch(args) -> int:
    report = run_batch(
        args.kind,
        _seeds(args.seeds),
        _caps(args.caps),
        _config(args.config),
        workers=args.workers,
        out_dir=args.out,
        timeout=args.timeout,
    )
    for entry in report.summary():
        print(f"{entry['scenario']} cap={entry['cap']} success {entry['successes']}/{entry['episodes']} = {entry['success_rate']:.3f}")
    return 0


def cmd_sweep(args) -> int:
    modes = ["random", "fixed"] if args.heights == "both" else [args.heights]
    counts = [int(c) for c in args.counts.split(",")]
    out = Path(args.out)
    for mode in modes:
        report = density_sweep(counts, mode, _seeds(args.seeds), _config(args.config), cap=_caps(args.cap)[0], workers=args.workers, timeout=args.timeout)
        report.write(out / mode)
        for c in report.cells():
            print(f"{mode} count={c['count']} mean_vel={c['mean_vel']:.3f} max_vel={c['max_vel']:.3f} success={c['success_rate']:.2f}")
    return 0


def cmd_scenario_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for seed in _seeds(args.seeds):
        scene = generate_scenario(args.kind, seed)
        path = out / f"{args.kind}_seed{seed}.json"
        scene.save(path)
        print(path)
    return 0


def cmd_config_dump(args) -> int:
    save_config(_config(args.config), args.path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anchor-mppi", description="Anchor-guided ensemble MPPI simulator and benchmark harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="fly one episode")
    p.add_argument("--kind", choices=SCENARIO_KINDS, default="forest")
    p.add_argument("--scenario", help="scenario JSON file (overrides --kind)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", help="velocity-cap label, m/s")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="episodes over seeds and velocity caps")
    p.add_argument("--kind", choices=SCENARIO_KINDS, default="forest")
    p.add_argument("--seeds", default="0-9", help="e.g. 0-49 or 1,2,5")
    p.add_argument("--caps", help="comma-separated velocity caps, m/s")
    p.add_argument("--workers", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("sweep", help="obstacle-density sweep")
    p.add_argument("--counts", default="200,400,600,800,1000")
    p.add_argument("--heights", choices=("random", "fixed", "both"), default="both")
    p.add_argument("--seeds", default="0-4")
    p.add_argument("--cap", help="velocity-cap label, m/s")
    p.add_argument("--workers", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("scenario", help="scenario utilities")
    ssub = p.add_subparsers(dest="scenario_command", required=True)
    g = ssub.add_parser("gen", help="write generated scenarios as JSON")
    g.add_argument("--kind", choices=KINDS, default="forest")
    g.add_argument("--seeds", default="0")
    g.add_argument("--out", default="scenarios")
    g.set_defaults(func=cmd_scenario_gen)

    p = sub.add_parser("config", help="write the effective config as JSON")
    p.add_argument("path")
    p.add_argument("--config")
    p.set_defaults(func=cmd_config_dump)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
