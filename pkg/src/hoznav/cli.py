"""``hoznav`` command line: gen, build-graph, run, ablate, report."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .pipeline import (
    Workspace,
    cmd_ablate,
    cmd_build_graph,
    cmd_gen,
    cmd_report,
    cmd_run,
    load_config,
    render_table,
    resolve_config,
)
from .policy import MODES


def _modes(text: str) -> tuple[str, ...]:
    modes = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in modes if m not in MODES]
    if bad or not modes:
        raise argparse.ArgumentTypeError(f"unknown mode(s) {bad}; choose from {', '.join(MODES)}")
    return modes


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--out", type=Path, default=Path("hoz-work"), help="workspace directory (default: hoz-work)")
    p.add_argument("--config", type=Path, help="JSON config file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=int, help="zones per room graph")
    p.add_argument("--epsilon", type=float, help="adjacency distance threshold in grid units")
    p.add_argument("--alpha", type=float, help="overlap smoothing in the matching distance")
    p.add_argument("--beta", type=float, help="done-reminder gain")
    p.add_argument("--lambda", dest="lam", type=float, help="online zone update rate")
    p.add_argument("--mode", dest="modes", type=_modes, help=f"comma-separated policy modes ({', '.join(MODES)})")
    p.add_argument("--budget", type=int, help="step budget per episode")
    p.add_argument("--trials", type=int, help="repeated trials per (room, target)")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.add_argument("--shuffle-merge-order", action="store_true", default=None,
                   help="merge room graphs in a seeded random order instead of by room id")
    p.add_argument("--scene-recognition", choices=("oracle", "nearest"))
    p.add_argument("--jobs", type=int, help="worker processes for episode evaluation")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hoznav", description="Zone-graph navigation toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    sub.add_parser("gen", parents=[common], help="generate rooms and split manifest")
    sub.add_parser("build-graph", parents=[common], help="build room, scene and global graphs")
    sub.add_parser("run", parents=[common], help="evaluate policies on the test split")
    sub.add_parser("ablate", parents=[common], help="zone-count, lambda, mode and merge-order sweeps")
    rep = sub.add_parser("report", parents=[common], help="render tables from episode logs or reports")
    rep.add_argument("inputs", nargs="*", type=Path, help="episode logs (.jsonl) or report files (default: all runs)")
    return parser


FLAG_KEYS = ("seed", "k", "epsilon", "alpha", "beta", "lam", "modes", "budget", "trials",
             "shuffle_merge_order", "scene_recognition", "jobs")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_layer = load_config(args.config) if args.config else None
        cfg = resolve_config(file_layer, {key: getattr(args, key) for key in FLAG_KEYS})
        ws = Workspace(args.out)
        if args.command == "gen":
            manifest = cmd_gen(cfg, ws, args.force)
            rooms = sum(len(ids) for parts in manifest["splits"].values() for ids in parts.values())
            print(f"wrote {rooms} rooms to {ws.dataset}")
        elif args.command == "build-graph":
            g = cmd_build_graph(cfg, ws, args.force)
            print(f"wrote {len(g)} scene graphs to {ws.graphs}")
        elif args.command == "run":
            print(render_table(cmd_run(cfg, ws, args.force)["rows"]), end="")
        elif args.command == "ablate":
            print(render_table(cmd_ablate(cfg, ws, args.force)["rows"]), end="")
        else:
            print(render_table(cmd_report(ws, args.inputs, args.force)["rows"]), end="")
    except (OSError, ValueError, KeyError) as exc:
        print(f"hoznav {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
