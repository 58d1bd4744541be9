"""Command-line entry points: world preview, dataset build, train, eval, ablate, render, grad-check, report."""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from monodream import __version__

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class MissingRun(UsageError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _seed_range(text: str) -> list[int]:
    """'0-19' or '1,4,7' -> list of ints."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise UsageError(f"empty seed list {text!r}")
    return out


def _write_manifest(path: Path, command: str, argv, **extra) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"command={command}", f"version={__version__}", f"argv={json.dumps(list(argv))}"]
    lines += [f"{k}={v}" for k, v in extra.items()]
    path.write_text("\n".join(lines) + "\n")


def _env_seed(default: int) -> int:
    raw = os.environ.get("MONODREAM_SEED")
    return int(raw) if raw not in (None, "") else default


def _train_config(args):
    from monodream.training import PRESETS, TrainConfig, parse_key_values

    cfg = TrainConfig(**PRESETS[getattr(args, "preset", None) or "default"])
    if args.config:
        cfg = parse_key_values(Path(args.config).read_text(), base=cfg)
    cfg = replace(cfg, seed=_env_seed(cfg.seed))
    sets = "\n".join(args.set or [])
    if sets:
        cfg = parse_key_values(sets, base=cfg)
    for name in ("epochs", "batch_size", "lr", "seed"):
        val = getattr(args, name, None)
        if val is not None:
            cfg = replace(cfg, **{name: val})
    return cfg


def _world_config(rooms: str | None):
    from monodream.world import WorldConfig

    if not rooms:
        return WorldConfig()
    try:
        r, c = (int(v) for v in rooms.lower().split("x"))
    except ValueError:
        raise UsageError(f"--rooms expects RxC, got {rooms!r}") from None
    return WorldConfig(rows=r, cols=c)


# --- commands ---------------------------------------------------------------------------


def cmd_gen_world(args, argv) -> int:
    from monodream.world import generate_floorplan

    cfg = _world_config(args.rooms)
    plan = generate_floorplan(_env_seed(args.seed) if args.seed is None else args.seed, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(plan.serialize())
    _write_manifest(out.with_name(out.name + ".manifest"), "gen-world", argv, seed=plan.seed,
                    config_hash=plan.config_hash)
    print(f"wrote {out} ({len(plan.rooms)} rooms, {len(plan.walls)} walls)")
    return EXIT_OK


def _pool(seeds: str, episodes: int, seed: int):
    from monodream.evaluation import make_pool

    return make_pool(_seed_range(seeds), episodes, seed)


def cmd_build_data(args, argv) -> int:
    from monodream.episodes import count_kinds, write_manifest
    from monodream.training import assemble_dataset

    cfg = _train_config(args)
    pool = _pool(args.plans, args.episodes, cfg.seed)
    data = assemble_dataset(pool.episodes, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out / "samples.jsonl", data)
    counts = count_kinds(data)
    _write_manifest(out / "manifest.txt", "build-data", argv, config_hash=cfg.hash(), plans=args.plans,
                    episodes=args.episodes, **{f"count.{k}": v for k, v in counts.items()})
    print(json.dumps(counts, sort_keys=True))
    return EXIT_OK


def cmd_train(args, argv) -> int:
    from monodream.training import assemble_dataset, make_cache, train

    cfg = _train_config(args)
    pool = _pool(args.plans, args.episodes, cfg.seed)
    data = assemble_dataset(pool.episodes, cfg)
    cache = make_cache(cfg, list(pool.plans.values()))
    out = Path(args.out)

    def progress(row):
        if row["step"] % args.log_every == 0:
            print(f"step {row['step']:5d} epoch {row['epoch']} total {row['total']:.4f} act {row['act']:.4f}",
                  flush=True)

    _, manifest = train(cfg, data, cache=cache, plans=list(pool.plans.values()), run_dir=out, progress=progress)
    print(f"checkpoints: {', '.join(manifest.checkpoints)}")
    return EXIT_OK


def cmd_eval(args, argv) -> int:
    from monodream.evaluation import EVAL_SEED_BASE, compute_metrics, run_episodes
    from monodream.model import ModelPolicy, MonoDreamModel
    from monodream.training import TrainConfig, make_cache

    seeds = _seed_range(args.plans)
    if min(seeds) < EVAL_SEED_BASE:
        raise UsageError(f"evaluation plan seeds must be >= {EVAL_SEED_BASE}")
    model, _ = MonoDreamModel.load(args.checkpoint)
    pool = _pool(args.plans, args.episodes, _env_seed(args.seed))
    cache = make_cache(TrainConfig(depth_encoding=args.depth_encoding), list(pool.plans.values()))
    logs = run_episodes(ModelPolicy(model, cache), pool.plans, pool.episodes, args.max_steps, model.config.n_history)
    report = compute_metrics(logs, args.success_radius)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text("NE,OSR,SR,SPL,episodes\n"
                                     f"{report.ne:.6f},{report.osr:.6f},{report.sr:.6f},{report.spl:.6f},"
                                     f"{report.episodes}\n")
    _write_manifest(out / "manifest.txt", "eval", argv, checkpoint=args.checkpoint, **report.as_row())
    print(f"NE {report.ne:.3f}  OSR {report.osr:.3f}  SR {report.sr:.3f}  SPL {report.spl:.3f}  (n={report.episodes})")
    return EXIT_OK


ABLATION_GRIDS = {
    "auxiliary": [
        ("baseline", dict(use_ir=False, use_pi=False, use_pd=False, use_fpi=False, use_fpd=False)),
        ("+IR", dict(use_ir=True, use_pi=False, use_pd=False, use_fpi=False, use_fpd=False)),
        ("+IR+LPD", dict(use_ir=True, use_pi=True, use_pd=True, use_fpi=True, use_fpd=True)),
    ],
    "lpd": [
        ("PI", dict(use_ir=False, use_pi=True, use_pd=False, use_fpi=False, use_fpd=False)),
        ("PD", dict(use_ir=False, use_pi=False, use_pd=True, use_fpi=False, use_fpd=False)),
        ("FPI", dict(use_ir=False, use_pi=False, use_pd=False, use_fpi=True, use_fpd=False)),
        ("FPD", dict(use_ir=False, use_pi=False, use_pd=False, use_fpi=False, use_fpd=True)),
        ("all", dict(use_ir=False, use_pi=True, use_pd=True, use_fpi=True, use_fpd=True)),
    ],
    "preprocessing": [
        ("log depth", dict(depth_encoding="log")),
        ("linear depth", dict(depth_encoding="linear")),
        ("inverse depth", dict(depth_encoding="inverse")),
        ("equirect", dict(pano_format="equirect")),
    ],
}


def cmd_ablate(args, argv) -> int:
    from monodream.evaluation import ablation_run, format_table

    cfg = _train_config(args)
    grid = []
    for name in args.grid.split(","):
        if name not in ABLATION_GRIDS:
            raise UsageError(f"unknown grid {name!r}; choose from {sorted(ABLATION_GRIDS)}")
        grid += ABLATION_GRIDS[name]
    seeds = _seed_range(args.seeds)
    train_pool = _pool(args.plans, args.episodes, 0)
    eval_pool = _pool(args.eval_plans, args.eval_episodes, 1)
    out = Path(args.out)
    rows = ablation_run(cfg, grid, seeds, train_pool, eval_pool, run_dir=out)
    table = format_table(rows)
    (out / "table.txt").write_text(table)
    _write_manifest(out / "manifest.txt", "ablate", argv, config_hash=cfg.hash(), grid=args.grid, seeds=args.seeds)
    print(table, end="")
    return EXIT_OK


def cmd_render(args, argv) -> int:
    from monodream.sensors import SensorConfig, render_panorama, render_view, write_panorama, write_ppm
    from monodream.world import FloorPlan, Pose

    plan = FloorPlan.parse(Path(args.plan).read_text())
    try:
        x, y, h = (float(v) for v in args.pose.split(","))
    except ValueError:
        raise UsageError(f"--pose expects x,y,heading_deg, got {args.pose!r}") from None
    pose = Pose.from_degrees(x, y, h)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = SensorConfig()
    written = []
    if args.pano:
        kinds = ["depth"] if args.depth else ["rgb"]
        for kind in kinds:
            pano = render_panorama(plan, pose, kind, cfg, args.depth_encoding)
            written.append(str(write_panorama(out, "pano", pano)))
    else:
        rgb, depth = render_view(plan, pose, config=cfg)
        write_ppm(out / "view_rgb.ppm", rgb)
        written.append(str(out / "view_rgb.ppm"))
        if args.depth:
            from monodream.sensors import depth_to_pseudo_rgb

            write_ppm(out / "view_depth.ppm", depth_to_pseudo_rgb(depth, cfg.d_max, args.depth_encoding))
            written.append(str(out / "view_depth.ppm"))
    _write_manifest(out / "render_manifest.txt", "render", argv, plan_seed=plan.seed, pose=args.pose,
                    outputs=";".join(written))
    print("\n".join(written))
    return EXIT_OK


def cmd_grad_check(args, argv) -> int:
    from monodream.nncore.gradcheck import op_suite

    t0 = time.time()
    errors = op_suite(args.shapes, args.seed)
    worst = max(errors.values())
    for name, err in errors.items():
        print(f"{name:20s} max_rel_err={err:.3e} {'ok' if err < args.tol else 'FAIL'}")
    print(f"{len(errors)} ops, {args.shapes} shapes each, {time.time() - t0:.2f}s, worst {worst:.3e}")
    if args.out:
        _write_manifest(Path(args.out) / "manifest.txt", "grad-check", argv, worst=worst)
    return EXIT_OK if worst < args.tol else EXIT_RUNTIME


def report_tables(run_dir) -> str:
    from monodream.evaluation import format_table, read_ablation_csv

    path = Path(run_dir) / "ablation.csv"
    if not path.exists():
        raise MissingRun(f"no ablation.csv in {run_dir}")
    rows = read_ablation_csv(path)
    if not rows:
        raise UsageError(f"{path} holds an empty grid")
    return format_table(rows)


def cmd_report(args, argv) -> int:
    print(report_tables(args.run_dir), end="")
    return EXIT_OK


# --- parser ----------------------------------------------------------------------------------


def _add_train_flags(p) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    p.add_argument("--preset", choices=("default", "toy"), help="base configuration before --config/--set")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--plans", default="0-19", help="training plan seeds, e.g. 0-19")
    p.add_argument("--episodes", type=int, default=200)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="monodream", description=__doc__)
    parser.add_argument("--threads", type=int, default=1, help="worker cap (commands are single-process)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-world", help="generate a floorplan")
    p.add_argument("--seed", type=int)
    p.add_argument("--rooms", default="2x2")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_world)

    p = sub.add_parser("build-data", help="assemble a training-sample manifest")
    _add_train_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_build_data)

    p = sub.add_parser("train", help="train a model")
    _add_train_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--log-every", type=int, default=50)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on unseen plans")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--plans", default="10000-10009")
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--max-steps", type=int, default=100)
    p.add_argument("--success-radius", type=float, default=1.0)
    p.add_argument("--depth-encoding", default="log")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="train and evaluate an ablation grid")
    _add_train_flags(p)
    p.add_argument("--grid", default="auxiliary", help=f"comma list of {sorted(ABLATION_GRIDS)}")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--eval-plans", default="10000-10009")
    p.add_argument("--eval-episodes", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("render", help="render a view or panorama to PPM")
    p.add_argument("--plan", required=True)
    p.add_argument("--pose", required=True, help="x,y,heading_deg")
    p.add_argument("--pano", action="store_true")
    p.add_argument("--depth", action="store_true")
    p.add_argument("--depth-encoding", default="log")
    p.add_argument("--out", default=".")
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("grad-check", help="finite-difference check of every differentiable op")
    p.add_argument("--shapes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_grad_check)

    p = sub.add_parser("report", help="render ablation CSVs as tables")
    p.add_argument("--run-dir", required=True)
    p.set_defaults(fn=cmd_report)
    return parser


def dispatch(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args, argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KeyError, ValueError) as exc:
        if isinstance(exc, KeyError) and "unknown key" in str(exc):
            print(f"usage error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
