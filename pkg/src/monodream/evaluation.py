"""Closed-loop rollouts, navigation metrics and ablation tables."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from monodream.episodes import Episode, context_sample, make_episode
from monodream.vocab import SampleKind
from monodream.world import Action, FloorPlan, Pose, Unreachable, generate_floorplan, geodesic_distance, step_action, WorldConfig

SUCCESS_RADIUS = 1.0
MAX_STEPS = 100
EVAL_SEED_BASE = 10000
METRIC_COLUMNS = ("NE", "OSR", "SR", "SPL")
FLAG_COLUMNS = ("IR", "PI", "PD", "FPI", "FPD")


class EmptyLogs(ValueError):
    pass


class SeedOverlap(ValueError):
    pass


@dataclass
class RolloutLog:
    episode_id: str
    poses: list[Pose]
    actions: list[Action]
    distances: list[float]  # geodesic distance to goal at each pose
    stop_called: bool
    geodesic_length: float

    @property
    def steps_used(self) -> int:
        return len(self.actions)

    @property
    def final_distance(self) -> float:
        return self.distances[-1]

    @property
    def path_length(self) -> float:
        """Executed translation only; turns and blocked moves add nothing."""
        return math.fsum(math.hypot(b.x - a.x, b.y - a.y) for a, b in zip(self.poses, self.poses[1:]))


@dataclass(frozen=True)
class MetricsReport:
    ne: float
    sr: float
    osr: float
    spl: float
    episodes: int

    def as_row(self) -> dict[str, float]:
        return {"NE": self.ne, "OSR": self.osr, "SR": self.sr, "SPL": self.spl}


def _distance(plan: FloorPlan, pose: Pose, goal) -> float:
    try:
        return geodesic_distance(plan, pose.xy, goal)
    except Unreachable:
        return math.hypot(pose.x - goal[0], pose.y - goal[1])


Policy = Callable[[Sequence], Sequence[Action]]


def run_episodes(policy: Policy, plans: dict[int, FloorPlan], episodes: Sequence[Episode], max_steps: int = MAX_STEPS,
                 n_history: int = 8) -> list[RolloutLog]:
    """Lockstep rollouts. Each step the policy sees the action-task context and one action is executed."""
    frames = [[ep.start] for ep in episodes]
    actions: list[list[Action]] = [[] for _ in episodes]
    stopped = [False] * len(episodes)
    active = list(range(len(episodes)))
    for t in range(max_steps):
        if not active:
            break
        ctx = [context_sample(SampleKind.ACTION, episodes[i].plan_seed, episodes[i].episode_id, frames[i], t,
                              episodes[i].instruction, n_history, goal=episodes[i].goal) for i in active]
        chosen = policy(ctx)
        still = []
        for i, a in zip(active, chosen):
            a = Action(a)
            actions[i].append(a)
            if a is Action.STOP:
                stopped[i] = True
                continue
            nxt, _ = step_action(plans[episodes[i].plan_seed], frames[i][-1], a)
            frames[i].append(nxt)
            still.append(i)
        active = still
    logs = []
    for i, ep in enumerate(episodes):
        plan = plans[ep.plan_seed]
        dists = [_distance(plan, p, ep.goal) for p in frames[i]]
        logs.append(RolloutLog(ep.episode_id, frames[i], actions[i], dists, stopped[i], ep.geodesic_length))
    return logs


def run_episode(policy: Policy, plan: FloorPlan, episode: Episode, max_steps: int = MAX_STEPS) -> RolloutLog:
    return run_episodes(policy, {plan.seed: plan}, [episode], max_steps)[0]


class ReplayPolicy:
    """Replays each episode's oracle actions by step index."""

    def __init__(self, episodes: Sequence[Episode]):
        self.actions = {ep.episode_id: ep.oracle_actions for ep in episodes}

    def __call__(self, contexts):
        out = []
        for c in contexts:
            seq = self.actions[c.episode_id]
            out.append(seq[c.step] if c.step < len(seq) else Action.STOP)
        return out


def stop_policy(contexts):
    return [Action.STOP] * len(contexts)


def compute_metrics(logs: Sequence[RolloutLog], success_radius: float = SUCCESS_RADIUS) -> MetricsReport:
    if not logs:
        raise EmptyLogs("no rollout logs")
    ne, spl = [], []
    sr = osr = 0
    for lg in logs:
        ne.append(lg.final_distance)
        success = lg.stop_called and lg.final_distance <= success_radius
        sr += success
        osr += min(lg.distances) <= success_radius
        if success:
            spl.append(lg.geodesic_length / max(lg.path_length, lg.geodesic_length))
    # correctly rounded sums make the report independent of log order
    n = len(logs)
    return MetricsReport(math.fsum(ne) / n, sr / n, osr / n, math.fsum(spl) / n, n)


# --- evaluation pools and ablations --------------------------------------------------------------


@dataclass
class EpisodePool:
    plans: dict[int, FloorPlan]
    episodes: list[Episode]

    @property
    def plan_seeds(self) -> list[int]:
        return sorted(self.plans)


def make_pool(plan_seeds: Sequence[int], n_episodes: int, seed: int, config: WorldConfig | None = None) -> EpisodePool:
    """Plans from ``plan_seeds`` with episodes dealt round-robin across them."""
    plans = {s: generate_floorplan(s, config) for s in plan_seeds}
    rng = np.random.default_rng([seed, 0xE915])
    order = list(plan_seeds)
    episodes = [make_episode(plans[order[i % len(order)]], rng, episode_id=f"s{seed}-e{i:04d}")
                for i in range(n_episodes)]
    return EpisodePool(plans, episodes)


def check_disjoint(train: EpisodePool, evaluation: EpisodePool) -> None:
    if any(s >= EVAL_SEED_BASE for s in train.plans) or any(s < EVAL_SEED_BASE for s in evaluation.plans):
        raise SeedOverlap(f"train plan seeds must be < {EVAL_SEED_BASE} <= eval plan seeds")


@dataclass
class AblationRow:
    name: str
    flags: dict[str, bool]
    reports: list[MetricsReport | None] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def ok(self) -> list[MetricsReport]:
        return [r for r in self.reports if r is not None]

    def mean(self, key: str) -> float:
        vals = [r.as_row()[key] for r in self.ok]
        return float(np.mean(vals)) if vals else float("nan")

    def span(self, key: str) -> tuple[float, float]:
        vals = [r.as_row()[key] for r in self.ok]
        return (min(vals), max(vals)) if vals else (float("nan"), float("nan"))


def flags_of(config) -> dict[str, bool]:
    return {"IR": config.use_ir, "PI": config.use_pi, "PD": config.use_pd, "FPI": config.use_fpi, "FPD": config.use_fpd}


def ablation_run(base_config, grid: Sequence[tuple[str, dict]], seeds: Sequence[int], train_pool: EpisodePool,
                 eval_pool: EpisodePool, run_dir=None, cache_factory=None, log=print) -> list[AblationRow]:
    """Train and evaluate every (row, seed) cell. A failing cell is recorded as None and the grid continues."""
    from monodream.model import ModelPolicy
    from monodream.training import assemble_dataset, make_cache, train

    check_disjoint(train_pool, eval_pool)
    all_plans = {**train_pool.plans, **eval_pool.plans}
    caches: dict = {}
    rows = []
    for name, overrides in grid:
        row = AblationRow(name, {})
        t0 = time.time()
        for seed in seeds:
            cfg = base_config.with_overrides(**overrides, seed=seed)
            row.flags = flags_of(cfg)
            key = (cfg.depth_encoding, cfg.pano_format)
            if key not in caches:
                caches[key] = (cache_factory or make_cache)(cfg, list(all_plans.values()))
            cache = caches[key]
            try:
                data = assemble_dataset(train_pool.episodes, cfg)
                model, _ = train(cfg, data, cache=cache, plans=list(train_pool.plans.values()), run_dir=run_dir)
                logs = run_episodes(ModelPolicy(model, cache), eval_pool.plans, eval_pool.episodes,
                                    n_history=cfg.n_history)
                report = compute_metrics(logs)
            except Exception as exc:  # noqa: BLE001  cell failure must not abort the grid
                log(f"[ablation] {name} seed {seed} failed: {exc!r}")
                report = None
            row.reports.append(report)
            if report is not None:
                log(f"[ablation] {name} seed {seed}: SR={report.sr:.3f} OSR={report.osr:.3f} "
                    f"SPL={report.spl:.3f} NE={report.ne:.2f}")
        row.seconds = time.time() - t0
        rows.append(row)
    if run_dir is not None:
        write_ablation_csv(Path(run_dir) / "ablation.csv", rows)
    return rows


def write_ablation_csv(path, rows: Sequence[AblationRow]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", *FLAG_COLUMNS, "seed_index", *METRIC_COLUMNS])
        for row in rows:
            for i, r in enumerate(row.reports):
                vals = [f"{r.as_row()[k]:.6f}" for k in METRIC_COLUMNS] if r else ["failed"] * len(METRIC_COLUMNS)
                w.writerow([row.name, *(int(row.flags.get(f, False)) for f in FLAG_COLUMNS), i, *vals])


def read_ablation_csv(path) -> list[AblationRow]:
    rows: dict[str, AblationRow] = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = rows.setdefault(rec["row"], AblationRow(rec["row"], {f: rec[f] == "1" for f in FLAG_COLUMNS}))
            if rec["SR"] == "failed":
                row.reports.append(None)
            else:
                row.reports.append(MetricsReport(float(rec["NE"]), float(rec["SR"]), float(rec["OSR"]),
                                                 float(rec["SPL"]), 0))
    return list(rows.values())


def format_table(rows: Sequence[AblationRow]) -> str:
    """Aligned table: check-mark flag columns, then mean NE, OSR, SR, SPL (SR with min/max over seeds)."""
    header = ["Method", *FLAG_COLUMNS, "NE↓", "OSR↑", "SR↑", "SPL↑", "SR range"]
    body = []
    for row in rows:
        lo, hi = row.span("SR")
        body.append([row.name, *("✓" if row.flags.get(f) else "" for f in FLAG_COLUMNS),
                     f"{row.mean('NE'):.2f}", f"{100 * row.mean('OSR'):.1f}", f"{100 * row.mean('SR'):.1f}",
                     f"{100 * row.mean('SPL'):.1f}", f"[{100 * lo:.1f}, {100 * hi:.1f}]"])
    widths = [max(len(str(r[i])) for r in [header] + body) for i in range(len(header))]
    fmt = lambda r: "  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip()  # noqa: E731
    lines = [fmt(header), "  ".join("-" * w for w in widths)] + [fmt(r) for r in body]
    return "\n".join(lines) + "\n"
