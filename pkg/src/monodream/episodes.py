"""Episode synthesis, templated instructions and training-sample construction."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from monodream.sensors import RenderCache
from monodream.vocab import (
    LPD_KINDS,
    SampleKind,
    action_token,
    detokenize,
    prompt_for,
    template_hash,
    tokenize,
    VOCAB_SIZE,
)
from monodream.world import (
    COLOR_NAMES,
    STOP_RADIUS,
    Action,
    CompileStall,
    FloorPlan,
    Pose,
    Unreachable,
    geodesic_distance,
    path_to_actions,
    replay,
    shortest_path,
    step_action,
)

N_HISTORY = 8
K_FUTURE = 3
MIN_GEODESIC = 3.0
MAX_GEODESIC = 15.0
MAX_RETRIES = 100
TURN_CLAUSE_DEG = 30.0


class RetryExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class Instruction:
    text: str
    tokens: tuple[int, ...]

    @classmethod
    def from_text(cls, text: str) -> "Instruction":
        return cls(text, tuple(tokenize(text)))


@dataclass(frozen=True)
class Episode:
    episode_id: str
    plan_seed: int
    start: Pose
    goal: tuple[float, float]
    oracle_waypoints: tuple[tuple[float, float], ...]
    oracle_actions: tuple[Action, ...]
    poses: tuple[Pose, ...]  # pose before each action, then the final pose
    geodesic_length: float
    instruction: Instruction | None = None

    @property
    def n_steps(self) -> int:
        return len(self.oracle_actions)


@dataclass(frozen=True)
class StepSample:
    kind: SampleKind
    plan_seed: int
    episode_id: str
    step: int
    prompt_tokens: tuple[int, ...]
    history: tuple[Pose, ...]
    current: Pose | None
    target_actions: tuple[int, ...] = ()
    target_tokens: tuple[int, ...] = ()
    target_pose: Pose | None = None
    goal: tuple[float, float] | None = None

    @property
    def frames(self) -> tuple[Pose, ...]:
        return self.history + ((self.current,) if self.current is not None else ())

    @property
    def target_view(self) -> str | None:
        if self.kind in (SampleKind.PI, SampleKind.FPI):
            return "pano_rgb"
        if self.kind in (SampleKind.PD, SampleKind.FPD):
            return "pano_depth"
        return None

    def history_images(self, cache: RenderCache) -> np.ndarray:
        return np.concatenate([cache.get(self.plan_seed, p, "obs") for p in self.history])

    def current_image(self, cache: RenderCache) -> np.ndarray:
        return cache.get(self.plan_seed, self.current, "obs")[0]

    def target_panorama(self, cache: RenderCache) -> np.ndarray:
        if self.target_view is None:
            raise ValueError(f"{self.kind.value} sample has no panorama target")
        return cache.get(self.plan_seed, self.target_pose, self.target_view)

    def manifest_record(self) -> dict:
        return {
            "kind": self.kind.value,
            "plan_seed": self.plan_seed,
            "episode": self.episode_id,
            "step": self.step,
            "prompt": template_hash(self.kind),
        }


# --- episodes -----------------------------------------------------------------


def _sample_point(plan: FloorPlan, room, rng, margin: float = 0.5):
    for _ in range(50):
        x = float(rng.uniform(room.x0 + margin, room.x1 - margin))
        y = float(rng.uniform(room.y0 + margin, room.y1 - margin))
        if plan.is_free(x, y) and not plan.planning_grid[plan.cell_of(x, y)]:
            return x, y
    return None


def make_episode(plan: FloorPlan, rng: np.random.Generator, episode_id: str | None = None,
                 min_length: float = MIN_GEODESIC, max_length: float = MAX_GEODESIC) -> Episode:
    """Sample a start/goal in different rooms and compile the oracle trajectory."""
    if len(plan.rooms) < 2:
        raise RetryExhausted(f"plan {plan.seed} has fewer than two rooms")
    for _ in range(MAX_RETRIES):
        ra, rb = rng.choice(len(plan.rooms), size=2, replace=False).tolist()
        a = _sample_point(plan, plan.rooms[ra], rng)
        b = _sample_point(plan, plan.rooms[rb], rng)
        heading_q = 60 * int(rng.integers(0, 24))
        if a is None or b is None:
            continue
        try:
            length = geodesic_distance(plan, a, b)
        except Unreachable:
            continue
        if not min_length <= length <= max_length:
            continue
        start = Pose(a[0], a[1], heading_q)
        try:
            waypoints = shortest_path(plan, start, b)
            actions = path_to_actions(plan, start, waypoints)
        except (Unreachable, CompileStall):
            continue
        poses = [start] + [p for p, _ in replay(plan, start, actions)]
        ep = Episode(
            episode_id=episode_id or f"p{plan.seed}-{int(rng.integers(0, 2**31))}",
            plan_seed=plan.seed,
            start=start,
            goal=b,
            oracle_waypoints=tuple(waypoints),
            oracle_actions=tuple(actions),
            poses=tuple(poses),
            geodesic_length=length,
        )
        return replace(ep, instruction=generate_instruction(plan, ep))
    raise RetryExhausted(f"no valid episode in plan {plan.seed} after {MAX_RETRIES} samples")


def _wrap(deg: float) -> float:
    deg = deg % 360.0
    return deg - 360.0 if deg > 180.0 else deg


def _turn_clause(delta: float) -> str | None:
    if abs(delta) > 135.0:
        return "turn around"
    if abs(delta) > TURN_CLAUSE_DEG:
        return "turn left" if delta > 0 else "turn right"
    return None


def generate_instruction(plan: FloorPlan, episode) -> Instruction:
    """Compile the waypoint polyline into clauses: turns, forward runs, and the stop room."""
    pts = [tuple(p) for p in episode.oracle_waypoints]
    if not pts:
        raise ValueError("episode has no waypoints")
    start = episode.start
    segs = [(a, b) for a, b in zip(pts, pts[1:]) if math.hypot(b[0] - a[0], b[1] - a[1]) > 1e-9]
    clauses: list[str] = []
    room = plan.room_at(start.x, start.y)
    heading = start.heading
    entered = None
    run_open = False

    def close_run():
        nonlocal entered, run_open
        if run_open:
            clauses.append("go forward" + (f" through the {COLOR_NAMES[entered]} room" if entered is not None else ""))
        entered = None
        run_open = False

    for a, b in segs:
        bearing = math.degrees(math.atan2(b[1] - a[1], b[0] - a[0]))
        turn = _turn_clause(_wrap(bearing - heading))
        if turn is not None:
            close_run()
            clauses.append(turn)
        heading = bearing
        run_open = True
        n = max(2, int(math.hypot(b[0] - a[0], b[1] - a[1]) / 0.1))
        for k in range(1, n + 1):
            x = a[0] + (b[0] - a[0]) * k / n
            y = a[1] + (b[1] - a[1]) * k / n
            r = plan.room_at(x, y)
            if r >= 0 and r != room:
                room = r
                entered = plan.rooms[r].color
    close_run()
    goal_room = plan.room_at(*pts[-1])
    if goal_room < 0:
        goal_room = room
    clauses.append(f"stop in the {COLOR_NAMES[plan.rooms[goal_room].color]} room")
    text = ". ".join(clauses) + "."
    return Instruction.from_text(text)


# --- sample builders ---------------------------------------------------------


def history_indices(t: int, n: int) -> list[int]:
    """Indices into o_0..o_{t-1}: rounded uniform spacing, deduplicated, front-padded."""
    if t <= 0:
        return [0] * n
    if n == 1:
        return [t - 1]
    idx = sorted({int(math.floor(i * (t - 1) / (n - 1) + 0.5)) for i in range(n)})
    return [idx[0]] * (n - len(idx)) + idx


def rollout_indices(length: int, n: int) -> list[int]:
    """N uniformly strided indices spanning a rollout of ``length`` frames."""
    return [(i * length) // n for i in range(n)]


def pad_actions(actions: Sequence[Action], k: int) -> tuple[int, ...]:
    acts = list(actions[:k]) + [Action.STOP] * max(0, k - len(actions))
    return tuple(action_token(a) for a in acts)


def context_sample(kind: SampleKind, plan_seed: int, episode_id: str, frames: Sequence[Pose], t: int,
                   instruction: Instruction | None, n: int = N_HISTORY, goal=None, **targets) -> StepSample:
    """Sample whose visual context is frames[0..t-1] as history and frames[t] as current."""
    history = tuple(frames[i] for i in history_indices(t, n))
    text = instruction.text if instruction is not None else None
    needs_text = kind in (SampleKind.ACTION, SampleKind.FPI, SampleKind.FPD)
    prompt = prompt_for(kind, n, text if needs_text else None)
    return StepSample(kind, plan_seed, episode_id, t, tuple(prompt), history, frames[t], goal=goal, **targets)


def build_action_samples(episode: Episode, n: int = N_HISTORY, k: int = K_FUTURE) -> list[StepSample]:
    if n < 1 or k < 1:
        raise ValueError("N and K must be positive")
    frames = episode.poses[: episode.n_steps]
    return [
        context_sample(SampleKind.ACTION, episode.plan_seed, episode.episode_id, frames, t, episode.instruction, n,
                       goal=episode.goal, target_actions=pad_actions(episode.oracle_actions[t:], k))
        for t in range(episode.n_steps)
    ]


def build_instruction_samples(episode: Episode, n: int = N_HISTORY) -> StepSample:
    frames = episode.poses[: episode.n_steps]
    history = tuple(frames[i] for i in rollout_indices(len(frames), n))
    return StepSample(
        SampleKind.IR, episode.plan_seed, episode.episode_id, 0, tuple(prompt_for(SampleKind.IR, n)),
        history, None, target_tokens=episode.instruction.tokens, goal=episode.goal,
    )


def build_lpd_samples(episode: Episode, n: int = N_HISTORY, kinds: Sequence[SampleKind] = LPD_KINDS) -> list[StepSample]:
    frames = episode.poses[: episode.n_steps]
    out = []
    for t in range(episode.n_steps):
        for kind in kinds:
            future = kind in (SampleKind.FPI, SampleKind.FPD)
            target = episode.poses[t + 1] if future else episode.poses[t]
            out.append(context_sample(kind, episode.plan_seed, episode.episode_id, frames, t, episode.instruction, n,
                                      goal=episode.goal, target_pose=target))
    return out


# --- DAgger ----------------------------------------------------------------------

Policy = Callable[[Sequence[StepSample]], Sequence[Action]]


def oracle_actions_from(plan: FloorPlan, pose: Pose, goal) -> list[Action]:
    return path_to_actions(plan, pose, shortest_path(plan, pose, goal))


class OraclePolicy:
    """Expert that recompiles the shortest path from each context's current pose."""

    def __init__(self, plans: Sequence[FloorPlan]):
        self.plans = {p.seed: p for p in plans}

    def __call__(self, contexts):
        out = []
        for ctx in contexts:
            try:
                out.append(oracle_actions_from(self.plans[ctx.plan_seed], ctx.current, ctx.goal)[0])
            except (Unreachable, CompileStall):
                out.append(Action.STOP)
        return out


class RandomPolicy:
    def __init__(self, seed: int = 0, stop_prob: float = 0.02):
        self.rng = np.random.default_rng(seed)
        self.stop_prob = stop_prob

    def __call__(self, contexts):
        out = []
        for _ in contexts:
            if self.rng.random() < self.stop_prob:
                out.append(Action.STOP)
            else:
                out.append(Action(int(self.rng.integers(1, len(Action)))))
        return out


@dataclass
class DaggerStats:
    episodes: int = 0
    visited: int = 0
    skipped_unreachable: int = 0


def dagger_collect(policy: Policy, plans: Sequence[FloorPlan], budget: int, seed: int = 0,
                   n: int = N_HISTORY, k: int = K_FUTURE, max_steps: int = 100, batch_episodes: int = 16,
                   stats: DaggerStats | None = None) -> list[StepSample]:
    """Roll out ``policy`` (executing its choices) and label every visited state with the oracle."""
    stats = stats if stats is not None else DaggerStats()
    rng = np.random.default_rng([seed, 0xDA66])
    samples: list[StepSample] = []
    plan_idx = 0
    guard = 0
    while len(samples) < budget:
        guard += 1
        if guard > 10 * budget + 100:
            break
        batch = []
        for _ in range(batch_episodes):
            plan = plans[plan_idx % len(plans)]
            plan_idx += 1
            ep = make_episode(plan, rng, episode_id=f"dagger{seed}-{stats.episodes}")
            stats.episodes += 1
            batch.append((plan, ep))
        frames = [[ep.start] for _, ep in batch]
        active = list(range(len(batch)))
        for t in range(max_steps):
            if not active or len(samples) >= budget:
                break
            contexts = []
            for i in active:
                plan, ep = batch[i]
                pose = frames[i][-1]
                stats.visited += 1
                ctx = context_sample(SampleKind.ACTION, ep.plan_seed, ep.episode_id, frames[i], t, ep.instruction, n,
                                     goal=ep.goal)
                contexts.append(ctx)
                try:
                    labels = oracle_actions_from(plan, pose, ep.goal)
                except (Unreachable, CompileStall):
                    stats.skipped_unreachable += 1
                    continue
                if len(samples) < budget:
                    samples.append(replace(ctx, target_actions=pad_actions(labels, k)))
            chosen = policy(contexts)
            still = []
            for i, a in zip(active, chosen):
                if Action(a) is Action.STOP:
                    continue
                plan, _ = batch[i]
                nxt, _ = step_action(plan, frames[i][-1], Action(a))
                frames[i].append(nxt)
                still.append(i)
            active = still
    return samples


# --- manifests ---------------------------------------------------------------------


def write_manifest(path, samples: Sequence[StepSample]) -> None:
    with open(path, "w") as fh:
        for s in samples:
            fh.write(json.dumps(s.manifest_record(), sort_keys=True) + "\n")


def count_kinds(samples: Sequence[StepSample]) -> dict[str, int]:
    counts = {k.value: 0 for k in SampleKind}
    for s in samples:
        counts[s.kind.value] += 1
    return counts


def check_tokens(samples: Sequence[StepSample]) -> bool:
    return all(0 <= t < VOCAB_SIZE for s in samples for t in s.prompt_tokens + s.target_actions + s.target_tokens)


__all__ = [
    "Episode", "Instruction", "StepSample", "RetryExhausted", "make_episode", "generate_instruction",
    "build_action_samples", "build_instruction_samples", "build_lpd_samples", "dagger_collect",
    "history_indices", "rollout_indices", "OraclePolicy", "RandomPolicy", "detokenize", "STOP_RADIUS",
]
