"""Multi-task co-training: dataset assembly, the optimisation loop, DAgger mixing and run records."""
from __future__ import annotations

import csv
import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from monodream.episodes import (
    DaggerStats,
    Episode,
    build_action_samples,
    build_instruction_samples,
    build_lpd_samples,
    count_kinds,
    dagger_collect,
)
from monodream.model import ModelConfig, ModelPolicy, MonoDreamModel
from monodream.nncore import Adam, NonFiniteGradient, Tape, backward
from monodream.sensors import RenderCache, SensorConfig
from monodream.vocab import SampleKind, prompt_for  # noqa: F401  (re-exported)
from monodream.world import FloorPlan

log = logging.getLogger(__name__)


class EmptyDataset(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 32
    lr: float = 3e-4
    reference_lr: float = 1e-5
    warmup_ratio: float = 0.03
    lam: float = 1.0
    seed: int = 0
    use_ir: bool = True
    use_pi: bool = True
    use_pd: bool = True
    use_fpi: bool = True
    use_fpd: bool = True
    dagger: bool = True
    dagger_fraction: float = 0.35
    max_steps: int = 0
    # model
    d: int = 128
    layers: int = 4
    heads: int = 4
    vision_layers: int = 2
    patch: int = 8
    n_history: int = 8
    k_future: int = 3
    dtype: str = "float64"
    # sensing
    depth_encoding: str = "log"
    pano_format: str = "cubemap"

    def lpd_kinds(self) -> tuple[SampleKind, ...]:
        flags = {SampleKind.PI: self.use_pi, SampleKind.PD: self.use_pd,
                 SampleKind.FPI: self.use_fpi, SampleKind.FPD: self.use_fpd}
        return tuple(k for k, on in flags.items() if on)

    def model_config(self) -> ModelConfig:
        return ModelConfig(d=self.d, layers=self.layers, heads=self.heads, vision_layers=self.vision_layers,
                           patch=self.patch, n_history=self.n_history, k_future=self.k_future, seed=self.seed,
                           dtype=self.dtype)

    def sensor_config(self) -> SensorConfig:
        return SensorConfig()

    def as_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())

    def hash(self) -> str:
        return hashlib.sha256(self.as_text().encode()).hexdigest()[:12]

    def with_overrides(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


# Reduced model and schedule sized so a 3-row, 3-seed ablation fits a one-hour single-core budget.
TOY_BENCHMARK = dict(d=64, layers=2, heads=4, vision_layers=1, patch=16, dtype="float32", batch_size=8, lr=1e-3,
                     epochs=3)
PRESETS = {"default": {}, "toy": TOY_BENCHMARK}


def _coerce(value: str, typ):
    if typ in (bool, "bool"):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if typ in (int, "int"):
        return int(value)
    if typ in (float, "float"):
        return float(value)
    return value


def parse_key_values(text: str, cls=TrainConfig, base=None):
    """Parse ``key=value`` lines (``#`` comments allowed) into a frozen config dataclass."""
    types = {f.name: f.type for f in fields(cls)}
    updates = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise KeyError(f"line {n}: unknown key {key!r}")
        updates[key] = _coerce(value, types[key])
    return replace(base or cls(), **updates)


# --- dataset -------------------------------------------------------------------------


def assemble_dataset(episodes: Sequence[Episode], config: TrainConfig, rng_seed: int | None = None) -> list:
    """Action samples of every episode plus the enabled auxiliary kinds, shuffled under the seed."""
    samples = []
    kinds = config.lpd_kinds()
    for ep in episodes:
        samples += build_action_samples(ep, config.n_history, config.k_future)
        if config.use_ir:
            samples.append(build_instruction_samples(ep, config.n_history))
        if kinds:
            samples += build_lpd_samples(ep, config.n_history, kinds)
    if not samples:
        raise EmptyDataset("no samples produced")
    rng = np.random.default_rng([config.seed if rng_seed is None else rng_seed, 0x5A])
    order = rng.permutation(len(samples))
    return [samples[i] for i in order]


# --- run records ----------------------------------------------------------------------


@dataclass
class RunManifest:
    config_hash: str
    counts: dict[str, int] = field(default_factory=dict)
    losses: list[dict] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)
    dataset_sizes: list[int] = field(default_factory=list)
    dagger: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"config_hash={self.config_hash}"]
        lines += [f"count.{k}={v}" for k, v in sorted(self.counts.items())]
        lines += [f"dataset_size.epoch{i}={n}" for i, n in enumerate(self.dataset_sizes)]
        lines += [f"dagger.{k}={v}" for k, v in sorted(self.dagger.items())]
        lines += [f"checkpoint={Path(c).name}" for c in self.checkpoints]  # relative, so reruns elsewhere match
        if self.losses:
            last = self.losses[-1]
            lines += [f"final.{k}={v!r}" for k, v in last.items()]
        return "\n".join(lines) + "\n"


LOSS_COLUMNS = ("act", "ins", "fea_pi", "fea_pd", "fea_fpi", "fea_fpd", "total")


def write_loss_csv(path, losses: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "kind", "value"])
        for row in losses:
            for k in LOSS_COLUMNS:
                w.writerow([row["step"], k, repr(row[k])])


def make_cache(config: TrainConfig, plans: Sequence[FloorPlan]) -> RenderCache:
    cache = RenderCache(config.sensor_config(), depth_encoding=config.depth_encoding, pano_format=config.pano_format)
    for p in plans:
        cache.register(p)
    return cache


def dagger_budget(config: TrainConfig, n_action: int) -> int:
    """Collected samples so that they form ``dagger_fraction`` of the action pool."""
    f = config.dagger_fraction
    return int(round(f / (1.0 - f) * n_action)) if 0.0 < f < 1.0 else 0


# --- loop -------------------------------------------------------------------------------


def train(config: TrainConfig, dataset: list, model: MonoDreamModel | None = None, cache: RenderCache | None = None,
          plans: Sequence[FloorPlan] = (), run_dir=None, progress=None) -> tuple[MonoDreamModel, RunManifest]:
    """Mixed-kind minibatch Adam over ``dataset``; DAgger samples join after the first epoch."""
    if not dataset:
        raise EmptyDataset("cannot train on an empty dataset")
    model = model or MonoDreamModel(config.model_config())
    cache = cache or make_cache(config, plans)
    dataset = list(dataset)
    manifest = RunManifest(config.hash(), count_kinds(dataset))
    n_action = manifest.counts[SampleKind.ACTION.value]
    use_dagger = config.dagger and config.epochs > 1 and plans
    extra = dagger_budget(config, n_action) if use_dagger else 0
    per_epoch = [len(dataset)] + [len(dataset) + extra] * (config.epochs - 1)
    total_steps = sum(math.ceil(n / config.batch_size) for n in per_epoch)
    if config.max_steps:
        total_steps = min(total_steps, config.max_steps)
    opt = Adam(model.params, config.lr, total_steps, config.warmup_ratio)
    out_dir = Path(run_dir) / config.hash() if run_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.txt").write_text(config.as_text())

    step = 0
    for epoch in range(config.epochs):
        if epoch == 1 and use_dagger:
            stats = DaggerStats()
            policy = ModelPolicy(model, cache)
            collected = dagger_collect(policy, plans, extra, seed=config.seed, n=config.n_history,
                                       k=config.k_future, stats=stats)
            dataset.extend(collected)
            manifest.counts = count_kinds(dataset)
            manifest.dagger = {"samples": len(collected), "episodes": stats.episodes,
                               "skipped": stats.skipped_unreachable}
        manifest.dataset_sizes.append(len(dataset))
        order = np.random.default_rng([config.seed, epoch, 0xE0]).permutation(len(dataset))
        for b0 in range(0, len(order), config.batch_size):
            if config.max_steps and step >= config.max_steps:
                break
            batch = [dataset[i] for i in order[b0:b0 + config.batch_size]]
            with Tape() as tape:
                loss, report = model.compute_losses(batch, cache, config.lam)
            backward(tape, loss)
            lr = opt.current_lr()
            try:
                opt.step()
            except NonFiniteGradient:
                log.error("non-finite gradient at epoch %d batch %d (step %d)", epoch, b0 // config.batch_size, step)
                raise
            finally:
                opt.zero_grad()
            row = {"step": step, "epoch": epoch, "lr": lr, **report.components(), "total": report.total}
            manifest.losses.append(row)
            if progress is not None:
                progress(row)
            step += 1
        if out_dir is not None and manifest.losses:
            ckpt = out_dir / f"epoch{epoch + 1}.ckpt"
            model.save(ckpt, opt.state, card={"epoch": epoch + 1, "train_config": config.hash(),
                                              **{k: v for k, v in manifest.losses[-1].items() if k != "step"}})
            manifest.checkpoints.append(str(ckpt))
    if out_dir is not None:
        write_loss_csv(out_dir / "losses.csv", manifest.losses)
        (out_dir / "manifest.txt").write_text(manifest.to_text())
    return model, manifest
