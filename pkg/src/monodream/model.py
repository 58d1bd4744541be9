"""Toy vision-language navigation network with latent panoramic dreaming heads.

One vision encoder embeds both the monocular observations and the panorama faces
that serve as regression targets. A causal transformer backbone reads the prompt
with image vectors substituted for placeholder tokens. Its hidden states feed a
language-model head (actions and instructions) and a linear dream head at four
dream-slot positions.
"""
from __future__ import annotations

import hashlib
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from monodream import vocab
from monodream.episodes import StepSample
from monodream.nncore import Tape, Tensor, no_grad, ops
from monodream.nncore.checkpoint import load_checkpoint, save_checkpoint
from monodream.sensors import RenderCache
from monodream.vocab import DREAM_IDS, EOS_ID, IMAGE_ID, SampleKind, token_action
from monodream.world import Action

MAX_SEQ = 512
MAX_INSTRUCTION = 64


class PlaceholderCountMismatch(ValueError):
    pass


class SequenceTooLong(ValueError):
    pass


class MissingDreamSlots(ValueError):
    pass


class KindMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    d: int = 128
    layers: int = 4
    heads: int = 4
    vision_layers: int = 2
    patch: int = 8
    image_size: int = 64
    vocab_size: int = vocab.VOCAB_SIZE
    n_history: int = 8
    k_future: int = 3
    mlp_ratio: int = 4
    max_seq: int = MAX_SEQ
    seed: int = 0
    dtype: str = "float64"

    def validate(self) -> None:
        if self.d % self.heads:
            raise ValueError(f"d={self.d} not divisible by heads={self.heads}")
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"unsupported dtype {self.dtype}")
        if self.image_size % self.patch:
            raise ValueError(f"image size {self.image_size} not divisible by patch {self.patch}")

    @property
    def n_patches(self) -> int:
        return (self.image_size // self.patch) ** 2

    def hash(self) -> str:
        text = ";".join(f"{k}={v}" for k, v in sorted(asdict(self).items()))
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal samples redrawn until they fall within two standard deviations."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out


@dataclass
class LossReport:
    l_act: float = 0.0
    l_ins: float = 0.0
    l_fea: dict[str, float] = field(default_factory=lambda: {k.value: 0.0 for k in vocab.LPD_KINDS})
    total: float = 0.0
    lam: float = 1.0
    counts: dict[str, int] = field(default_factory=dict)

    def components(self) -> dict[str, float]:
        out = {"act": self.l_act, "ins": self.l_ins}
        out.update({f"fea_{k}": v for k, v in self.l_fea.items()})
        return out

    def recomputed_total(self) -> float:
        return self.l_act + self.lam * sum(self.l_fea.values()) + self.l_ins


def patchify(images: np.ndarray, patch: int) -> np.ndarray:
    """(M, H, W, 3) -> (M, patches, patch*patch*3), patches in row-major order."""
    m, h, w, c = images.shape
    g = images.reshape(m, h // patch, patch, w // patch, patch, c).transpose(0, 1, 3, 2, 4, 5)
    return g.reshape(m, (h // patch) * (w // patch), patch * patch * c)


class MonoDreamModel:
    def __init__(self, config: ModelConfig | None = None):
        self.config = config or ModelConfig()
        self.config.validate()
        self.dtype = np.dtype(self.config.dtype)
        self.params: dict[str, Tensor] = {}
        self.non_action_tokens = Counter()
        self._init_params()

    # --- parameters -----------------------------------------------------------

    def _add(self, name: str, data: np.ndarray) -> None:
        self.params[name] = Tensor(np.asarray(data, dtype=self.dtype), requires_grad=True, name=name)

    def _init_block(self, rng, prefix: str) -> None:
        d, r = self.config.d, self.config.mlp_ratio
        for ln in ("ln1", "ln2"):
            self._add(f"{prefix}.{ln}.g", np.ones(d))
            self._add(f"{prefix}.{ln}.b", np.zeros(d))
        self._add(f"{prefix}.qkv.w", trunc_normal(rng, (d, 3 * d)))
        self._add(f"{prefix}.qkv.b", np.zeros(3 * d))
        self._add(f"{prefix}.proj.w", trunc_normal(rng, (d, d)))
        self._add(f"{prefix}.proj.b", np.zeros(d))
        self._add(f"{prefix}.fc1.w", trunc_normal(rng, (d, r * d)))
        self._add(f"{prefix}.fc1.b", np.zeros(r * d))
        self._add(f"{prefix}.fc2.w", trunc_normal(rng, (r * d, d)))
        self._add(f"{prefix}.fc2.b", np.zeros(d))

    def _init_params(self) -> None:
        cfg = self.config
        rng = np.random.default_rng([cfg.seed, 0x30DE1])
        pdim = cfg.patch * cfg.patch * 3
        self._add("vis.patch.w", trunc_normal(rng, (pdim, cfg.d)))
        self._add("vis.patch.b", np.zeros(cfg.d))
        self._add("vis.pos", trunc_normal(rng, (cfg.n_patches, cfg.d)))
        for i in range(cfg.vision_layers):
            self._init_block(rng, f"vis.blk{i}")
        self._add("vis.ln.g", np.ones(cfg.d))
        self._add("vis.ln.b", np.zeros(cfg.d))
        self._add("txt.tok", trunc_normal(rng, (cfg.vocab_size, cfg.d)))
        self._add("txt.pos", trunc_normal(rng, (cfg.max_seq, cfg.d)))
        for i in range(cfg.layers):
            self._init_block(rng, f"bb.blk{i}")
        self._add("bb.ln.g", np.ones(cfg.d))
        self._add("bb.ln.b", np.zeros(cfg.d))
        self._add("head.w", trunc_normal(rng, (cfg.d, cfg.vocab_size)))
        self._add("dream.w", trunc_normal(rng, (cfg.d, cfg.d)))
        self._add("dream.b", np.zeros(cfg.d))

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        if missing:
            raise KeyError(f"checkpoint lacks parameters: {sorted(missing)[:5]}")
        for k, p in self.params.items():
            if state[k].shape != p.shape:
                raise ValueError(f"{k}: checkpoint shape {state[k].shape} != {p.shape}")
            p.data = np.array(state[k], dtype=p.data.dtype)

    def save(self, path, optimizer_state=None, card: dict | None = None) -> None:
        meta = ";".join(f"{k}={v}" for k, v in sorted(asdict(self.config).items()))
        save_checkpoint(path, self.state_dict(), optimizer_state, meta)
        if card is not None:
            write_model_card(Path(path).with_suffix(".card.txt"), self, card)

    @classmethod
    def load(cls, path) -> tuple["MonoDreamModel", object]:
        params, state, meta = load_checkpoint(path)
        fields = {}
        for item in meta.split(";"):
            if item:
                k, v = item.split("=", 1)
                fields[k] = v if k == "dtype" else int(v)
        model = cls(ModelConfig(**fields))
        model.load_state_dict(params)
        return model, state

    # --- layers ------------------------------------------------------------------

    def _linear(self, x: Tensor, name: str, bias: bool = True) -> Tensor:
        lead = x.shape[:-1]
        y = ops.reshape(x, (-1, x.shape[-1])) @ self.params[f"{name}.w"]
        if bias:
            y = y + self.params[f"{name}.b"]
        return ops.reshape(y, lead + (y.shape[-1],))

    def _ln(self, x: Tensor, name: str) -> Tensor:
        return ops.layer_norm(x, self.params[f"{name}.g"], self.params[f"{name}.b"])

    def _block(self, x: Tensor, prefix: str, mask: np.ndarray | None) -> Tensor:
        b, t, d = x.shape
        hds = self.config.heads
        h = self._ln(x, f"{prefix}.ln1")
        qkv = ops.reshape(self._linear(h, f"{prefix}.qkv"), (b, t, 3, hds, d // hds))
        qkv = ops.transpose(qkv, (2, 0, 3, 1, 4))
        att = ops.attention(qkv[0], qkv[1], qkv[2], mask)
        att = ops.reshape(ops.transpose(att, (0, 2, 1, 3)), (b, t, d))
        x = x + self._linear(att, f"{prefix}.proj")
        h = self._ln(x, f"{prefix}.ln2")
        return x + self._linear(ops.gelu(self._linear(h, f"{prefix}.fc1")), f"{prefix}.fc2")

    # --- encoders -------------------------------------------------------------------

    def encode_images(self, images: np.ndarray) -> Tensor:
        """(M, H, W, 3) images in [0, 1] -> (M, d) pooled features."""
        cfg = self.config
        images = np.asarray(images, dtype=self.dtype)
        if images.ndim != 4 or images.shape[1:] != (cfg.image_size, cfg.image_size, 3):
            raise ops.ShapeMismatch("encode_image", images.shape, (cfg.image_size, cfg.image_size, 3))
        x = self._linear(Tensor(patchify(images, cfg.patch)), "vis.patch") + self.params["vis.pos"]
        for i in range(cfg.vision_layers):
            x = self._block(x, f"vis.blk{i}", None)
        return ops.mean_pool(self._ln(x, "vis.ln"), axis=1)

    def encode_image(self, img: np.ndarray) -> Tensor:
        return ops.reshape(self.encode_images(np.asarray(img)[None]), (self.config.d,))

    def encode_text(self, tokens: Sequence[int]) -> Tensor:
        tokens = list(tokens)
        if not tokens:
            raise ValueError("text encoder needs at least one token")
        if len(tokens) > self.config.max_seq:
            raise SequenceTooLong(f"{len(tokens)} > {self.config.max_seq}")
        emb = ops.embedding_lookup(self.params["txt.tok"], tokens)
        return emb + ops.slice_rows(self.params["txt.pos"], 0, len(tokens))

    # --- sequence assembly -----------------------------------------------------------

    def expected_images(self, kind: SampleKind) -> int:
        n = self.config.n_history
        return n if SampleKind(kind) is SampleKind.IR else n + 1

    def sequence_tokens(self, kind: SampleKind, prompt: Sequence[int], tail: Sequence[int] = ()) -> list[int]:
        """Token ids of the full input: prompt, then dream slots (LPD) or teacher-forced tail."""
        kind = SampleKind(kind)
        n_img = sum(1 for t in prompt if t == IMAGE_ID)
        if n_img != self.expected_images(kind):
            raise PlaceholderCountMismatch(f"{kind.value}: {n_img} placeholders, expected {self.expected_images(kind)}")
        seq = list(prompt) + (list(DREAM_IDS) if kind.is_lpd else list(tail))
        if len(seq) > self.config.max_seq:
            raise SequenceTooLong(f"sequence of {len(seq)} exceeds {self.config.max_seq}")
        return seq

    def assemble_batch(self, token_seqs: Sequence[Sequence[int]], image_slots: Sequence[Sequence[int]],
                       image_vecs: Tensor) -> tuple[Tensor, np.ndarray]:
        """Embed right-padded token sequences, substituting image vectors at placeholders.

        ``image_slots[b]`` lists rows of ``image_vecs`` for the placeholders of sequence b in order.
        Returns the (B, T, d) input and the per-sequence lengths.
        """
        lengths = np.array([len(s) for s in token_seqs])
        t_max = int(lengths.max())
        flat = np.concatenate([np.asarray(s, dtype=np.int64) for s in token_seqs])
        n_tok = flat.size
        gather = np.zeros((len(token_seqs), t_max), dtype=np.int64)
        off = 0
        for b, seq in enumerate(token_seqs):
            seq = np.asarray(seq)
            idx = off + np.arange(len(seq))
            ph = np.flatnonzero(seq == IMAGE_ID)
            slots = list(image_slots[b])
            if len(slots) != len(ph):
                raise PlaceholderCountMismatch(f"sequence {b}: {len(ph)} placeholders, {len(slots)} images")
            idx[ph] = n_tok + np.asarray(slots, dtype=np.int64)
            gather[b, : len(seq)] = idx
            gather[b, len(seq):] = idx[-1]
            off += len(seq)
        table = ops.concat([ops.embedding_lookup(self.params["txt.tok"], flat), image_vecs], axis=0)
        x = ops.index(table, gather) + ops.slice_rows(self.params["txt.pos"], 0, t_max)
        return x, lengths

    def assemble_sequence(self, prompt_tokens: Sequence[int], image_vecs: Tensor, kind: SampleKind,
                          tail: Sequence[int] = ()) -> Tensor:
        seq = self.sequence_tokens(kind, prompt_tokens, tail)
        if image_vecs.shape[0] != self.expected_images(kind):
            raise PlaceholderCountMismatch(f"{image_vecs.shape[0]} image vectors for {kind}")
        x, _ = self.assemble_batch([seq], [range(image_vecs.shape[0])], image_vecs)
        return ops.reshape(x, x.shape[1:])

    def backbone_forward(self, x: Tensor) -> Tensor:
        """Causal transformer over (T, d) or (B, T, d); returns final-norm hidden states."""
        single = x.ndim == 2
        if single:
            x = ops.reshape(x, (1,) + x.shape)
        t = x.shape[1]
        if t > self.config.max_seq:
            raise SequenceTooLong(f"sequence of {t} exceeds {self.config.max_seq}")
        mask = ops.causal_self_attention_mask(t)
        for i in range(self.config.layers):
            x = self._block(x, f"bb.blk{i}", mask)
        h = self._ln(x, "bb.ln")
        return ops.reshape(h, h.shape[1:]) if single else h

    def logits(self, hidden: Tensor) -> Tensor:
        return self._linear(hidden, "head", bias=False)

    def dream(self, hidden: Tensor) -> Tensor:
        return self._linear(hidden, "dream")

    def lpd_predict(self, unr: Tensor, kind: SampleKind | None = None) -> Tensor:
        """Dream-head outputs at the four trailing dream slots of a single-sample UNR."""
        if kind is not None and not SampleKind(kind).is_lpd:
            raise MissingDreamSlots(f"{SampleKind(kind).value} samples carry no dream slots")
        return self.dream(unr[-4:])

    # --- batch preparation ---------------------------------------------------------

    def _encode_keys(self, keys: list, cache: RenderCache, memo: dict | None = None) -> Tensor:
        """Encode unique (plan_seed, pose) observation keys in one pass."""
        if memo is not None:
            todo = [k for k in keys if k not in memo]
            if todo:
                with no_grad():
                    vecs = self.encode_images(np.stack([cache.get(s, p, "obs")[0] for s, p in todo])).data
                for k, v in zip(todo, vecs):
                    memo[k] = v
            return Tensor(np.stack([memo[k] for k in keys]))
        return self.encode_images(np.stack([cache.get(s, p, "obs")[0] for s, p in keys]))

    def _batch_inputs(self, samples: Sequence[StepSample], tails: Sequence[Sequence[int]], cache: RenderCache,
                      memo: dict | None = None):
        keys: dict = {}
        slots = []
        for s in samples:
            row = []
            for p in s.frames:
                key = (s.plan_seed, p)
                if key not in keys:
                    keys[key] = len(keys)
                row.append(keys[key])
            slots.append(row)
        vecs = self._encode_keys(list(keys), cache, memo)
        seqs = [self.sequence_tokens(s.kind, s.prompt_tokens, tail) for s, tail in zip(samples, tails)]
        x, lengths = self.assemble_batch(seqs, slots, vecs)
        return x, lengths, seqs

    def lpd_targets(self, sample: StepSample, cache: RenderCache) -> np.ndarray:
        """Shared-encoder features of the four target faces, held constant (no gradient)."""
        if not sample.kind.is_lpd:
            raise KindMismatch(f"{sample.kind.value} sample has no panorama target")
        with no_grad():
            return self.encode_images(sample.target_panorama(cache)).data

    def _lpd_targets_batch(self, samples: Sequence[StepSample], cache: RenderCache) -> np.ndarray:
        faces = np.concatenate([s.target_panorama(cache) for s in samples])
        with no_grad():
            return self.encode_images(faces).data.reshape(len(samples), 4, self.config.d)

    # --- losses ----------------------------------------------------------------------

    def compute_losses(self, samples: Sequence[StepSample], cache: RenderCache, lam: float = 1.0,
                       dream_override: dict[int, np.ndarray] | None = None) -> tuple[Tensor, LossReport]:
        """Batch loss: mean over samples of each sample's own loss, LPD terms scaled by ``lam``.

        Must be called inside a Tape for gradients. ``dream_override`` replaces the dream-head
        output of the given sample indices (used to probe the perfect-prediction case).
        """
        if not samples:
            raise ValueError("empty batch")
        bsz = len(samples)
        tails = []
        for s in samples:
            if s.kind is SampleKind.ACTION:
                tails.append(list(s.target_actions[:-1]))
            elif s.kind is SampleKind.IR:
                tails.append(list(s.target_tokens))
            else:
                tails.append([])
        x, lengths, seqs = self._batch_inputs(samples, tails, cache)
        hidden = self.backbone_forward(x)
        report = LossReport(lam=lam, counts=dict(Counter(s.kind.value for s in samples)))
        terms: list[Tensor] = []

        for kind in (SampleKind.ACTION, SampleKind.IR):
            rows_b, rows_t, targets, weights = [], [], [], []
            for b, s in enumerate(samples):
                if s.kind is not kind:
                    continue
                tgt = list(s.target_actions) if kind is SampleKind.ACTION else list(s.target_tokens) + [EOS_ID]
                start = len(s.prompt_tokens) - 1
                rows_b += [b] * len(tgt)
                rows_t += list(range(start, start + len(tgt)))
                targets += tgt
                weights += [1.0 / (bsz * len(tgt))] * len(tgt)
            if not targets:
                continue
            logits = self.logits(ops.index(hidden, (np.array(rows_b), np.array(rows_t))))
            loss = ops.cross_entropy(logits, targets, weights)
            terms.append(loss)
            if kind is SampleKind.ACTION:
                report.l_act = loss.item()
            else:
                report.l_ins = loss.item()

        lpd_idx = [b for b, s in enumerate(samples) if s.kind.is_lpd]
        if lpd_idx:
            targets = self._lpd_targets_batch([samples[b] for b in lpd_idx], cache)
            slot_t = np.stack([np.arange(lengths[b] - 4, lengths[b]) for b in lpd_idx])
            pred = self.dream(ops.index(hidden, (np.array(lpd_idx)[:, None], slot_t)))
            for kind in vocab.LPD_KINDS:
                sel = [i for i, b in enumerate(lpd_idx) if samples[b].kind is kind]
                if not sel:
                    continue
                p = ops.index(pred, np.array(sel))
                if dream_override:
                    over = [dream_override.get(lpd_idx[i]) for i in sel]
                    if all(o is not None for o in over):
                        p = Tensor(np.stack(over).astype(self.dtype))
                loss = ops.scale(ops.mse(p, Tensor(targets[sel].astype(self.dtype))), len(sel) / bsz)
                report.l_fea[kind.value] = loss.item()
                terms.append(ops.scale(loss, lam))

        total = terms[0]
        for t in terms[1:]:
            total = total + t
        report.total = total.item()
        return total, report

    # --- decoding ------------------------------------------------------------------

    def _next_tokens(self, samples, tails, cache, memo) -> np.ndarray:
        with no_grad():
            x, lengths, _ = self._batch_inputs(samples, tails, cache, memo)
            hidden = self.backbone_forward(x)
            last = hidden.data[np.arange(len(samples)), lengths - 1]
            return np.argmax(last @ self.params["head.w"].data, axis=-1)

    def decode_actions(self, samples: Sequence[StepSample], cache: RenderCache, memo: dict | None = None) -> list[list[Action]]:
        """Greedy K-step decode per sample. Non-action tokens become Stop and are counted."""
        tails: list[list[int]] = [[] for _ in samples]
        for _ in range(self.config.k_future):
            nxt = self._next_tokens(samples, tails, cache, memo)
            for tail, tok in zip(tails, nxt):
                tail.append(int(tok))
        out = []
        for tail in tails:
            acts = []
            for tok in tail:
                a = token_action(tok)
                if a is None:
                    self.non_action_tokens[vocab.TOKENS[tok]] += 1
                    a = Action.STOP
                acts.append(a)
            out.append(acts)
        return out

    def decode_instruction(self, samples: Sequence[StepSample], cache: RenderCache,
                           max_tokens: int = MAX_INSTRUCTION) -> list[list[int]]:
        tails: list[list[int]] = [[] for _ in samples]
        done = [False] * len(samples)
        memo: dict = {}
        for _ in range(max_tokens):
            nxt = self._next_tokens(samples, tails, cache, memo)
            for i, tok in enumerate(nxt):
                if not done[i]:
                    if tok == EOS_ID:
                        done[i] = True
                    else:
                        tails[i].append(int(tok))
            if all(done):
                break
        return tails


class ModelPolicy:
    """Greedy receding-horizon policy: decode K actions, execute the first."""

    def __init__(self, model: MonoDreamModel, cache: RenderCache):
        self.model = model
        self.cache = cache
        self.memo: dict = {}

    def reset(self) -> None:
        self.memo.clear()

    def plan(self, contexts: Sequence[StepSample]) -> list[list[Action]]:
        return self.model.decode_actions(contexts, self.cache, self.memo)

    def __call__(self, contexts: Sequence[StepSample]) -> list[Action]:
        return [acts[0] for acts in self.plan(contexts)]


def write_model_card(path, model: MonoDreamModel, info: dict) -> None:
    lines = [f"config_hash={model.config.hash()}", f"seed={model.config.seed}", f"n_params={model.n_params()}"]
    lines += [f"{k}={v}" for k, v in sorted(info.items())]
    Path(path).write_text("\n".join(lines) + "\n")


def uniform_ce(vocab_size: int) -> float:
    return math.log(vocab_size)
