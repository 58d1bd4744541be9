import math

import numpy as np
import pytest

from monodream.episodes import build_action_samples, build_instruction_samples, build_lpd_samples, make_episode
from monodream.model import (
    KindMismatch, MissingDreamSlots, ModelConfig, MonoDreamModel, PlaceholderCountMismatch, SequenceTooLong, patchify,
)
from monodream.nncore import ShapeMismatch, Tape, Tensor, backward, load_checkpoint, no_grad
from monodream.vocab import DREAM_IDS, IMAGE_ID, VOCAB_SIZE, SampleKind, prompt_for
from monodream.world import Action

TINY = ModelConfig(d=32, layers=1, heads=2, vision_layers=1, patch=16, seed=0)


@pytest.fixture(scope="module")
def model():
    return MonoDreamModel(TINY)


@pytest.fixture(scope="module")
def ep(plan):
    return make_episode(plan, np.random.default_rng(21), episode_id="m0")


@pytest.fixture(scope="module")
def samples(ep):
    act = build_action_samples(ep)
    lpd = build_lpd_samples(ep)
    return {"action": act, "lpd": lpd, "ir": build_instruction_samples(ep)}


def _img(rng):
    return rng.random((64, 64, 3))


# --- encoders -----------------------------------------------------------------------------


def test_encode_image_shape_and_determinism(model, rng):
    img = _img(rng)
    a, b = model.encode_image(img), model.encode_image(img)
    assert a.shape == (32,) and np.array_equal(a.data, b.data)


def test_default_encoder_uses_64_patches():
    assert ModelConfig().n_patches == 64
    assert patchify(np.zeros((2, 64, 64, 3)), 8).shape == (2, 64, 192)


def test_one_patch_perturbation_changes_output(model, rng):
    img = _img(rng)
    other = img.copy()
    other[:16, :16] = 1.0 - other[:16, :16]
    assert not np.allclose(model.encode_image(img).data, model.encode_image(other).data)


def test_encode_image_rejects_bad_shape(model):
    with pytest.raises(ShapeMismatch):
        model.encode_image(np.zeros((32, 32, 3)))


def test_encode_text(model):
    toks = [3, 4, 5, 5]
    e = model.encode_text(toks)
    assert e.shape == (4, 32)
    assert np.array_equal(e.data, model.encode_text(toks).data)
    with pytest.raises(ValueError):
        model.encode_text([])


# --- sequence assembly and backbone ------------------------------------------------------------


def test_assemble_lengths(model, rng):
    vecs = Tensor(rng.standard_normal((9, 32)))
    prompt = prompt_for(SampleKind.ACTION, 8, "go forward. stop in the red room.")
    assert model.assemble_sequence(prompt, vecs, SampleKind.ACTION).shape == (len(prompt), 32)
    pi = prompt_for(SampleKind.PI, 8)
    seq = model.sequence_tokens(SampleKind.PI, pi)
    assert len(seq) == len(pi) + 4 and tuple(seq[-4:]) == DREAM_IDS
    assert model.expected_images(SampleKind.IR) == 8
    ir = prompt_for(SampleKind.IR, 8)
    assert model.assemble_sequence(ir, Tensor(rng.standard_normal((8, 32))), SampleKind.IR).shape[0] == len(ir)


def test_placeholder_substitution(model, rng):
    vecs = Tensor(rng.standard_normal((9, 32)))
    prompt = prompt_for(SampleKind.PI, 8)
    x = model.assemble_sequence(prompt, vecs, SampleKind.PI).data
    pos = model.params["txt.pos"].data
    where = [i for i, t in enumerate(prompt) if t == IMAGE_ID]
    for k, i in enumerate(where):
        assert np.allclose(x[i], vecs.data[k] + pos[i], rtol=0, atol=1e-12)


def test_placeholder_count_mismatch(model, rng):
    prompt = prompt_for(SampleKind.ACTION, 7, "go forward.")
    with pytest.raises(PlaceholderCountMismatch):
        model.assemble_sequence(prompt, Tensor(rng.standard_normal((8, 32))), SampleKind.ACTION)


def test_backbone_causal(model, rng):
    x = rng.standard_normal((20, 32))
    base = model.backbone_forward(Tensor(x)).data
    j = 12
    y = x.copy()
    y[j] += rng.standard_normal(32)  # a constant shift would vanish under layer norm
    out = model.backbone_forward(Tensor(y)).data
    assert out.shape == (20, 32)
    assert np.array_equal(out[:j], base[:j])
    assert not np.allclose(out[j:], base[j:])


def test_sequence_too_long(model):
    with pytest.raises(SequenceTooLong):
        model.backbone_forward(Tensor(np.zeros((513, 32))))


def test_unr_finite_sweep(model, rng):
    with no_grad():
        for _ in range(100):
            t = int(rng.integers(1, 120))
            assert np.all(np.isfinite(model.backbone_forward(Tensor(rng.standard_normal((t, 32)) * 3)).data))


# --- losses -----------------------------------------------------------------------------------


def test_uniform_logits_ce(samples, cache):
    m = MonoDreamModel(TINY)
    m.params["head.w"].data[:] = 0.0
    _, rep = m.compute_losses(samples["action"][:3], cache)
    assert abs(rep.l_act - math.log(VOCAB_SIZE)) < 1e-12
    _, rep = m.compute_losses([samples["ir"]], cache)
    assert abs(rep.l_ins - math.log(VOCAB_SIZE)) < 1e-12


def test_action_only_batch(model, samples, cache):
    _, rep = model.compute_losses(samples["action"][:4], cache)
    assert rep.l_ins == 0.0 and all(v == 0.0 for v in rep.l_fea.values())
    assert rep.total == pytest.approx(rep.l_act, abs=1e-12)


def test_lambda_zero_and_decomposition(model, samples, cache):
    batch = samples["action"][:2] + [samples["ir"]] + samples["lpd"][:4]
    _, rep0 = model.compute_losses(batch, cache, lam=0.0)
    assert abs(rep0.total - (rep0.l_act + rep0.l_ins)) < 1e-12
    _, rep = model.compute_losses(batch, cache, lam=0.7)
    assert abs(rep.total - rep.recomputed_total()) < 1e-12
    assert all(rep.l_fea[k] > 0 for k in ("pi", "pd", "fpi", "fpd"))


def test_perfect_dream_gives_zero_feature_loss(model, samples, cache):
    lpd = samples["lpd"][:4]
    override = {i: model.lpd_targets(s, cache) for i, s in enumerate(lpd)}
    _, rep = model.compute_losses(lpd, cache, lam=1.0, dream_override=override)
    assert all(v == 0.0 for v in rep.l_fea.values()) and rep.total == 0.0


def test_lpd_predict_shape_and_errors(model, samples, cache):
    s = samples["lpd"][0]
    with no_grad():
        x, lengths, _ = model._batch_inputs([s], [[]], cache)
        unr = model.backbone_forward(x).data[0]
    assert model.lpd_predict(Tensor(unr), s.kind).shape == (4, 32)
    with pytest.raises(MissingDreamSlots):
        model.lpd_predict(Tensor(unr), SampleKind.ACTION)
    with pytest.raises(KindMismatch):
        model.lpd_targets(samples["action"][0], cache)


def test_lpd_targets_constant_and_terminal_equal(model, samples, cache):
    lpd = samples["lpd"]
    a = model.lpd_targets(lpd[0], cache)
    assert a.shape == (4, 32) and np.array_equal(a, model.lpd_targets(lpd[0], cache))
    last = max(s.step for s in lpd)
    pi = next(s for s in lpd if s.step == last and s.kind is SampleKind.PI)
    fpi = next(s for s in lpd if s.step == last and s.kind is SampleKind.FPI)
    assert np.array_equal(model.lpd_targets(pi, cache), model.lpd_targets(fpi, cache))


def test_lpd_gradient_reaches_shared_encoder(samples, cache):
    m = MonoDreamModel(TINY)
    for kind in (SampleKind.PI, SampleKind.PD, SampleKind.FPI, SampleKind.FPD):
        m.zero_grad()
        s = next(x for x in samples["lpd"] if x.kind is kind)
        with Tape() as tape:
            loss, _ = m.compute_losses([s], cache)
        backward(tape, loss)
        assert np.linalg.norm(m.params["vis.patch.w"].grad) > 0
        assert np.linalg.norm(m.params["bb.blk0.qkv.w"].grad) > 0
        assert np.linalg.norm(m.params["dream.w"].grad) > 0
        assert m.params["head.w"].grad is None or not np.any(m.params["head.w"].grad)


def test_shared_encoder_single_parameter_set(tmp_path, samples, cache):
    m = MonoDreamModel(TINY)
    m.save(tmp_path / "m.ckpt")
    params, _, _ = load_checkpoint(tmp_path / "m.ckpt")
    assert set(params) == set(m.params)
    assert sorted(k for k in params if k.startswith("vis.patch")) == ["vis.patch.b", "vis.patch.w"]
    assert not any("pano" in k or "target" in k for k in params)
    # editing the one encoder moves both observation features and panorama targets
    s = samples["lpd"][0]
    before_t = m.lpd_targets(s, cache)
    before_o = m.encode_image(s.current_image(cache)).data
    m.params["vis.patch.w"].data *= 1.5
    assert not np.allclose(before_t, m.lpd_targets(s, cache))
    assert not np.allclose(before_o, m.encode_image(s.current_image(cache)).data)


# --- decoding and persistence ---------------------------------------------------------------------


def test_decode_actions_deterministic(model, samples, cache):
    batch = samples["action"][:3]
    a = model.decode_actions(batch, cache)
    b = model.decode_actions(batch, cache)
    assert a == b and all(len(x) == 3 and all(isinstance(t, Action) for t in x) for x in a)


def test_decode_instruction_bounded(model, samples, cache):
    out = model.decode_instruction([samples["ir"]], cache, max_tokens=64)
    assert len(out[0]) <= 64


def test_checkpoint_forward_bit_identical(tmp_path, samples, cache):
    m = MonoDreamModel(TINY)
    batch = samples["action"][:2] + samples["lpd"][:2]
    _, before = m.compute_losses(batch, cache)
    m.save(tmp_path / "r.ckpt", card={"note": "x"})
    again, _ = MonoDreamModel.load(tmp_path / "r.ckpt")
    _, after = again.compute_losses(batch, cache)
    assert again.config == m.config
    assert before.total == after.total and before.components() == after.components()
    assert "config_hash=" in (tmp_path / "r.card.txt").read_text()


def test_float32_config(samples, cache):
    m = MonoDreamModel(ModelConfig(d=32, layers=1, heads=2, vision_layers=1, patch=16, dtype="float32"))
    loss, rep = m.compute_losses(samples["action"][:2], cache)
    assert loss.data.dtype == np.float32 and np.isfinite(rep.total)
