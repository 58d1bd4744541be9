import math
from types import SimpleNamespace

import numpy as np
import pytest

from monodream.episodes import (
    DaggerStats, OraclePolicy, RandomPolicy, RetryExhausted, build_action_samples, build_instruction_samples,
    build_lpd_samples, check_tokens, count_kinds, dagger_collect, generate_instruction, history_indices,
    make_episode, oracle_actions_from, rollout_indices, write_manifest,
)
from monodream.vocab import (
    ACTION_TOKENS, DREAM_IDS, IMAGE_ID, VOCAB_SIZE, SampleKind, UnknownWord, action_token, detokenize, prompt_for,
    prompt_template, template_hash, token_action, tokenize,
)
from monodream.world import Action, FloorPlan, Pose, Room, Wall, STOP_RADIUS, box_plan, replay, step_action


def _custom(rooms, walls):
    return FloorPlan(seed=-2, config_hash="custom", rooms=tuple(rooms), walls=tuple(walls))


# --- vocabulary and prompts -----------------------------------------------------


def test_tokenize_round_trip():
    text = "turn left. go forward through the red room. stop in the blue room."
    assert detokenize(tokenize(text)) == text


def test_unknown_word_rejected():
    with pytest.raises(UnknownWord):
        tokenize("go sideways")


def test_action_tokens_round_trip():
    for a in Action:
        assert token_action(action_token(a)) is a
    assert token_action(IMAGE_ID) is None
    assert len(ACTION_TOKENS) == 10 and len(DREAM_IDS) == 4


def test_six_distinct_templates():
    assert len({prompt_template(k) for k in SampleKind}) == 6
    assert len({template_hash(k) for k in SampleKind}) == 6


def test_instruction_slot_placement():
    for kind in (SampleKind.ACTION, SampleKind.FPI, SampleKind.FPD):
        assert "[instruction]" in prompt_template(kind)
    for kind in (SampleKind.PI, SampleKind.PD, SampleKind.IR):
        assert "[instruction]" not in prompt_template(kind)
    assert "decide your next move" in prompt_template(SampleKind.ACTION)
    assert "describe the navigation trajectory" in prompt_template(SampleKind.IR)


def test_prompt_placeholder_counts():
    inst = "go forward. stop in the red room."
    assert prompt_for(SampleKind.ACTION, 8, inst).count(IMAGE_ID) == 9
    assert prompt_for(SampleKind.PI, 8).count(IMAGE_ID) == 9
    assert prompt_for(SampleKind.IR, 8).count(IMAGE_ID) == 8
    with pytest.raises(ValueError):
        prompt_for(SampleKind.ACTION, 8)


# --- episodes ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def episodes(request):
    plan = request.getfixturevalue("plan")
    rng = np.random.default_rng(7)
    return plan, [make_episode(plan, rng, episode_id=f"e{i}") for i in range(40)]


def test_make_episode_deterministic(plan):
    a = make_episode(plan, np.random.default_rng(5))
    b = make_episode(plan, np.random.default_rng(5))
    assert a == b


def test_episode_invariants(episodes):
    plan, eps = episodes
    for ep in eps:
        assert 3.0 <= ep.geodesic_length <= 15.0
        assert plan.room_at(*ep.start.xy) != plan.room_at(*ep.goal)
        assert ep.poses[0] == ep.start and len(ep.poses) == ep.n_steps + 1
        assert ep.oracle_actions[-1] is Action.STOP
        final = replay(plan, ep.start, ep.oracle_actions)[-1][0]
        assert math.hypot(final.x - ep.goal[0], final.y - ep.goal[1]) <= STOP_RADIUS


def test_retry_exhausted(plan):
    with pytest.raises(RetryExhausted):
        make_episode(box_plan(4, 4), np.random.default_rng(0))
    with pytest.raises(RetryExhausted):
        make_episode(plan, np.random.default_rng(0), min_length=40.0, max_length=50.0)


def test_instruction_straight_single_room():
    plan = box_plan(4.0, 4.0, color=5)
    ep = SimpleNamespace(start=Pose(0.75, 2.0, 0), oracle_waypoints=((0.75, 2.0), (3.25, 2.0)))
    assert generate_instruction(plan, ep).text == "go forward. stop in the blue room."


def test_instruction_l_path_turns_left_into_red():
    walls = [Wall(0, 0, 8, 0, 5, 5), Wall(8, 0, 8, 8, 0, 0), Wall(8, 8, 6.5, 8, 0, 0), Wall(6.5, 8, 6.5, 1.5, 0, 0),
             Wall(6.5, 1.5, 0, 1.5, 5, 5), Wall(0, 1.5, 0, 0, 5, 5)]
    plan = _custom([Room(0, 0, 0, 8, 1.5, 5), Room(1, 6.5, 1.5, 8, 8, 0)], walls)
    ep = SimpleNamespace(start=Pose(0.75, 0.75, 0), oracle_waypoints=((0.75, 0.75), (7.25, 0.75), (7.25, 7.25)))
    text = generate_instruction(plan, ep).text
    assert "turn left" in text and "red room" in text
    assert text.index("turn left") < text.index("red room")
    assert text.endswith("stop in the red room.")


def test_instruction_mentions_only_path_colors(episodes):
    plan, eps = episodes
    for ep in eps:
        assert detokenize(ep.instruction.tokens) == ep.instruction.text
        seen = set()
        pts = ep.oracle_waypoints
        for a, b in zip(pts, pts[1:]):
            for s in np.linspace(0, 1, 200):
                r = plan.room_at(a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1]))
                if r >= 0:
                    seen.add(plan.rooms[r].color_name)
        words = set(ep.instruction.text.replace(".", "").split())
        mentioned = {w for w in words if w in {r.color_name for r in plan.rooms}}
        assert mentioned <= seen


# --- sample builders ---------------------------------------------------------------------


def test_history_indices_rule():
    assert history_indices(0, 8) == [0] * 8
    assert history_indices(1, 8) == [0] * 8
    assert history_indices(3, 8) == [0, 0, 0, 0, 0, 0, 1, 2]
    assert history_indices(8, 8) == list(range(8))
    assert history_indices(15, 8) == [0, 2, 4, 6, 8, 10, 12, 14]
    for t in range(1, 60):
        idx = history_indices(t, 8)
        assert len(idx) == 8 and idx == sorted(idx) and max(idx) == t - 1


def test_rollout_indices():
    assert rollout_indices(8, 8) == list(range(8))
    assert rollout_indices(16, 8) == [0, 2, 4, 6, 8, 10, 12, 14]


def test_action_samples(episodes):
    _, eps = episodes
    ep = eps[0]
    samples = build_action_samples(ep, 8, 3)
    assert len(samples) == ep.n_steps
    first = samples[0]
    assert first.history == (ep.poses[0],) * 8 and first.current == ep.poses[0]
    assert samples[-1].target_actions == (action_token(Action.STOP),) * 3
    for t, s in enumerate(samples):
        assert len(s.history) == 8 and len(s.target_actions) == 3
        assert s.target_actions[0] == action_token(ep.oracle_actions[t])
        assert s.current == ep.poses[t]
        assert s.prompt_tokens.count(IMAGE_ID) == 9


def test_ten_action_episode_gives_ten_samples(episodes):
    _, eps = episodes
    ep = next(e for e in eps if e.n_steps >= 10)
    from dataclasses import replace
    cut = replace(ep, oracle_actions=ep.oracle_actions[:10], poses=ep.poses[:11])
    assert len(build_action_samples(cut, 8, 3)) == 10


def test_instruction_sample(episodes):
    _, eps = episodes
    ep = eps[1]
    s = build_instruction_samples(ep, 8)
    assert s.kind is SampleKind.IR and s.current is None and len(s.history) == 8
    assert detokenize(s.target_tokens) == ep.instruction.text
    assert s.history == tuple(ep.poses[i] for i in rollout_indices(ep.n_steps, 8))


def test_lpd_samples_targets(episodes, cache):
    plan, eps = episodes
    ep = eps[2]
    samples = build_lpd_samples(ep, 8)
    assert len(samples) == 4 * ep.n_steps
    assert count_kinds(samples)["pi"] == ep.n_steps
    by = {(s.step, s.kind): s for s in samples}
    last = ep.n_steps - 1
    pi = by[(last, SampleKind.PI)].target_panorama(cache)
    fpi = by[(last, SampleKind.FPI)].target_panorama(cache)
    assert pi.tobytes() == fpi.tobytes()
    assert by[(0, SampleKind.FPD)].target_pose == ep.poses[1]
    assert by[(0, SampleKind.PD)].target_view == "pano_depth"
    assert "[instruction]" not in prompt_template(SampleKind.PI)


def test_future_front_face_matches_current_left(cache, square_room):
    pose = Pose.from_degrees(2.0, 2.0, 0.0)
    turned = pose
    for _ in range(2):
        turned, _ = step_action(square_room, turned, Action.LEFT_45)
    cur = cache.get(square_room.seed, pose, "pano_rgb")
    fut = cache.get(square_room.seed, turned, "pano_rgb")
    assert np.array_equal(fut[1], cur[0])


def test_tokens_closed(episodes):
    _, eps = episodes
    samples = [s for ep in eps[:5] for s in build_action_samples(ep) + build_lpd_samples(ep)]
    samples += [build_instruction_samples(ep) for ep in eps[:5]]
    assert check_tokens(samples)
    assert all(t < VOCAB_SIZE for ep in eps for t in ep.instruction.tokens)


def test_manifest_records(tmp_path, episodes):
    _, eps = episodes
    samples = build_action_samples(eps[0])
    write_manifest(tmp_path / "m.jsonl", samples)
    lines = (tmp_path / "m.jsonl").read_text().splitlines()
    assert len(lines) == len(samples)
    assert '"kind": "action"' in lines[0] and '"prompt"' in lines[0]


# --- DAgger --------------------------------------------------------------------------


def test_dagger_random_policy_labels_are_oracle(plan):
    stats = DaggerStats()
    samples = dagger_collect(RandomPolicy(3), [plan], 120, seed=0, stats=stats)
    assert len(samples) <= 120
    for s in samples[::7]:
        labels = oracle_actions_from(plan, s.current, s.goal)
        assert s.target_actions[0] == action_token(labels[0])
        _, blocked = step_action(plan, s.current, labels[0])
        assert not blocked


def test_dagger_oracle_policy_consistent(plan):
    samples = dagger_collect(OraclePolicy([plan]), [plan], 60, seed=1, batch_episodes=4)
    by_ep: dict = {}
    for s in samples:
        by_ep.setdefault(s.episode_id, []).append(s)
    for seq in by_ep.values():
        for a, b in zip(seq, seq[1:]):
            executed, _ = step_action(plan, a.current, token_action(a.target_actions[0]))
            assert executed == b.current


def test_dagger_deterministic(plan):
    a = dagger_collect(RandomPolicy(1), [plan], 50, seed=2)
    b = dagger_collect(RandomPolicy(1), [plan], 50, seed=2)
    assert a == b
