import json
import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tomfield import dataset as dsmod
from tomfield import envs
from tomfield.dataset import (Dataset, Trajectory, env_from_dict, env_to_dict,
                              file_sha256, generate_dataset, load, rollout,
                              save, verify_replay, window_matrix,
                              window_samples)
from tomfield.errors import ContractError, FormatVersionError, ParseError

# pinned regression hash of a tiny highway dataset (N=2, T=10, seed=123);
# catches any drift in rollout numerics or file serialization
GOLDEN_SHA256 = "a776248d04cfa1c81a23a3be4cf5bdbaafbff38418466bbc170762c4d32a549b"


# ---------------------------------------------------------------------------
# rollouts


def test_rollout_shapes_and_determinism():
    cfg = envs.highway_config()
    t1 = rollout(cfg, "merge_left", "stay_straight", 12, seed=5)
    t2 = rollout(cfg, "merge_left", "stay_straight", 12, seed=5)
    t3 = rollout(cfg, "merge_left", "stay_straight", 12, seed=6)
    assert t1.states.shape == (12, 4) and t1.actions.shape == (12, 4)
    assert t1 == t2
    assert t1 != t3


def test_rollout_rejects_bad_args():
    cfg = envs.highway_config()
    with pytest.raises(ContractError):
        rollout(cfg, "merge_left", "stay_straight", 0, seed=1)
    with pytest.raises(ContractError):
        rollout(cfg, 3, "stay_straight", 10, seed=1)


def test_rollout_replays_exactly(tiny_highway_dataset, tiny_obstacle_dataset):
    for data in (tiny_highway_dataset, tiny_obstacle_dataset):
        for traj in data.trajectories:
            assert verify_replay(traj, data.env)


def test_verify_replay_detects_tampering(tiny_highway_dataset):
    traj = tiny_highway_dataset.trajectories[0]
    tampered = Trajectory(env_kind=traj.env_kind, states=traj.states.copy(),
                          actions=traj.actions.copy(),
                          robot_label=traj.robot_label,
                          human_label=traj.human_label, seed=traj.seed)
    tampered.states[5, 0] += 1e-9
    assert not verify_replay(tampered, tiny_highway_dataset.env)


def test_obstacle_rollouts_use_sampled_starts(tiny_obstacle_dataset):
    starts = {tuple(t.states[0]) for t in tiny_obstacle_dataset.trajectories}
    assert len(starts) == len(tiny_obstacle_dataset)


def test_highway_rollouts_share_the_configured_start(tiny_highway_dataset):
    for traj in tiny_highway_dataset.trajectories:
        assert np.array_equal(traj.states[0], [0.0, 0.0, 0.0, 1.0])


# ---------------------------------------------------------------------------
# dataset generation


def test_generate_dataset_label_marginals():
    data = generate_dataset(envs.highway_config(), 300, seed=0, T=5)
    counts = {lb: 0 for lb in envs.HIGHWAY_LABELS}
    for t in data.trajectories:
        counts[t.robot_label] += 1
    for lb in envs.HIGHWAY_LABELS:
        assert 60 <= counts[lb] <= 140  # loose band around uniform 100


def test_generate_dataset_respects_label_dist():
    data = generate_dataset(envs.highway_config(), 20, seed=0, T=5,
                            label_dist={"merge_left": 1.0})
    assert all(t.robot_label == "merge_left" for t in data.trajectories)
    assert all(t.human_label == "merge_left" for t in data.trajectories)


def test_generate_dataset_rejects_bad_dist():
    cfg = envs.highway_config()
    with pytest.raises(ContractError):
        generate_dataset(cfg, 5, label_dist={"nope": 1.0})
    with pytest.raises(ContractError):
        generate_dataset(cfg, 5, label_dist={"merge_left": 0.4})
    with pytest.raises(ContractError):
        generate_dataset(cfg, 0)


def test_dataset_equality_and_len(tiny_highway_dataset):
    clone = generate_dataset(envs.highway_config(), 12, seed=3, T=14)
    assert clone == tiny_highway_dataset
    assert len(clone) == 12


# ---------------------------------------------------------------------------
# windowing


def test_window_count_for_default_shapes():
    # T=30, H=7, n=3: tau runs 6..26 inclusive -> 21 windows
    traj = rollout(envs.highway_config(), "merge_left", "merge_left", 30, seed=1)
    assert len(window_samples(traj, 7, 3)) == 21


def test_window_contents_are_consistent():
    traj = rollout(envs.highway_config(), "merge_left", "merge_left", 12, seed=2)
    H, n = 4, 2
    samples = window_samples(traj, H, n)
    s = samples[3]
    tau = s.tau
    rows = np.hstack([traj.states, traj.actions])
    assert np.array_equal(s.history, rows[tau - H + 1:tau + 1].reshape(-1))
    assert np.array_equal(s.anchor, traj.states[tau])
    assert np.array_equal(s.target,
                          traj.actions[tau + 1:tau + n + 1, :2].reshape(-1))


def test_window_stride_thins_taus():
    traj = rollout(envs.highway_config(), "merge_left", "merge_left", 20, seed=2)
    taus = [s.tau for s in window_samples(traj, 5, 2, stride=3)]
    assert taus == list(range(4, 18, 3))


def test_oversized_window_yields_nothing(caplog):
    traj = rollout(envs.highway_config(), "merge_left", "merge_left", 6, seed=2)
    with caplog.at_level(logging.WARNING):
        assert window_samples(traj, 5, 2) == []
    assert "no windows" in caplog.text
    with pytest.raises(ContractError):
        window_matrix([traj], 5, 2)


def test_window_matrix_stacks_and_indexes(tiny_highway_dataset):
    X, anchors, targets, ids, taus = window_matrix(
        tiny_highway_dataset.trajectories, 4, 2)
    per_traj = 14 - 2 - 4 + 1  # taus 3..11
    assert X.shape == (12 * per_traj, 8 * 4)
    assert anchors.shape == (12 * per_traj, 4)
    assert targets.shape == (12 * per_traj, 4)
    assert np.array_equal(np.unique(ids), np.arange(12))
    assert taus.min() == 3 and taus.max() == 11


@given(st.integers(min_value=1, max_value=6), st.integers(min_value=1, max_value=4))
def test_window_count_formula(H, n):
    traj = rollout(envs.highway_config(), "stay_straight", "stay_straight",
                   12, seed=0)
    expected = max(0, 12 - n - H + 1)
    assert len(window_samples(traj, H, n)) == expected


# ---------------------------------------------------------------------------
# persistence


def test_save_load_roundtrip(tmp_path, tiny_obstacle_dataset):
    path = tmp_path / "data.jsonl"
    save(tiny_obstacle_dataset, path)
    loaded = load(path)
    assert loaded == tiny_obstacle_dataset
    assert loaded.env == tiny_obstacle_dataset.env


def test_resave_is_byte_identical(tmp_path, tiny_highway_dataset):
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save(tiny_highway_dataset, p1)
    save(load(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_golden_dataset_hash(tmp_path):
    data = generate_dataset(envs.highway_config(), 2, seed=123, T=10)
    path = tmp_path / "golden.jsonl"
    save(data, path)
    assert file_sha256(path) == GOLDEN_SHA256


def test_load_reports_line_numbers(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = generate_dataset(envs.highway_config(), 2, seed=0, T=5)
    save(good, path)
    lines = path.read_text().splitlines()
    lines[2] = lines[2][:-1]  # truncate the closing brace of record 2
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError, match="line 3"):
        load(path)


def test_load_rejects_missing_fields(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = generate_dataset(envs.highway_config(), 1, seed=0, T=5)
    save(good, path)
    lines = path.read_text().splitlines()
    record = json.loads(lines[1])
    del record["states"]
    lines[1] = json.dumps(record)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError, match="states"):
        load(path)


def test_load_rejects_foreign_and_future_files(tmp_path):
    path = tmp_path / "foreign.jsonl"
    path.write_text('{"format":"something-else","version":1}\n')
    with pytest.raises(ParseError):
        load(path)
    good = generate_dataset(envs.highway_config(), 1, seed=0, T=5)
    save(good, path)
    lines = path.read_text().splitlines()
    header = json.loads(lines[0])
    header["version"] = 2
    lines[0] = json.dumps(header)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatVersionError):
        load(path)


def test_load_rejects_empty_and_headerless(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(ParseError, match="line 1"):
        load(path)
    good = generate_dataset(envs.highway_config(), 1, seed=0, T=5)
    save(good, path)
    header_only = path.read_text().splitlines()[0]
    path.write_text(header_only + "\n")
    with pytest.raises(ParseError, match="no trajectory"):
        load(path)


def test_load_rejects_wrong_label_domain(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = generate_dataset(envs.highway_config(), 1, seed=0, T=5)
    save(good, path)
    lines = path.read_text().splitlines()
    record = json.loads(lines[1])
    record["robot_label"] = 2  # obstacle-style label in a highway file
    lines[1] = json.dumps(record)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError, match="labels invalid"):
        load(path)


def test_env_dict_roundtrip_both_kinds():
    for cfg in (envs.highway_config(), envs.obstacle_config()):
        assert env_from_dict(env_to_dict(cfg)) == cfg


def test_env_from_dict_rejects_unknown_keys():
    d = env_to_dict(envs.highway_config())
    d["wheels"] = 4
    with pytest.raises(ParseError, match="wheels"):
        env_from_dict(d)


def test_trajectory_shape_contract():
    with pytest.raises(ContractError):
        Trajectory(env_kind="highway", states=np.zeros((5, 3)),
                   actions=np.zeros((5, 3)), robot_label="merge_left",
                   human_label="merge_left", seed=0)
    with pytest.raises(ContractError):
        Trajectory(env_kind="highway", states=np.zeros((5, 4)),
                   actions=np.zeros((4, 4)), robot_label="merge_left",
                   human_label="merge_left", seed=0)


def test_dataset_kind_consistency(tiny_highway_dataset):
    with pytest.raises(ContractError):
        Dataset(env=envs.obstacle_config(),
                trajectories=tiny_highway_dataset.trajectories)
    with pytest.raises(ContractError):
        Dataset(env=envs.highway_config(), trajectories=[])
