import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
import scipy.special
import scipy.stats
from hypothesis import given
from hypothesis import strategies as st

from tomfield import analysis, envs, fsq, models, training
from tomfield.analysis import (ComparisonReport, GridSpec, OracleConfig,
                               VectorField, alignment_error, cluster_purity,
                               default_grid, dominant_code_by_label,
                               export_field, extract_vector_field,
                               field_csv_text, field_goal_alignment,
                               field_lateral_sign_fraction, field_svg_text,
                               human_mean_state, latent_histogram,
                               load_field_csv, oracle_label, oracle_predict,
                               paired_t_test, regularized_incomplete_beta,
                               run_comparison, segment_to_history,
                               sequence_alignment_error, trajectory_codes,
                               write_comparison_csv)
from tomfield.errors import (ContractError, DegenerateTestError,
                             DimensionError, UndefinedDirectionError)

finite_angle = st.floats(min_value=-math.pi, max_value=math.pi,
                         allow_nan=False)


@pytest.fixture(scope="module")
def tiny_model(tiny_highway_dataset):
    cfg = training.TrainConfig(epochs=6, batch_size=16, H=4, n=2, seed=5)
    model, _ = training.train("fsq", tiny_highway_dataset, cfg, hidden=(8,))
    return model


# ---------------------------------------------------------------------------
# alignment metrics


def test_alignment_error_reference_points():
    assert alignment_error([1.0, 0.0], [2.0, 0.0]) == pytest.approx(0.0)
    assert alignment_error([1.0, 0.0], [-3.0, 0.0]) == pytest.approx(2.0)
    assert alignment_error([1.0, 0.0], [0.0, 5.0]) == pytest.approx(1.0)


@given(finite_angle, st.floats(min_value=0.01, max_value=100.0),
       st.floats(min_value=0.01, max_value=100.0))
def test_alignment_error_is_scale_invariant(theta, s1, s2):
    v = np.array([math.cos(theta), math.sin(theta)])
    w = np.array([1.0, 0.0])
    base = alignment_error(v, w)
    assert alignment_error(v * s1, w * s2) == pytest.approx(base, abs=1e-9)
    assert 0.0 <= base <= 2.0


def test_alignment_error_contracts():
    with pytest.raises(UndefinedDirectionError):
        alignment_error([0.0, 0.0], [1.0, 0.0])
    with pytest.raises(DimensionError):
        alignment_error([1.0, 0.0], [1.0, 0.0, 0.0])


def test_sequence_alignment_mixes_parallel_and_opposite():
    pred = [[1.0, 0.0], [1.0, 0.0]]
    ref = [[1.0, 0.0], [-1.0, 0.0]]
    assert sequence_alignment_error(pred, ref) == pytest.approx(1.0)


def test_sequence_alignment_skips_zero_rows():
    pred = [[1.0, 0.0], [0.0, 0.0]]
    ref = [[1.0, 0.0], [1.0, 0.0]]
    assert sequence_alignment_error(pred, ref) == pytest.approx(0.0)
    with pytest.raises(UndefinedDirectionError):
        sequence_alignment_error([[0.0, 0.0]], [[1.0, 0.0]])
    with pytest.raises(DimensionError):
        sequence_alignment_error([[1.0, 0.0]], [[1.0, 0.0], [1.0, 0.0]])


# ---------------------------------------------------------------------------
# grids and fields


def test_grid_spec_properties():
    grid = GridSpec(0.0, 19.0, -1.0, 1.0, 20, 10)
    assert grid.cells == 200
    assert np.allclose(grid.xs[[0, -1]], [0.0, 19.0])
    assert np.allclose(grid.ys[[0, -1]], [-1.0, 1.0])
    with pytest.raises(ContractError):
        GridSpec(0.0, 1.0, 0.0, 1.0, 0, 5)
    with pytest.raises(ContractError):
        GridSpec(1.0, 0.0, 0.0, 1.0, 5, 5)


def test_default_grids():
    hw = default_grid(envs.highway_config())
    assert (hw.x_min, hw.x_max, hw.y_min, hw.y_max) == (0.0, 30.0, -1.5, 2.5)
    assert (hw.nx, hw.ny) == (20, 9)
    ob = default_grid(envs.obstacle_config(), nx=12)
    assert (ob.x_min, ob.x_max) == (0.0, 1.0)
    assert (ob.nx, ob.ny) == (12, 12)


def test_extract_vector_field_shapes(tiny_model):
    grid = GridSpec(0.0, 10.0, -1.0, 2.0, 4, 3)
    book = fsq.codebook(tiny_model.quantizer)
    vf = extract_vector_field(tiny_model, book[2], grid, [0.0, 1.0])
    assert vf.actions.shape == (3, 4, 2)
    assert vf.code_index == 2
    # cell (i, j) decodes the anchor [xs[j], ys[i], human]
    direct = models.decoder_forward(
        None, tiny_model.params,
        book[2].q.reshape(1, -1),
        np.array([[grid.xs[1], grid.ys[2], 0.0, 1.0]]), 1)
    assert np.allclose(vf.actions[2, 1], direct[0, :2])


def test_extract_vector_field_width_checks(tiny_model):
    grid = GridSpec(0.0, 1.0, 0.0, 1.0, 2, 2)
    wrong = fsq.codebook(fsq.QuantizerConfig(d=2, L=3))[0]
    with pytest.raises(DimensionError):
        extract_vector_field(tiny_model, wrong, grid, [0.0, 1.0])
    ok = fsq.codebook(tiny_model.quantizer)[0]
    with pytest.raises(DimensionError):
        extract_vector_field(tiny_model, ok, grid, [0.0, 1.0, 2.0])


def _hand_field(actions, x_max=2.0, y_max=1.0):
    actions = np.asarray(actions, dtype=np.float64)
    ny, nx = actions.shape[:2]
    return VectorField(grid=GridSpec(0.0, x_max, -y_max, y_max, nx, ny),
                       code_index=0, code_q=np.zeros(2),
                       human_state=np.zeros(2), actions=actions)


def test_lateral_sign_fraction_counts_band_rows():
    # three rows at y = -1, 0, 1; band half-width 0.25 selects only y = 0
    actions = np.zeros((3, 4, 2))
    actions[1, :, 1] = [1.0, 1.0, 1.0, -1.0]  # three up, one down
    vf = _hand_field(actions)
    assert field_lateral_sign_fraction(vf, 0.0, 0.25, toward=1.0) == 0.75
    assert field_lateral_sign_fraction(vf, 0.0, 0.25, toward=-1.0) == 0.25
    with pytest.raises(ContractError):
        field_lateral_sign_fraction(vf, 5.0, 0.25, toward=1.0)
    with pytest.raises(ContractError):
        field_lateral_sign_fraction(vf, 0.0, 0.25, toward=0.0)


def test_goal_alignment_on_synthetic_fields():
    env = envs.obstacle_config()
    grid = GridSpec(0.0, 1.0, 0.0, 1.0, 5, 5)
    xx, yy = np.meshgrid(grid.xs, grid.ys)
    goal = np.array(env.goals[2])
    toward = np.stack([goal[0] - xx, goal[1] - yy], axis=-1)
    vf = VectorField(grid=grid, code_index=0, code_q=np.zeros(2),
                     human_state=np.zeros(2), actions=toward)
    assert field_goal_alignment(vf, goal, env) == pytest.approx(1.0)
    vf_away = VectorField(grid=grid, code_index=0, code_q=np.zeros(2),
                          human_state=np.zeros(2), actions=-toward)
    assert field_goal_alignment(vf_away, goal, env) == pytest.approx(-1.0)


def test_goal_alignment_ignores_disc_interiors():
    env = envs.obstacle_config(discs=((0.5, 0.5, 0.45),))
    grid = GridSpec(0.3, 0.7, 0.3, 0.7, 3, 3)  # every cell inside the disc
    actions = np.ones((3, 3, 2))
    vf = VectorField(grid=grid, code_index=0, code_q=np.zeros(2),
                     human_state=np.zeros(2), actions=actions)
    with pytest.raises(ContractError):
        field_goal_alignment(vf, env.goals[0], env)


# ---------------------------------------------------------------------------
# clustering diagnostics


def test_latent_histogram_covers_codebook(tiny_model, tiny_highway_dataset):
    hist = latent_histogram(tiny_model, tiny_highway_dataset, 4, 2)
    assert set(hist) == set(range(tiny_model.quantizer.codebook_size))
    per_traj = 14 - 2 - 4 + 1
    assert sum(hist.values()) == 12 * per_traj


def test_trajectory_codes_and_purity_bounds(tiny_model, tiny_highway_dataset):
    codes = trajectory_codes(tiny_model, tiny_highway_dataset.trajectories)
    assert codes.shape == (12,)
    assert np.all((0 <= codes) & (codes < tiny_model.quantizer.codebook_size))
    purity = cluster_purity(tiny_model, tiny_highway_dataset)
    labels = [t.robot_label for t in tiny_highway_dataset.trajectories]
    top_share = max(labels.count(lb) for lb in set(labels)) / len(labels)
    assert top_share <= purity <= 1.0


def test_purity_is_one_for_a_single_label(tiny_model):
    from tomfield.dataset import generate_dataset
    data = generate_dataset(envs.highway_config(), 6, seed=0, T=14,
                            label_dist={"merge_left": 1.0})
    assert cluster_purity(tiny_model, data) == 1.0


def test_trajectory_codes_rejects_short_trajectories(tiny_model):
    from tomfield.dataset import rollout
    short = rollout(envs.highway_config(), "merge_left", "merge_left", 5, 0)
    with pytest.raises(ContractError):
        trajectory_codes(tiny_model, [short])


def test_dominant_code_votes_match_recount(tiny_model, tiny_highway_dataset):
    from tomfield.dataset import window_matrix
    dom = dominant_code_by_label(tiny_model, tiny_highway_dataset, 4, 2,
                                 moving_only=False)
    X, _, _, ids, _ = window_matrix(tiny_highway_dataset.trajectories, 4, 2)
    indices = models.encode_batch(tiny_model, X)
    labels = [t.robot_label for t in tiny_highway_dataset.trajectories]
    assert set(dom) == set(labels)
    for label, code in dom.items():
        member = np.array([labels[i] == label for i in ids])
        counts = np.bincount(indices[member],
                             minlength=tiny_model.quantizer.codebook_size)
        assert counts[code] == counts.max()


def test_human_mean_state_matches_numpy(tiny_highway_dataset):
    stacked = np.concatenate([t.states[:, 2:4]
                              for t in tiny_highway_dataset.trajectories])
    assert np.array_equal(human_mean_state(tiny_highway_dataset),
                          stacked.mean(axis=0))


# ---------------------------------------------------------------------------
# the reference predictor


def _seg(ys):
    states = np.zeros((len(ys), 4))
    states[:, 0] = np.arange(len(ys), dtype=np.float64)
    states[:, 1] = ys
    states[:, 2:] = [0.0, 1.0]
    return states


def test_highway_classification_dead_band():
    cfg = OracleConfig(env=envs.highway_config())
    assert oracle_label(cfg, _seg([0.0, 0.1, 0.3])) == "merge_left"
    assert oracle_label(cfg, _seg([0.0, -0.1, -0.3])) == "merge_right"
    assert oracle_label(cfg, _seg([0.0, 0.05, 0.1])) == "stay_straight"


def test_highway_stay_prediction_is_pure_forward():
    cfg = OracleConfig(env=envs.highway_config())
    out = oracle_predict(cfg, _seg([0.0, 0.0, 0.05]), [3.0, 0.2, 0.0, 1.0])
    assert out.shape == (3, 2)
    assert np.allclose(out, np.tile([1.0, 0.0], (3, 1)))


def test_highway_merge_prediction_aims_at_target_lane():
    cfg = OracleConfig(env=envs.highway_config())
    out = oracle_predict(cfg, _seg([0.0, 0.4, 0.9]), [5.0, 0.25, 0.0, 1.0])
    # segment started in lane 0, so merge_left aims at y = 1 from y = 0.25
    aim = np.array([cfg.lookahead, 1.0 - 0.25])
    expected = aim / np.linalg.norm(aim) * cfg.env.forward_speed
    assert np.allclose(out, np.tile(expected, (3, 1)))


def test_obstacle_classification_by_heading():
    cfg = OracleConfig(env=envs.obstacle_config())
    states = np.zeros((4, 4))
    states[:, 0] = 0.5 + 0.02 * np.arange(4)
    states[:, 1] = 0.5 + 0.02 * np.arange(4)
    assert oracle_label(cfg, states) == 2  # heading toward (0.9, 0.9)
    states[:, 1] = 0.5 - 0.02 * np.arange(4)
    assert oracle_label(cfg, states) == 1  # toward (0.9, 0.1)


def test_obstacle_stationary_segment_uses_nearest_goal():
    cfg = OracleConfig(env=envs.obstacle_config())
    states = np.tile([0.15, 0.2, 0.5, 0.5], (4, 1))
    assert oracle_label(cfg, states) == 0  # nearest to (0.1, 0.1)


def test_obstacle_prediction_is_max_speed_toward_goal():
    cfg = OracleConfig(env=envs.obstacle_config(), n=4)
    states = np.zeros((4, 4))
    states[:, 0] = np.linspace(0.5, 0.56, 4)
    states[:, 1] = np.linspace(0.5, 0.56, 4)
    out = oracle_predict(cfg, states, [0.2, 0.2, 0.5, 0.5])
    to_goal = np.array([0.7, 0.7])
    expected = to_goal / np.linalg.norm(to_goal) * cfg.env.max_speed
    assert out.shape == (4, 2)
    assert np.allclose(out, np.tile(expected, (4, 1)))


def test_obstacle_prediction_zero_at_the_goal():
    cfg = OracleConfig(env=envs.obstacle_config())
    states = np.zeros((3, 4))
    states[:, :2] = [0.5, 0.5]
    states[2, :2] = [0.6, 0.6]
    out = oracle_predict(cfg, states, [0.9, 0.9, 0.5, 0.5])
    assert np.array_equal(out, np.zeros((3, 2)))


def test_oracle_rejects_degenerate_segments():
    cfg = OracleConfig(env=envs.highway_config())
    with pytest.raises(ContractError):
        oracle_predict(cfg, np.zeros((1, 4)), [0.0, 0.0, 0.0, 1.0])
    with pytest.raises(ContractError):
        oracle_predict(cfg, np.zeros((3, 3)), [0.0, 0.0, 0.0, 1.0])


def test_segment_to_history_left_pads_with_first_row(rng):
    rows = rng.standard_normal((5, 8))
    out = segment_to_history(rows, 7).reshape(7, 8)
    assert np.array_equal(out[0], rows[0])
    assert np.array_equal(out[1], rows[0])
    assert np.array_equal(out[2:], rows)
    full = rng.standard_normal((9, 8))
    assert np.array_equal(segment_to_history(full, 7).reshape(7, 8), full[-7:])


# ---------------------------------------------------------------------------
# paired t-test


def test_t_test_matches_scipy(rng):
    for _ in range(20):
        a = rng.standard_normal(12)
        b = rng.standard_normal(12) + rng.uniform(-1, 1)
        t, p = paired_t_test(a, b)
        ref = scipy.stats.ttest_rel(a, b)
        assert t == pytest.approx(ref.statistic, abs=1e-10)
        assert p == pytest.approx(ref.pvalue, abs=1e-8)


def test_t_test_symmetry(rng):
    a, b = rng.standard_normal(8), rng.standard_normal(8)
    t_ab, p_ab = paired_t_test(a, b)
    t_ba, p_ba = paired_t_test(b, a)
    assert t_ab == pytest.approx(-t_ba)
    assert p_ab == pytest.approx(p_ba)


def test_t_test_balanced_differences_give_t_zero():
    t, p = paired_t_test([1.0, -1.0], [-1.0, 1.0])
    assert t == 0.0
    assert p == pytest.approx(1.0)


def test_t_test_degenerate_and_contract_cases():
    with pytest.raises(DegenerateTestError):
        paired_t_test([1.0, 1.0, 1.0], [0.0, 0.0, 0.0])
    with pytest.raises(ContractError):
        paired_t_test([1.0], [0.0])
    with pytest.raises(DimensionError):
        paired_t_test([1.0, 2.0], [1.0, 2.0, 3.0])


@given(st.floats(min_value=0.5, max_value=20.0),
       st.floats(min_value=0.5, max_value=20.0),
       st.floats(min_value=0.001, max_value=0.999))
def test_incomplete_beta_matches_scipy(a, b, x):
    assert regularized_incomplete_beta(a, b, x) == pytest.approx(
        float(scipy.special.betainc(a, b, x)), abs=1e-10)


def test_incomplete_beta_endpoints():
    assert regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0
    assert regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0


# ---------------------------------------------------------------------------
# the comparison harness


def _oracle_as_predictor(cfg):
    def predictor(seg_states, seg_actions, start_state):
        return oracle_predict(cfg, seg_states, start_state)
    return predictor


def _tilted_predictor(cfg):
    """Oracle rotated by a start-dependent angle: errors vary by probe."""
    def predictor(seg_states, seg_actions, start_state):
        out = oracle_predict(cfg, seg_states, start_state)
        theta = 0.15 + 0.2 * abs(math.sin(100.0 * float(start_state[0])))
        rot = np.array([[math.cos(theta), -math.sin(theta)],
                        [math.sin(theta), math.cos(theta)]])
        return out @ rot.T
    return predictor


def test_run_comparison_scores_and_pairs(tiny_highway_dataset):
    env = tiny_highway_dataset.env
    cfg = OracleConfig(env=env)
    predictors = {"exact": _oracle_as_predictor(cfg),
                  "tilted": _tilted_predictor(cfg)}
    report = run_comparison(predictors, tiny_highway_dataset, cfg,
                            trials=10, starts=5, seed=2)
    assert report.trials_used == 10
    assert report.skipped == 0
    assert sum(len(t) for t in report.errors["exact"]) == 50
    assert report.means["exact"] == pytest.approx(0.0, abs=1e-12)
    assert report.means["tilted"] > 0.01
    assert report.t < 0  # exact minus tilted is negative
    assert 0.0 <= report.p <= 1.0
    assert not report.zero_variance
    for meta in report.trial_meta:
        assert meta["seg_len"] in (5, 6, 7)
        assert meta["tau0"] == 0  # segments are interaction prefixes
        assert len(meta["starts"]) == 5


def test_run_comparison_is_deterministic(tiny_obstacle_dataset):
    cfg = OracleConfig(env=tiny_obstacle_dataset.env)
    predictors = {"exact": _oracle_as_predictor(cfg),
                  "tilted": _tilted_predictor(cfg)}
    r1 = run_comparison(predictors, tiny_obstacle_dataset, cfg,
                        trials=4, starts=3, seed=9)
    r2 = run_comparison(predictors, tiny_obstacle_dataset, cfg,
                        trials=4, starts=3, seed=9)
    assert r1.errors == r2.errors and r1.t == r2.t and r1.p == r2.p


def test_run_comparison_flags_zero_variance(tiny_highway_dataset):
    cfg = OracleConfig(env=tiny_highway_dataset.env)
    predictors = {"a": _oracle_as_predictor(cfg),
                  "b": _oracle_as_predictor(cfg)}
    report = run_comparison(predictors, tiny_highway_dataset, cfg,
                            trials=3, starts=2, seed=0)
    assert report.zero_variance
    assert math.isnan(report.t) and math.isnan(report.p)


def test_run_comparison_skips_undefined_pairs_for_everyone(tiny_highway_dataset):
    cfg = OracleConfig(env=tiny_highway_dataset.env)

    def sometimes_zero(seg_states, seg_actions, start_state):
        if float(start_state[0]) > 0.0:
            return np.zeros((cfg.n, 2))
        return oracle_predict(cfg, seg_states, start_state)

    predictors = {"flaky": sometimes_zero,
                  "exact": _oracle_as_predictor(cfg)}
    report = run_comparison(predictors, tiny_highway_dataset, cfg,
                            trials=10, starts=5, seed=2)
    assert report.skipped > 0
    retained = sum(len(t) for t in report.errors["exact"])
    assert retained == 50 - report.skipped
    assert retained == sum(len(t) for t in report.errors["flaky"])


def test_run_comparison_respects_eval_pool(tiny_highway_dataset):
    cfg = OracleConfig(env=tiny_highway_dataset.env)
    predictors = {"exact": _oracle_as_predictor(cfg),
                  "tilted": _tilted_predictor(cfg)}
    report = run_comparison(predictors, tiny_highway_dataset, cfg,
                            trials=5, starts=2, seed=0, eval_traj_ids=[3, 7])
    assert {m["traj_id"] for m in report.trial_meta} <= {3, 7}


def test_run_comparison_contract_checks(tiny_highway_dataset):
    cfg = OracleConfig(env=tiny_highway_dataset.env)
    exact = {"exact": _oracle_as_predictor(cfg)}
    both = {"exact": _oracle_as_predictor(cfg),
            "tilted": _tilted_predictor(cfg)}
    with pytest.raises(ContractError):
        run_comparison(both, tiny_highway_dataset, cfg, trials=1, starts=5, seed=0)
    with pytest.raises(ContractError):
        run_comparison(exact, tiny_highway_dataset, cfg, trials=5, starts=5, seed=0)
    with pytest.raises(ContractError):
        run_comparison(both, tiny_highway_dataset, cfg, trials=5, starts=5,
                       seed=0, eval_traj_ids=[])


# ---------------------------------------------------------------------------
# exports


def test_field_csv_roundtrip(tmp_path, tiny_model):
    grid = GridSpec(0.0, 10.0, -1.0, 2.0, 4, 3)
    book = fsq.codebook(tiny_model.quantizer)
    vf = extract_vector_field(tiny_model, book[1], grid, [0.0, 1.0])
    path = tmp_path / "field.csv"
    export_field(vf, path, "csv")
    rows = load_field_csv(path)
    assert rows.shape == (12, 4)
    xx, yy = np.meshgrid(grid.xs, grid.ys)
    assert np.array_equal(rows[:, 0], xx.ravel())
    assert np.array_equal(rows[:, 1], yy.ravel())
    assert np.array_equal(rows[:, 2:], vf.actions.reshape(-1, 2))


def test_load_field_csv_rejects_other_files(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ContractError):
        load_field_csv(path)


def test_export_field_rejects_unknown_format(tmp_path, tiny_model):
    grid = GridSpec(0.0, 1.0, 0.0, 1.0, 2, 2)
    book = fsq.codebook(tiny_model.quantizer)
    vf = extract_vector_field(tiny_model, book[0], grid, [0.0, 1.0])
    with pytest.raises(ContractError):
        export_field(vf, tmp_path / "f.png", "png")


def test_svg_export_is_well_formed(tiny_model):
    grid = GridSpec(0.0, 1.0, 0.0, 1.0, 3, 3)
    book = fsq.codebook(tiny_model.quantizer)
    vf = extract_vector_field(tiny_model, book[0], grid, [0.5, 0.9])
    svg = field_svg_text(vf, envs.obstacle_config())
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    circles = [e for e in root.iter() if e.tag.endswith("circle")]
    assert len(circles) == 2 + 4  # discs + goal rings
    lines = [e for e in root.iter() if e.tag.endswith("line")]
    assert len(lines) >= grid.cells


def test_svg_highway_draws_lane_lines(tiny_model):
    grid = default_grid(envs.highway_config(), nx=4, ny=3)
    book = fsq.codebook(tiny_model.quantizer)
    vf = extract_vector_field(tiny_model, book[0], grid, [0.0, 1.0])
    svg = field_svg_text(vf, envs.highway_config())
    assert svg.count("stroke-dasharray") == 2  # one per lane center
    ET.fromstring(svg)


def test_comparison_csv_layout(tmp_path, tiny_highway_dataset):
    cfg = OracleConfig(env=tiny_highway_dataset.env)
    predictors = {"fsq": _oracle_as_predictor(cfg),
                  "vae": _tilted_predictor(cfg)}
    report = run_comparison(predictors, tiny_highway_dataset, cfg,
                            trials=4, starts=3, seed=1)
    path = tmp_path / "cmp.csv"
    write_comparison_csv(report, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# tomfield-comparison v1 env=highway")
    assert f"p={report.p!r}" in lines[0]
    assert lines[1] == "trial,start,fsq_error,vae_error"
    assert len(lines) == 2 + sum(len(t) for t in report.errors["fsq"])
    trial, start, e_fsq, e_vae = lines[2].split(",")
    assert (int(trial), int(start)) == (0, 0)
    assert float(e_fsq) == report.errors["fsq"][0][0]
    assert float(e_vae) == report.errors["vae"][0][0]
