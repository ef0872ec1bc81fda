import numpy as np
import pytest

from tbma.config import default_config
from tbma.detect import Detector
from tbma.experiments import block_sizes, draw_block, joint_errors
from tbma.fronthaul import solve_quantization_variance
from tbma.learning import (Dataset, LearnedDetector, MlpModel, Target, TrainingDiverged, cloud_features,
                           count_learned_errors, edge_features, evaluate_pe, feature_names, generate_dataset,
                           load_model, loss_and_gradient, predict, read_dataset, save_model, train,
                           training_error, write_dataset, cross_entropy)


def finite_difference_check(model, x, y, eps=1e-5):
    _, grads = loss_and_gradient(model, x, y)
    worst = 0.0
    for i, w in enumerate(model.weights):
        for idx in np.ndindex(w.shape):
            ws = [v.copy() for v in model.weights]
            ws[i][idx] += eps
            up = cross_entropy(model.with_weights(ws).forward(x)[0], y, model.binary)
            ws[i][idx] -= 2 * eps
            down = cross_entropy(model.with_weights(ws).forward(x)[0], y, model.binary)
            num = (up - down) / (2 * eps)
            worst = max(worst, abs(num - grads[i][idx]) / max(abs(num), abs(grads[i][idx]), 1e-7))
    return worst


@pytest.mark.parametrize("n_out, n_classes", [(1, 2), (4, 4)])
def test_gradient_matches_finite_differences(n_out, n_classes):
    rng = np.random.default_rng(0)
    model = MlpModel.initialize(6, n_out, rng, hidden=(5, 4))
    model = model.with_weights([w + rng.normal(0, 0.3, w.shape) for w in model.weights])
    x = rng.normal(size=(5, 6))
    y = rng.integers(0, n_classes, 5)
    assert finite_difference_check(model, x, y) < 1e-4


def test_separable_blobs_are_learned():
    rng = np.random.default_rng(1)
    x = np.vstack([rng.normal(-3, 1, (100, 2)), rng.normal(3, 1, (100, 2))])
    y = np.repeat([0, 1], 100)
    ds = Dataset(x, y, Target.EDGE_CELL1)
    model, losses = train(MlpModel.for_target(2, Target.EDGE_CELL1, rng), ds, 500)
    assert training_error(model, ds) == 0.0
    assert losses[-1] < losses[0]


def test_zero_epochs_leave_model_unchanged():
    rng = np.random.default_rng(2)
    model = MlpModel.for_target(3, Target.CLOUD, rng)
    ds = Dataset(rng.normal(size=(10, 3)), rng.integers(0, 4, 10), Target.CLOUD)
    out, losses = train(model, ds, 0)
    assert losses == []
    for a, b in zip(model.weights, out.weights):
        np.testing.assert_array_equal(a, b)


def test_zero_weights_give_uniform_outputs():
    for n_out, expected in ((1, 0.5), (4, [0.25] * 4)):
        m = MlpModel.initialize(3, n_out, np.random.default_rng(0))
        m = m.with_weights([np.zeros_like(w) for w in m.weights])
        np.testing.assert_array_equal(predict(m, np.array([1.0, -2.0, 3.0])), expected)


def test_probabilities_are_normalised():
    rng = np.random.default_rng(3)
    m = MlpModel.initialize(8, 4, rng)
    p = predict(m, rng.normal(0, 5, (1000, 8)))
    assert np.all((p >= 0) & (p <= 1))
    assert np.max(np.abs(p.sum(axis=1) - 1.0)) < 1e-12


def test_dimension_mismatch():
    rng = np.random.default_rng(4)
    ds = Dataset(rng.normal(size=(4, 3)), [0, 1, 0, 1], Target.EDGE_CELL2)
    with pytest.raises(ValueError, match="inputs"):
        train(MlpModel.for_target(5, Target.EDGE_CELL2, rng), ds, 1)
    with pytest.raises(ValueError, match="classes"):
        train(MlpModel.for_target(3, Target.CLOUD, rng), ds, 1)


def test_divergence_aborts_with_last_finite_state():
    rng = np.random.default_rng(5)
    ds = Dataset(rng.normal(size=(20, 2)), rng.integers(0, 2, 20), Target.EDGE_CELL1)
    with pytest.raises(TrainingDiverged) as info:
        train(MlpModel.for_target(2, Target.EDGE_CELL1, rng), ds, 50, learning_rate=1e308)
    assert all(np.all(np.isfinite(w)) for w in info.value.model.weights)


def test_dataset_shapes_and_labels():
    cfg = default_config()
    ds = generate_dataset(cfg, 200, Target.EDGE_CELL1, None, np.random.default_rng(0))
    assert ds.inputs.shape == (200, 40) and len(ds.names) == 40
    spec = solve_quantization_variance(cfg)
    big = generate_dataset(cfg, 10_000, Target.CLOUD, spec, np.random.default_rng(1))
    assert big.n_features == 80
    freq = np.bincount(big.labels, minlength=4) / 10_000
    assert abs(freq[0] - 0.425) < 0.02 and abs(freq[3] - 0.425) < 0.02
    with pytest.raises(ValueError):
        generate_dataset(cfg, 10, Target.CLOUD, None, np.random.default_rng(0))


def test_feature_order():
    y = np.arange(2 * 3 * 2).reshape(2, 3, 2) + 1j * (100 + np.arange(12).reshape(2, 3, 2))
    f = edge_features(y)
    # interval 1: re level 1, re level 2, im level 1, im level 2, then interval 2 ...
    np.testing.assert_array_equal(f[0, :6], [0, 1, 100, 101, 2, 3])
    c = cloud_features(y, 10 * y)
    np.testing.assert_array_equal(c[0, :8], [0, 1, 100, 101, 0, 10, 1000, 1010])
    cfg = default_config(m_levels=2, l_intervals=3, pmf_cell1_h0=(0.5, 0.5), pmf_cell1_h1=(0.5, 0.5),
                         pmf_cell2_h0=(0.5, 0.5), pmf_cell2_h1=(0.5, 0.5))
    assert feature_names(cfg, Target.CLOUD)[:5] == ["l1_c1_re1", "l1_c1_re2", "l1_c1_im1", "l1_c1_im2", "l1_c2_re1"]


def test_dataset_file_is_deterministic(tmp_path):
    cfg = default_config()
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_dataset(generate_dataset(cfg, 50, Target.EDGE_CELL2, None, np.random.default_rng(9)), a)
    write_dataset(generate_dataset(cfg, 50, Target.EDGE_CELL2, None, np.random.default_rng(9)), b)
    assert a.read_bytes() == b.read_bytes()
    back = read_dataset(a, Target.EDGE_CELL2)
    assert back.inputs.shape == (50, 40)


def test_model_file_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    ds = Dataset(rng.normal(size=(30, 4)), rng.integers(0, 4, 30), Target.CLOUD)
    model, _ = train(MlpModel.for_target(4, Target.CLOUD, rng, hidden=(3,)), ds, 5)
    save_model(model, tmp_path / "m.txt")
    back = load_model(tmp_path / "m.txt")
    assert back.layer_dims == (4, 3, 4)
    for a, b in zip(model.weights, back.weights):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(back.mean, model.mean)
    np.testing.assert_array_equal(predict(back, ds.inputs), predict(model, ds.inputs))


def test_training_is_deterministic():
    rng = np.random.default_rng(7)
    ds = Dataset(rng.normal(size=(40, 3)), rng.integers(0, 2, 40), Target.EDGE_CELL1)
    m0 = MlpModel.for_target(3, Target.EDGE_CELL1, np.random.default_rng(1))
    a, la = train(m0, ds, 20)
    b, lb = train(m0, ds, 20)
    assert la == lb
    np.testing.assert_array_equal(a.weights[0], b.weights[0])


def _const_model(n_in, logit):
    m = MlpModel.initialize(n_in, 1, np.random.default_rng(0), hidden=(2,))
    ws = [np.zeros_like(w) for w in m.weights]
    ws[-1][0, -1] = logit
    return m.with_weights(ws)


def test_constant_guess_matches_counting_oracle():
    cfg = default_config()
    # both edges always answer theta_1: joint error iff (theta1, theta2) != (1, 1)
    det = LearnedDetector(Detector.EDGE_LEARNED, (_const_model(40, 1.0), _const_model(40, 1.0)))
    n, seed = 6000, 3
    errors = count_learned_errors(det, cfg, n, seed)
    oracle = sum(int(np.count_nonzero((tb.theta1 != 1) | (tb.theta2 != 1)))
                 for tb in (draw_block(cfg, None, seed, b, s) for b, s in enumerate(block_sizes(n))))
    assert errors == oracle
    assert abs(errors / n - (1 - 0.85 / 2)) < 0.03
    pe, lo, hi = evaluate_pe(det, cfg, n, seed)
    assert lo <= pe <= hi


def test_label_leaking_features_give_zero_error():
    rng = np.random.default_rng(8)
    y = rng.integers(0, 2, 500)
    x = np.column_stack([y + 0.01 * rng.normal(size=500), rng.normal(size=500)])
    ds = Dataset(x, y, Target.EDGE_CELL1)
    model, _ = train(MlpModel.for_target(2, Target.EDGE_CELL1, rng), ds, 300)
    assert training_error(model, ds) == 0.0


def test_learned_detector_validation():
    m = _const_model(40, 0.0)
    with pytest.raises(ValueError):
        LearnedDetector(Detector.EDGE_LEARNED, (m,))
    with pytest.raises(ValueError):
        LearnedDetector(Detector.EDGE_OPTIMAL, (m, m))
