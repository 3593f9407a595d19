import math
from pathlib import Path

import numpy as np
import pytest

import hypcd

DATA = Path(__file__).resolve().parent.parent / "data"


def test_mobius_addition_matches_the_one_dimensional_formula():
    cfg = hypcd.BallConfig(0.5, 1.0)
    out = hypcd.mobius_add(np.array([0.3]), np.array([-0.4]), cfg)
    assert out[0] == pytest.approx((0.3 - 0.4) / (1 - 0.5 * 0.3 * 0.4), abs=1e-15)


def test_radial_distance():
    cfg = hypcd.BallConfig(0.05, 2.3)
    b = np.array([1.0, 2.0, -0.5])
    d = hypcd.hyperbolic_distance(np.zeros(3), b, cfg)
    sc = math.sqrt(0.05)
    assert d == pytest.approx(2 / sc * math.atanh(sc * np.linalg.norm(b)), abs=1e-12)


def test_lift_stays_in_the_safe_band():
    cfg = hypcd.BallConfig(0.05, 2.3)
    x = hypcd.lift(np.full(16, 1e6), cfg)
    assert np.all(np.isfinite(x))
    assert np.linalg.norm(x) <= cfg.max_norm * (1 + 1e-15)


def test_points_outside_the_ball_are_rejected():
    cfg = hypcd.BallConfig(1.0, 1.0)
    with pytest.raises(ValueError):
        hypcd.mobius_add(np.array([2.0]), np.array([0.0]), cfg)
    with pytest.raises(ValueError):
        hypcd.BallConfig(0.0, 1.0)


def test_hungarian_accuracy():
    rep = hypcd.hungarian_acc([0, 0, 1, 1], [1, 1, 0, 0], 2, {0})
    assert rep["acc_all"] == 1.0
    assert rep["permutation"] == [1, 0]
    cost = np.array([[4.0, 1.0], [2.0, 0.0]])
    assert hypcd.hungarian_solve(cost) == [1, 0]


def test_golden_matrix_round_trip(tmp_path):
    m = hypcd.read_matrix(DATA / "golden_2x3.hypf")
    assert m.shape == (2, 3)
    out = tmp_path / "copy.hypf"
    hypcd.write_matrix(out, m)
    assert out.read_bytes() == (DATA / "golden_2x3.hypf").read_bytes()


def test_malformed_files_raise_data_errors():
    with pytest.raises(hypcd.DataError, match="bad magic at byte offset 0"):
        hypcd.read_matrix(DATA / "bad_magic.hypf")
    with pytest.raises(hypcd.DataError, match="label 7"):
        hypcd.load_features(DATA / "bad_label")


def test_config_errors():
    assert hypcd.default_config("generic")["curvature"] == 0.01
    with pytest.raises(hypcd.ConfigError):
        hypcd.default_config("coarse")
    ds = hypcd.synth_dataset(k=4, depth=2, dim=8, per_class=10)
    with pytest.raises(hypcd.ConfigError):
        hypcd.train(ds, {"curvature": -1.0})


def test_train_and_evaluate_round_trip(tmp_path):
    ds = hypcd.synth_dataset(k=4, depth=2, dim=16, per_class=30, seed=1)
    cfg = {"epochs": 2, "batch_size": 32, "hidden_dim": 32, "feature_dim": 16, "proj_hidden_dim": 32, "proj_dim": 16}
    m = hypcd.train(ds, cfg, str(tmp_path / "ck"))
    again = hypcd.train(ds, cfg)
    for key in ("acc_all", "acc_old", "acc_new", "per_epoch_losses"):
        assert m[key] == again[key]
    rep = hypcd.evaluate(ds, tmp_path / "ck")
    assert rep["acc_all"] == m["acc_all"]
    assert rep["acc_all"] == (rep["n_old"] * rep["acc_old"] + rep["n_new"] * rep["acc_new"]) / (
        rep["n_old"] + rep["n_new"]
    )


def test_divergence_is_raised():
    ds = hypcd.synth_dataset(k=4, depth=2, dim=16, per_class=30)
    cfg = {"epochs": 2, "batch_size": 32, "space": "euclidean", "lr": 1e200, "min_lr": 1e199}
    with pytest.raises(hypcd.DivergenceError):
        hypcd.train(ds, cfg)


def test_kmeans_pins_labelled_rows():
    rng = np.random.default_rng(0)
    x = np.vstack([rng.normal(size=(50, 4)) + 10 * np.eye(4)[c] for c in range(4)])
    y = [c for c in range(4) for _ in range(50)]
    labelled = [c < 2 and i % 2 == 0 for i, c in enumerate(y)]
    assign, centroids, _ = hypcd.semi_sup_kmeans(x, labelled, y, 4, seed=3)
    assert centroids.shape == (4, 4)
    assert all(a == t for a, t, l in zip(assign, y, labelled) if l)


def test_gradcheck_suite():
    results = hypcd.gradcheck(configs=2)
    assert results and all(r["pass"] for r in results)
