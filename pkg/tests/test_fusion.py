"""Prediction fusion: the weighted argmax, weight fitting, CSV interfaces."""

import numpy as np
import pytest

from serhead.errors import ContractError, DimensionError
from serhead.fusion import (FusionWeights, PredictionSet, fit_fusion_weights, fuse_predict,
                            fuse_predict_all, load_prediction_set, read_predictions_csv,
                            write_fused_csv, write_predictions_csv)
from serhead.metrics import f1_scores


def build_oracle_ensemble(per_class=5):
    """Two complementary models: A expert on classes 0-3, B on 4-7.

    When the true class is outside a model's expertise it is confidently
    wrong toward a decoy class inside the OTHER model's expertise, so
    uniform fusion fails while column-selecting weights are perfect.
    """
    ids, labels, rows = [], [], []
    for t in range(8):
        for k in range(per_class):
            if t < 4:
                a = np.full(8, 0.1 / 7)
                a[t] = 0.9
                b = np.full(8, 0.01 / 7)
                b[(t + 1) % 4] = 0.99
            else:
                a = np.full(8, 0.01 / 7)
                a[4 + ((t - 3) % 4)] = 0.99
                b = np.full(8, 0.1 / 7)
                b[t] = 0.9
            ids.append(f"u{t}_{k}")
            labels.append(t)
            rows.append([a, b])
    return PredictionSet(ids, np.array(labels), np.array(rows), ["A", "B"])


def brute_force_best_ownership(preds):
    """Max fused F1 over all one-hot column assignments of two models."""
    best = 0.0
    for mask in range(256):
        w = np.zeros((2, 8))
        for j in range(8):
            w[(mask >> j) & 1, j] = 1.0
        f1 = f1_scores(fuse_predict_all(preds, FusionWeights(w)), preds.labels, 8)[1]
        best = max(best, f1)
    return best


def _random_prediction_set(rng, n_utts=40, n_models=3):
    probs = rng.dirichlet(np.ones(8), size=(n_utts, n_models))
    labels = rng.integers(0, 8, size=n_utts)
    ids = [f"u{i}" for i in range(n_utts)]
    return PredictionSet(ids, labels, probs, [f"m{k}" for k in range(n_models)])


class TestFusePredict:
    def test_single_model_identity(self):
        M = np.array([[0.1, 0.2, 0.05, 0.05, 0.3, 0.1, 0.1, 0.1]])
        w = FusionWeights(np.ones((1, 8)))
        assert fuse_predict(M, w) == 4

    def test_column_one_hot_selects_model(self):
        rng = np.random.default_rng(0)
        M = rng.dirichlet(np.ones(8), size=2)
        w = FusionWeights(np.vstack([np.zeros(8), np.ones(8)]))
        assert fuse_predict(M, w) == int(M[1].argmax())

    def test_hand_arithmetic(self):
        # scores = [0.5*0.6 + 0.5*0.2, 0.5*0.4 + 0.5*0.8] = [0.4, 0.6] -> class 1
        M = np.array([[0.6, 0.4], [0.2, 0.8]])
        w = FusionWeights(np.full((2, 2), 0.5))
        scores = (M * w.w).sum(axis=0)
        np.testing.assert_allclose(scores, [0.4, 0.6])
        assert int(scores.argmax()) == 1

    def test_tie_breaks_to_lowest_index(self):
        M = np.array([[0.5, 0.5]])
        assert fuse_predict(M, FusionWeights(np.ones((1, 2)))) == 0

    def test_positive_scaling_preserves_argmax(self):
        rng = np.random.default_rng(1)
        M = rng.dirichlet(np.ones(8), size=3)
        w = rng.uniform(0.1, 1.0, size=(3, 8))
        a = fuse_predict(M, FusionWeights(w))
        b = fuse_predict(M, FusionWeights(w * 3.7))
        assert a == b

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            fuse_predict(np.ones((2, 8)) / 8, FusionWeights(np.ones((3, 8))))


class TestFitFusionWeights:
    def test_oracle_ensemble_reaches_perfect_f1(self):
        preds = build_oracle_ensemble()
        # verify by brute force that a perfect weight matrix exists at all
        assert brute_force_best_ownership(preds) == 1.0
        weights, report = fit_fusion_weights(preds)
        assert report["f1_macro_after"] == 1.0
        assert report["f1_macro_after"] > report["f1_macro_before"]
        assert weights.residual() <= 1e-6
        # exceeds both individual models
        for i in range(2):
            solo = f1_scores(preds.probs[:, i, :].argmax(axis=1), preds.labels, 8)[1]
            assert report["f1_macro_after"] > solo

    def test_identical_models_flag_no_gain(self):
        rng = np.random.default_rng(2)
        p = rng.dirichlet(np.ones(8), size=30)
        probs = np.stack([p, p], axis=1)
        preds = PredictionSet([f"u{i}" for i in range(30)],
                              rng.integers(0, 8, size=30), probs, ["a", "b"])
        weights, report = fit_fusion_weights(preds, max_evals=300)
        assert report["no_gain"]
        assert report["f1_macro_after"] == report["f1_macro_before"]
        assert weights.residual() <= 1e-6

    def test_fitted_never_below_uniform_init(self):
        rng = np.random.default_rng(3)
        for trial in range(3):
            preds = _random_prediction_set(rng)
            _, report = fit_fusion_weights(preds, max_evals=600)
            assert report["f1_macro_after"] >= report["f1_macro_before"] - 1e-12

    def test_global_sums_mode(self):
        preds = build_oracle_ensemble(per_class=3)
        weights, report = fit_fusion_weights(preds, mode="global_sums", max_evals=800)
        assert abs(weights.w.sum() - 1.0) <= 1e-6
        assert report["f1_macro_after"] >= report["f1_macro_before"]

    def test_unknown_mode(self):
        with pytest.raises(ContractError):
            fit_fusion_weights(build_oracle_ensemble(1), mode="simplex")


class TestPredictionSetValidation:
    def test_rows_must_sum_to_one(self):
        probs = np.full((2, 1, 8), 0.2)
        with pytest.raises(ContractError):
            PredictionSet(["a", "b"], np.array([0, 1]), probs, ["m"])


class TestCsvInterfaces:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(4)
        probs = rng.dirichlet(np.ones(8), size=5)
        ids = [f"utt{i}" for i in range(5)]
        labels = rng.integers(0, 8, size=5)
        path = tmp_path / "preds.csv"
        write_predictions_csv(path, ids, labels, probs)
        r_ids, r_labels, r_probs = read_predictions_csv(path)
        assert r_ids == ids
        np.testing.assert_array_equal(r_labels, labels)
        np.testing.assert_allclose(r_probs, probs, atol=1e-9)
        header = path.read_text().splitlines()[0]
        assert header == ("utterance_id,label,p_Neutral,p_Happy,p_Angry,p_Contempt,"
                          "p_Sad,p_Surprise,p_Disgust,p_Fear")

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("utterance,label\nu1,0\n")
        with pytest.raises(ContractError):
            read_predictions_csv(path)

    def test_alignment_by_utterance_id(self, tmp_path):
        rng = np.random.default_rng(5)
        ids = [f"u{i}" for i in range(4)]
        labels = np.array([0, 1, 2, 3])
        pa = rng.dirichlet(np.ones(8), size=4)
        pb = rng.dirichlet(np.ones(8), size=4)
        write_predictions_csv(tmp_path / "a.csv", ids, labels, pa)
        # second model written in reversed order: alignment must fix it
        write_predictions_csv(tmp_path / "b.csv", ids[::-1], labels[::-1], pb[::-1])
        preds = load_prediction_set([tmp_path / "a.csv", tmp_path / "b.csv"])
        np.testing.assert_allclose(preds.probs[:, 0, :], pa, atol=1e-9)
        np.testing.assert_allclose(preds.probs[:, 1, :], pb, atol=1e-9)

    def test_id_mismatch_rejected(self, tmp_path):
        rng = np.random.default_rng(6)
        pa = rng.dirichlet(np.ones(8), size=2)
        write_predictions_csv(tmp_path / "a.csv", ["u0", "u1"], [0, 1], pa)
        write_predictions_csv(tmp_path / "b.csv", ["u0", "u9"], [0, 1], pa)
        with pytest.raises(ContractError):
            load_prediction_set([tmp_path / "a.csv", tmp_path / "b.csv"])

    def test_fused_csv(self, tmp_path):
        path = tmp_path / "fused.csv"
        write_fused_csv(path, ["u0", "u1"], [3, 7])
        lines = path.read_text().splitlines()
        assert lines[0] == "utterance_id,predicted_class"
        assert lines[1:] == ["u0,3", "u1,7"]
