"""Estimator protocol: sklearn compatibility and dataset/matrix input paths."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from elhsr.estimator import ElhsrRewardModel, dataset_from_matrices
from elhsr.trace_store import gen_synthetic


@pytest.fixture(scope="module")
def dataset():
    ds, _ = gen_synthetic(21, 60, 8, (3, 10), 2, 4, 0.0)
    return ds


@pytest.fixture(scope="module")
def fitted(dataset):
    return ElhsrRewardModel(max_epochs=400, seed=0).fit(dataset)


class TestSklearnProtocol:
    def test_get_params_round_trip(self):
        model = ElhsrRewardModel(loss="hinge", learning_rate=3e-4, selected_layers=[1])
        params = model.get_params()
        assert params["loss"] == "hinge"
        assert params["learning_rate"] == 3e-4
        rebuilt = ElhsrRewardModel(**params)
        assert rebuilt.get_params() == params

    def test_set_params(self):
        model = ElhsrRewardModel().set_params(loss="dpo", patience=5)
        assert model.loss == "dpo" and model.patience == 5

    def test_clone_is_unfitted(self, fitted):
        cloned = clone(fitted)
        assert cloned.get_params() == fitted.get_params()
        with pytest.raises(NotFittedError):
            cloned.predict([np.zeros((2, 8))])

    def test_fit_returns_self(self, dataset):
        model = ElhsrRewardModel(max_epochs=2)
        assert model.fit(dataset) is model

    def test_not_fitted_error(self):
        with pytest.raises(NotFittedError):
            ElhsrRewardModel().decision_function([np.zeros((2, 8))])


class TestFitPredictScore:
    def test_predict_is_positive_reward(self, fitted, dataset):
        rewards = fitted.decision_function(dataset)
        assert np.array_equal(fitted.predict(dataset), (rewards > 0).astype(int))

    def test_score_matches_manual_accuracy(self, fitted, dataset):
        accuracy = fitted.score(dataset)
        manual = (fitted.predict(dataset) == dataset.labels()).mean()
        assert accuracy == pytest.approx(manual)
        assert accuracy > 0.8  # in-sample on an easy planted problem

    def test_deterministic_fit(self, dataset):
        a = ElhsrRewardModel(max_epochs=30, seed=4).fit(dataset)
        b = ElhsrRewardModel(max_epochs=30, seed=4).fit(dataset)
        assert np.array_equal(a.params_.W, b.params_.W)

    def test_epoch_stats_exposed(self, fitted):
        assert len(fitted.epoch_stats_) >= 1
        assert any(s.is_best for s in fitted.epoch_stats_)


class TestMatrixListInput:
    def make_lists(self, rng, n=60):
        direction = rng.standard_normal(6)
        matrices, labels = [], []
        for _ in range(n):
            x = rng.standard_normal((int(rng.integers(2, 7)), 6))
            matrices.append(x)
            labels.append(int(x.mean(axis=0) @ direction > 0))
        return matrices, labels

    def test_fit_predict_on_lists(self, rng):
        matrices, labels = self.make_lists(rng)
        model = ElhsrRewardModel(learning_rate=1e-3, max_epochs=600, seed=1).fit(matrices, labels)
        predictions = model.predict(matrices)
        assert predictions.shape == (len(matrices),)
        assert model.score(matrices, labels) > 0.8

    def test_labels_required_for_lists(self, rng):
        matrices, _ = self.make_lists(rng, n=4)
        with pytest.raises(ValueError):
            ElhsrRewardModel(max_epochs=1).fit(matrices)

    def test_dataset_from_matrices_grouping(self, rng):
        matrices, labels = self.make_lists(rng, n=6)
        ds = dataset_from_matrices(matrices, labels, question_ids=["a", "a", "b", "b", "c", "c"])
        assert len(ds.question_ids()) == 3
        ds_default = dataset_from_matrices(matrices, labels)
        assert len(ds_default.question_ids()) == 6

    def test_length_mismatch(self, rng):
        matrices, labels = self.make_lists(rng, n=4)
        with pytest.raises(ValueError):
            dataset_from_matrices(matrices, labels[:-1])


class TestAblationAndLayers:
    def test_no_gating_configuration(self, dataset):
        model = ElhsrRewardModel(gating_enabled=False, max_epochs=20).fit(dataset)
        assert model.params_.gating_enabled is False

    def test_selected_layers_configuration(self, dataset):
        model = ElhsrRewardModel(selected_layers=[1], max_epochs=20).fit(dataset)
        assert model.params_.W.shape == (2, 4)
