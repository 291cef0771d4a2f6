import numpy as np
import pytest

from src.app.errors import DimensionError
from src.app.schemas import TrainConfig
from src.baseline.dense import (
    CosineScorer,
    DenseAutoencoder,
    cosine_similarity,
    forward,
    image_cost,
    infer_map,
    train_baseline,
    value_and_gradient,
)
from src.imaging.patchflow import ImageTensor


def identity_model(d: int) -> DenseAutoencoder:
    return DenseAutoencoder(w1=np.eye(d), b1=np.zeros(d), w2=np.eye(d), b2=np.zeros(d))


class TestForward:
    def test_identity_reconstruction(self):
        x = np.array([0.3, 0.5, 0.0, 0.9])
        assert np.allclose(forward(x, identity_model(4)), x)

    def test_relu_on_both_layers(self):
        model = DenseAutoencoder(w1=-np.eye(2), b1=np.zeros(2), w2=np.eye(2), b2=np.array([0.5, -0.5]))
        assert np.allclose(forward(np.array([0.2, 0.4]), model), [0.5, 0.0])

    def test_batch(self, rng):
        model = DenseAutoencoder.initialize(16, 4, rng)
        batch = rng.uniform(size=(5, 16))
        out = forward(batch, model)
        assert out.shape == (5, 16)
        assert np.allclose(out[2], forward(batch[2], model))
        assert np.all(out >= 0.0)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionError):
            forward(np.ones(8), DenseAutoencoder.initialize(16, 4, rng))

    def test_inconsistent_layers(self):
        with pytest.raises(DimensionError):
            DenseAutoencoder(w1=np.zeros((2, 4)), b1=np.zeros(3), w2=np.zeros((4, 2)), b2=np.zeros(4))


class TestCosine:
    def test_examples(self):
        assert cosine_similarity([1.0, 0.0], [2.0, 0.0]) == pytest.approx(1.0)
        assert cosine_similarity([1.0, 0.0], [0.0, 3.0]) == pytest.approx(0.0)
        assert cosine_similarity([1.0, 1.0], [1.0, 0.0]) == pytest.approx(2**-0.5)

    def test_zero_vector_scores_zero(self):
        assert cosine_similarity([0.0, 0.0], [1.0, 1.0]) == 0.0
        assert cosine_similarity([1.0, 1.0], [0.0, 0.0]) == 0.0

    def test_rows(self):
        s = cosine_similarity(np.array([[1.0, 0.0], [0.0, 0.0]]), np.array([[1.0, 0.0], [1.0, 0.0]]))
        assert s.tolist() == [1.0, 0.0]


class TestModel:
    def test_parameter_count_at_p8_bd2(self, rng):
        assert DenseAutoencoder.initialize(64, 4, rng).n_parameters == 584

    def test_initialization_bounds(self, rng):
        model = DenseAutoencoder.initialize(64, 4, rng)
        assert np.all(np.abs(model.w1) <= 1 / 8) and np.all(np.abs(model.b1) <= 1 / 8)
        assert np.all(np.abs(model.w2) <= 0.5) and np.all(np.abs(model.b2) <= 0.5)

    def test_dict_round_trip(self, rng):
        model = DenseAutoencoder.initialize(4, 2, rng)
        again = DenseAutoencoder.from_dict(model.to_dict())
        for name in ("w1", "b1", "w2", "b2"):
            assert np.array_equal(getattr(again, name), getattr(model, name))

    def test_zero_model_costs_one(self):
        img = ImageTensor(np.full((4, 4), 0.5))
        assert image_cost(img, DenseAutoencoder.zeros(4, 2), 2, 2) == pytest.approx(1.0)

    def test_identity_model_costs_nothing(self, rng):
        img = ImageTensor(rng.uniform(0.1, 0.9, size=(4, 4)))
        assert image_cost(img, identity_model(4), 2, 1) == pytest.approx(0.0)
        assert np.allclose(infer_map(img, identity_model(4), 2, 1).values, 0.0, atol=1e-12)


@pytest.mark.parametrize("P,hidden,size,S", [(2, 2, 4, 1), (4, 4, 8, 2)])
def test_backprop_matches_finite_differences(P, hidden, size, S, rng):
    img = ImageTensor(rng.uniform(0.1, 0.9, size=(size, size)))
    model = DenseAutoencoder.initialize(P * P, hidden, rng)
    cost, grads = value_and_gradient(img, model, P, S)
    assert cost == pytest.approx(image_cost(img, model, P, S))
    params = model.to_dict()
    h = 1e-6
    for name, g in grads.items():
        assert g.shape == params[name].shape
        for idx in np.ndindex(g.shape):
            plus = {k: v.copy() for k, v in params.items()}
            minus = {k: v.copy() for k, v in params.items()}
            plus[name][idx] += h
            minus[name][idx] -= h
            fd = (
                image_cost(img, DenseAutoencoder.from_dict(plus), P, S)
                - image_cost(img, DenseAutoencoder.from_dict(minus), P, S)
            ) / (2 * h)
            assert g[idx] == pytest.approx(fd, rel=1e-5, abs=1e-8)


class TestTrainBaseline:
    def test_zero_learning_rate_keeps_initialization(self, striped_images):
        tcfg = TrainConfig(epochs=2, learning_rate=0.0, batch_size=2, seed=9)
        state = train_baseline(striped_images, [], tcfg, patch_size=4, stride=4, bottleneck_dim=1)
        expected = DenseAutoencoder.initialize(16, 2, np.random.default_rng(9))
        assert np.array_equal(state.params.w1, expected.w1)
        assert np.array_equal(state.params.b2, expected.b2)
        assert len(state.history) == 3

    def test_training_improves_reconstruction(self, striped_images):
        tcfg = TrainConfig(epochs=15, learning_rate=0.05, batch_size=2, seed=0)
        state = train_baseline(striped_images, striped_images[:1], tcfg, patch_size=4, stride=4, bottleneck_dim=2)
        assert state.best_val_loss < state.history[0].val_loss
        assert isinstance(state.best_params, DenseAutoencoder)

    def test_scorer_shape(self, rng):
        scores = CosineScorer(DenseAutoencoder.initialize(4, 2, rng)).score(rng.uniform(size=(6, 4)))
        assert scores.shape == (6,) and np.all((scores >= 0.0) & (scores <= 1.0 + 1e-12))
