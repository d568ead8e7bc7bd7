import mpmath
import numpy as np
import pytest

from boundarylab.datasets import LabeledDataset
from boundarylab.errors import TrainingDiverged
from boundarylab.neural import MlpModel, TrainConfig, mlp_init, mlp_train


def blobs(n=200, seed=0, gap=8.0):
    """Linearly separable 2-D blobs."""
    rng = np.random.default_rng(seed)
    X0 = rng.normal(size=(n // 2, 2)) + np.array([-gap / 2, 0.0])
    X1 = rng.normal(size=(n // 2, 2)) + np.array([gap / 2, 0.0])
    X = np.vstack([X0, X1])
    y = np.concatenate([np.zeros(n // 2, dtype=int), np.ones(n // 2, dtype=int)])
    return LabeledDataset(X, y)


def finite_difference_gradient(f, x, step=1e-5):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2 * step)
    return g


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------


def test_zero_parameters_give_uniform_probabilities():
    model = MlpModel(
        weights=(np.zeros((3, 4)), np.zeros((4, 5))),
        biases=(np.zeros(4), np.zeros(5)),
    )
    _, probs = model.forward(np.array([0.7, -0.2, 1.5]))
    assert np.allclose(probs, 0.2, atol=1e-15)


def test_probabilities_sum_to_one():
    rng = np.random.default_rng(3)
    model = mlp_init([6, 8, 8, 4], seed=1)
    _, probs = model.forward(rng.normal(size=(20, 6)))
    assert np.max(np.abs(probs.sum(axis=1) - 1.0)) < 1e-12


def test_logit_shift_invariance():
    rng = np.random.default_rng(5)
    model = mlp_init([4, 6, 3], seed=2)
    x = rng.normal(size=4)
    logits, probs = model.forward(x)
    shifted = MlpModel(
        weights=model.weights,
        biases=tuple(b + (17.5 if i == len(model.biases) - 1 else 0.0)
                     for i, b in enumerate(model.biases)),
    )
    logits2, probs2 = shifted.forward(x)
    assert np.allclose(logits2 - logits, 17.5, atol=1e-12)
    assert np.max(np.abs(probs2 - probs)) < 1e-12


def test_forward_matches_extended_precision_oracle():
    rng = np.random.default_rng(7)
    model = mlp_init([5, 7, 6, 3], seed=11)
    x = rng.normal(size=5)
    _, probs = model.forward(x)
    mpmath.mp.dps = 50
    a = [mpmath.mpf(float(v)) for v in x]
    for W, b in zip(model.weights[:-1], model.biases[:-1]):
        z = [sum(a[i] * mpmath.mpf(float(W[i, j])) for i in range(W.shape[0]))
             + mpmath.mpf(float(b[j])) for j in range(W.shape[1])]
        a = [1 / (1 + mpmath.e**-v) for v in z]
    W, b = model.weights[-1], model.biases[-1]
    logits = [sum(a[i] * mpmath.mpf(float(W[i, j])) for i in range(W.shape[0]))
              + mpmath.mpf(float(b[j])) for j in range(W.shape[1])]
    exps = [mpmath.e**v for v in logits]
    total = sum(exps)
    oracle = np.array([float(v / total) for v in exps])
    assert np.max(np.abs(probs - oracle)) < 1e-12


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("d,C", [(2, 2), (8, 2), (784, 2), (8, 10)])
def test_input_gradient_matches_finite_differences(d, C):
    rng = np.random.default_rng(d * 100 + C)
    model = mlp_init([d, 16, 16, C], seed=d + C)
    for _ in range(20):
        x = rng.normal(size=d)
        y = int(rng.integers(0, C))
        grad = model.input_gradient(x, y)
        fd = finite_difference_gradient(lambda v: model.loss(v[None, :], [y]), x)
        denom = max(np.max(np.abs(fd)), 1e-8)
        assert np.max(np.abs(grad - fd)) / denom < 1e-4


def test_logit_difference_gradient_matches_finite_differences():
    rng = np.random.default_rng(21)
    model = mlp_init([6, 12, 12, 3], seed=3)
    for _ in range(20):
        x = rng.normal(size=6)
        J = model.logit_jacobian(x)
        diff = J[2] - J[0]
        fd = finite_difference_gradient(
            lambda v: float(model.logits(v)[2] - model.logits(v)[0]), x
        )
        denom = max(np.max(np.abs(fd)), 1e-8)
        assert np.max(np.abs(diff - fd)) / denom < 1e-4


def test_gradient_zero_where_loss_is_flat():
    # zero first layer makes the loss constant in x: exact stationarity
    model = MlpModel(
        weights=(np.zeros((4, 8)), np.ones((8, 2))),
        biases=(np.zeros(8), np.zeros(2)),
    )
    grad = model.input_gradient(np.array([0.3, -1.0, 2.0, 0.0]), 1)
    assert np.linalg.norm(grad) <= 1e-6


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def test_training_separates_blobs():
    ds = blobs(200, seed=1)
    model, trace = mlp_train(ds, TrainConfig(epochs=200, batch_size=32,
                                             learning_rate=0.5, seed=0))
    acc = float(np.mean(model.predict_labels(ds.X) == ds.y))
    assert acc >= 0.99
    assert np.all(np.isfinite(trace))


def test_zero_learning_rate_keeps_initialization():
    ds = blobs(60, seed=2)
    cfg = TrainConfig(epochs=3, batch_size=16, learning_rate=0.0, seed=9)
    model, _ = mlp_train(ds, cfg, hidden=(8,))
    from boundarylab.seeds import split_seed

    init = mlp_init([2, 8, 2], seed=split_seed(9, 0))
    for a, b in zip(model.weights, init.weights):
        assert np.array_equal(a, b)


def test_training_is_bitwise_deterministic():
    ds = blobs(80, seed=3)
    cfg = TrainConfig(epochs=10, batch_size=16, learning_rate=0.3, seed=5)
    m1, t1 = mlp_train(ds, cfg, hidden=(8, 8))
    m2, t2 = mlp_train(ds, cfg, hidden=(8, 8))
    assert np.array_equal(t1, t2)
    for a, b in zip(m1.weights, m2.weights):
        assert np.array_equal(a, b)


def test_divergence_raises():
    # a step of lr * grad beyond float range overflows the first-layer weights
    ds = blobs(60, seed=4, gap=10.0)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(TrainingDiverged):
            mlp_train(ds, TrainConfig(epochs=3, batch_size=8,
                                      learning_rate=1e308, seed=0))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-0.1)
