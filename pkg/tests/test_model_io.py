import numpy as np
import pytest

from boundarylab.classifiers import knn_fit, krr_fit, nw_fit
from boundarylab.datasets import LabeledDataset, generate_halfmoon
from boundarylab.errors import FormatError
from boundarylab.model_io import load_model, model_from_dict, save_model
from boundarylab.neural import TrainConfig, mlp_train


@pytest.fixture(scope="module")
def halfmoon():
    ds, _ = generate_halfmoon(40, 0.2, seed=1)
    return ds


def roundtrip(model, tmp_path):
    path = tmp_path / "model.json"
    save_model(model, path)
    return load_model(path)


def test_knn_roundtrip_bit_exact(halfmoon, tmp_path):
    model = knn_fit(halfmoon, 3)
    back = roundtrip(model, tmp_path)
    assert back.k == model.k
    assert np.array_equal(back.X, model.X)
    assert np.array_equal(back.y, model.y)


def test_nw_roundtrip_bit_exact(halfmoon, tmp_path):
    model = nw_fit(halfmoon, 0.15, kernel="epanechnikov")
    back = roundtrip(model, tmp_path)
    assert back.bandwidth == model.bandwidth and back.kernel == model.kernel
    assert np.array_equal(back.X, model.X)


def test_krr_roundtrip_bit_exact(halfmoon, tmp_path):
    model = krr_fit(halfmoon, 0.1, kernel="gaussian")
    back = roundtrip(model, tmp_path)
    assert back.lambda_n == model.lambda_n
    assert back.gamma == model.gamma
    assert np.array_equal(back.alpha, model.alpha)
    assert np.array_equal(back.X, model.X)
    q = np.array([[0.3, 0.4]])
    assert back.predict_eta(q) == model.predict_eta(q)


def test_mlp_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    ds = LabeledDataset(rng.normal(size=(30, 3)), rng.integers(0, 2, 30))
    model, _ = mlp_train(ds, TrainConfig(epochs=3, seed=4), hidden=(8,))
    back = roundtrip(model, tmp_path)
    for a, b in zip(back.weights, model.weights):
        assert np.array_equal(a, b)
    for a, b in zip(back.biases, model.biases):
        assert np.array_equal(a, b)


def test_rejects_foreign_documents():
    with pytest.raises(FormatError):
        model_from_dict({"format": "something-else", "version": 1})
    with pytest.raises(FormatError):
        model_from_dict({"format": "boundarylab-model", "version": 99})
    with pytest.raises(FormatError):
        model_from_dict({"format": "boundarylab-model", "version": 1, "kind": "tree"})
