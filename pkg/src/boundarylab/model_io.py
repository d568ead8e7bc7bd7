"""Versioned structured-text serialization for fitted models.

Models are stored as JSON documents with named fields.  Floats are written
with shortest round-trip precision, so every numeric field survives a
save/load cycle bit-exactly.
"""

import json

import numpy as np

from .classifiers import KnnModel, KrrModel, NwModel
from .errors import FormatError
from .neural import MlpModel

FORMAT_NAME = "boundarylab-model"
FORMAT_VERSION = 1


def _matrix(arr: np.ndarray):
    return np.asarray(arr).tolist()


def model_to_dict(model) -> dict:
    doc = {"format": FORMAT_NAME, "version": FORMAT_VERSION}
    if isinstance(model, KnnModel):
        doc.update(kind="knn", k=model.k, X=_matrix(model.X), y=_matrix(model.y))
    elif isinstance(model, NwModel):
        doc.update(
            kind="nw",
            bandwidth=model.bandwidth,
            kernel=model.kernel,
            X=_matrix(model.X),
            y=_matrix(model.y),
        )
    elif isinstance(model, KrrModel):
        doc.update(
            kind="krr",
            lambda_n=model.lambda_n,
            kernel=model.kernel,
            gamma=model.gamma,
            alpha=_matrix(model.alpha),
            X=_matrix(model.X),
            y=_matrix(model.y),
        )
    elif isinstance(model, MlpModel):
        doc.update(
            kind="mlp",
            weights=[_matrix(W) for W in model.weights],
            biases=[_matrix(b) for b in model.biases],
        )
    else:
        raise TypeError(f"cannot serialize model of type {type(model).__name__}")
    return doc


def model_from_dict(doc: dict):
    if doc.get("format") != FORMAT_NAME:
        raise FormatError(f"not a {FORMAT_NAME} document")
    if doc.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported version {doc.get('version')!r}")
    kind = doc.get("kind")
    if kind == "knn":
        return KnnModel(k=int(doc["k"]), X=np.array(doc["X"], dtype=float),
                        y=np.array(doc["y"], dtype=np.int64))
    if kind == "nw":
        return NwModel(
            bandwidth=float(doc["bandwidth"]),
            kernel=doc["kernel"],
            X=np.array(doc["X"], dtype=float),
            y=np.array(doc["y"], dtype=np.int64),
        )
    if kind == "krr":
        return KrrModel(
            lambda_n=float(doc["lambda_n"]),
            kernel=doc["kernel"],
            gamma=None if doc["gamma"] is None else float(doc["gamma"]),
            alpha=np.array(doc["alpha"], dtype=float),
            X=np.array(doc["X"], dtype=float),
            y=np.array(doc["y"], dtype=np.int64),
        )
    if kind == "mlp":
        return MlpModel(
            weights=tuple(np.array(W, dtype=float) for W in doc["weights"]),
            biases=tuple(np.array(b, dtype=float) for b in doc["biases"]),
        )
    raise FormatError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)
        fh.write("\n")


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid model document ({exc})") from None
    return model_from_dict(doc)
