"""The three classical estimators: k-NN, Nadaraya-Watson, kernel ridge.

All three are binary regressors of the posterior eta(x) = P(y=1 | x) with the
strict-threshold classifier label(x) = 1 iff eta_hat(x) > 1/2 (an estimate of
exactly 1/2 maps to class 0).  Fitted models are immutable and safe to share
across prediction workers.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .datasets import LabeledDataset
from .errors import IllConditionedError, NumericError

_CHUNK = 512  # query rows per distance block


def _as_queries(X) -> tuple[np.ndarray, bool]:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        return X[None, :], True
    return X, False


def _sq_distances(Q: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances via the norm expansion; clipped at zero."""
    d2 = np.sum(Q * Q, axis=1)[:, None] + np.sum(T * T, axis=1)[None, :] - 2.0 * (Q @ T.T)
    return np.maximum(d2, 0.0)


def _check_binary(y: np.ndarray) -> None:
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("estimator supports binary labels {0, 1} only")


# ---------------------------------------------------------------------------
# k-nearest neighbors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KnnModel:
    """Exact (full-scan) k-NN over a stored copy of the training set."""

    k: int
    X: np.ndarray
    y: np.ndarray

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def predict_eta(self, X) -> np.ndarray:
        return knn_predict_eta(self, X)

    def predict_labels(self, X) -> np.ndarray:
        return knn_predict(self, X)


def knn_fit(train: LabeledDataset, k: int) -> KnnModel:
    """Store the data for exact neighbor queries; k must not exceed n."""
    if k < 1 or k > train.n:
        raise ValueError(f"k must satisfy 1 <= k <= n (got k={k}, n={train.n})")
    _check_binary(train.y)
    return KnnModel(k=int(k), X=train.X.copy(), y=train.y.copy())


def _train_norms_sq(model: "KnnModel") -> np.ndarray:
    # cached; profitable because label oracles issue many single-row queries
    cached = getattr(model, "_sq_cache", None)
    if cached is None:
        cached = np.sum(model.X * model.X, axis=1)
        object.__setattr__(model, "_sq_cache", cached)
    return cached


def _knn_neighbor_sets(model: KnnModel, Q: np.ndarray) -> np.ndarray:
    """Indices of the k nearest training rows per query, distance ties broken
    by lower training index (stable sort on squared distances)."""
    t_sq = _train_norms_sq(model)
    out = np.empty((len(Q), model.k), dtype=np.int64)
    for a in range(0, len(Q), _CHUNK):
        Qc = Q[a : a + _CHUNK]
        d2 = np.sum(Qc * Qc, axis=1)[:, None] + t_sq[None, :] - 2.0 * (Qc @ model.X.T)
        if model.k == 1:
            # argmin returns the first minimum: the lowest-index tie wins
            out[a : a + _CHUNK, 0] = np.argmin(d2, axis=1)
        else:
            order = np.argsort(d2, axis=1, kind="stable")
            out[a : a + _CHUNK] = order[:, : model.k]
    return out


def knn_predict_eta(model: KnnModel, X) -> np.ndarray:
    """Mean label of the k nearest training points."""
    Q, single = _as_queries(X)
    if Q.shape[1] != model.dim:
        raise ValueError(f"query dimension {Q.shape[1]} != model dimension {model.dim}")
    nbrs = _knn_neighbor_sets(model, Q)
    eta = model.y[nbrs].sum(axis=1) / float(model.k)
    return eta[0] if single else eta


def knn_predict(model: KnnModel, X) -> np.ndarray:
    eta = knn_predict_eta(model, X)
    return (np.asarray(eta) > 0.5).astype(np.int64) if not np.isscalar(eta) else np.int64(eta > 0.5)


# ---------------------------------------------------------------------------
# Nadaraya-Watson
# ---------------------------------------------------------------------------

NW_KERNELS = ("triangular", "epanechnikov", "boxcar")


def _nw_weights(kernel: str, u: np.ndarray) -> np.ndarray:
    # u = ||x - x_i|| / h; all kernels are supported on the unit ball
    if kernel == "triangular":
        return np.maximum(0.0, 1.0 - u)
    if kernel == "epanechnikov":
        return np.maximum(0.0, 1.0 - u * u)
    if kernel == "boxcar":
        return (u < 1.0).astype(float)
    raise ValueError(f"unknown kernel {kernel!r}; choose from {NW_KERNELS}")


@dataclass(frozen=True)
class NwModel:
    """Locally weighted average with a compact-support kernel of bandwidth h.

    Empty neighborhoods (no training point within h) fall back to the label
    of the nearest training point so the classifier stays total.
    """

    bandwidth: float
    kernel: str
    X: np.ndarray
    y: np.ndarray

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def predict_eta(self, X) -> np.ndarray:
        return nw_predict_eta(self, X)

    def predict_labels(self, X) -> np.ndarray:
        return nw_predict(self, X)


def nw_fit(train: LabeledDataset, bandwidth: float, kernel: str = "triangular") -> NwModel:
    if bandwidth <= 0:
        raise ValueError("bandwidth must be > 0")
    if kernel not in NW_KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}; choose from {NW_KERNELS}")
    _check_binary(train.y)
    return NwModel(bandwidth=float(bandwidth), kernel=kernel, X=train.X.copy(), y=train.y.copy())


def nw_predict_eta(model: NwModel, X) -> np.ndarray:
    Q, single = _as_queries(X)
    if Q.shape[1] != model.dim:
        raise ValueError(f"query dimension {Q.shape[1]} != model dimension {model.dim}")
    yf = model.y.astype(float)
    eta = np.empty(len(Q))
    for a in range(0, len(Q), _CHUNK):
        d = np.sqrt(_sq_distances(Q[a : a + _CHUNK], model.X))
        w = _nw_weights(model.kernel, d / model.bandwidth)
        denom = w.sum(axis=1)
        num = w @ yf
        block = np.empty(len(d))
        ok = denom > 0.0
        block[ok] = num[ok] / denom[ok]
        if not np.all(ok):
            # 1-NN fallback; argmin returns the lowest index on ties
            nearest = np.argmin(d[~ok], axis=1)
            block[~ok] = yf[nearest]
        eta[a : a + _CHUNK] = block
    return eta[0] if single else eta


def nw_predict(model: NwModel, X) -> np.ndarray:
    eta = nw_predict_eta(model, X)
    return (np.asarray(eta) > 0.5).astype(np.int64) if not np.isscalar(eta) else np.int64(eta > 0.5)


# ---------------------------------------------------------------------------
# Kernel ridge regression
# ---------------------------------------------------------------------------

KRR_KERNELS = ("linear", "gaussian")


def _krr_kernel(kind: str, gamma: Optional[float], A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return A @ B.T
    if kind == "gaussian":
        return np.exp(-gamma * _sq_distances(A, B))
    raise ValueError(f"unknown kernel {kind!r}; choose from {KRR_KERNELS}")


def median_heuristic_gamma(X: np.ndarray) -> float:
    """gamma = 1 / (2 * median pairwise squared distance)."""
    d2 = _sq_distances(X, X)
    off = d2[np.triu_indices(len(X), k=1)]
    med = float(np.median(off))
    if med <= 0:
        raise NumericError("median pairwise distance is zero; data degenerate")
    return 1.0 / (2.0 * med)


@dataclass(frozen=True)
class KrrModel:
    """Kernel ridge regressor: alpha solves (G + lambda_n I) alpha = y."""

    lambda_n: float
    kernel: str
    gamma: Optional[float]
    alpha: np.ndarray
    X: np.ndarray
    y: np.ndarray

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def predict_eta(self, X) -> np.ndarray:
        return krr_predict_eta(self, X)

    def predict_labels(self, X) -> np.ndarray:
        return krr_predict(self, X)


def krr_fit(
    train: LabeledDataset,
    lambda_n: float,
    kernel: str = "gaussian",
    gamma: Optional[float] = None,
) -> KrrModel:
    """Solve the ridge dual system with a symmetric positive-definite factorization.

    For the gaussian kernel with gamma=None the median heuristic is used.
    Raises IllConditionedError (suggesting a larger lambda_n) when the
    factorization fails, NumericError when the solve residual is poor.
    """
    if lambda_n <= 0:
        raise ValueError("lambda_n must be > 0")
    if kernel not in KRR_KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}; choose from {KRR_KERNELS}")
    _check_binary(train.y)
    if kernel == "gaussian" and gamma is None:
        gamma = median_heuristic_gamma(train.X)
    G = _krr_kernel(kernel, gamma, train.X, train.X)
    if not np.all(np.isfinite(G)):
        raise NumericError("non-finite kernel values in Gram matrix")
    y = train.y.astype(float)
    A = G + lambda_n * np.eye(train.n)
    try:
        cho = scipy.linalg.cho_factor(A, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise IllConditionedError(
            f"dual factorization failed ({exc}); try a larger lambda_n"
        ) from None
    alpha = scipy.linalg.cho_solve(cho, y)
    residual = float(np.linalg.norm(A @ alpha - y))
    if residual > 1e-8 * max(float(np.linalg.norm(y)), 1e-30):
        raise NumericError(f"dual solve residual {residual:.3e} too large; increase lambda_n")
    return KrrModel(
        lambda_n=float(lambda_n),
        kernel=kernel,
        gamma=gamma,
        alpha=alpha,
        X=train.X.copy(),
        y=train.y.copy(),
    )


def krr_predict_eta(model: KrrModel, X) -> np.ndarray:
    Q, single = _as_queries(X)
    if Q.shape[1] != model.dim:
        raise ValueError(f"query dimension {Q.shape[1]} != model dimension {model.dim}")
    K = _krr_kernel(model.kernel, model.gamma, Q, model.X)
    eta = K @ model.alpha
    return eta[0] if single else eta


def krr_predict(model: KrrModel, X) -> np.ndarray:
    eta = krr_predict_eta(model, X)
    return (np.asarray(eta) > 0.5).astype(np.int64) if not np.isscalar(eta) else np.int64(eta > 0.5)


def krr_objective(model: KrrModel, alpha: np.ndarray) -> float:
    """Ridge objective sum_i (y_i - f(x_i))^2 + lambda * ||f||_H^2 at dual
    coefficients `alpha` (f = sum_i alpha_i K(., x_i); ||f||^2 = a' G a)."""
    G = _krr_kernel(model.kernel, model.gamma, model.X, model.X)
    fit = G @ alpha
    resid = model.y.astype(float) - fit
    return float(resid @ resid + model.lambda_n * (alpha @ G @ alpha))
