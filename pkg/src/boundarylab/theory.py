"""Numerical evaluation of the correctness-set guarantees.

Provides measured correct-classification regions on grids, the
probability-mass radius r_p, evaluators for the three non-asymptotic bounds
(as printed, with +inf encoding vacuity), a Monte-Carlo check of the k-NN
sup-error inequality, and the concentration-sweep experiment that measures
how the correct region responds to boundary-concentrated training sets.
"""

import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.stats

from .classifiers import knn_fit, nw_fit
from .datasets import (
    BetaSamplerConfig,
    Box,
    GroundTruthModel,
    LabeledDataset,
    bernoulli_labels,
    sample_beta_concentrated,
)
from .seeds import rng_for, split_seed

# ---------------------------------------------------------------------------
# Grids and measured correctness regions
# ---------------------------------------------------------------------------


def uniform_grid(box: Box, resolution: int) -> np.ndarray:
    """resolution^d points on a regular grid spanning the box (d <= 3)."""
    if box.dim > 3:
        raise ValueError("grids are supported for d <= 3; use test-set accuracy instead")
    axes = [np.linspace(box.lo[i], box.hi[i], resolution) for i in range(box.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


@functools.lru_cache(maxsize=8)
def _grid_truth(gt: GroundTruthModel, resolution: int):
    grid = uniform_grid(gt.support, resolution)
    eta = gt.eta(grid)
    for arr in (grid, eta):
        arr.setflags(write=False)
    return grid, eta


@dataclass(frozen=True)
class RegionReport:
    """Grid evaluation of where a classifier agrees with the Bayes rule.

    correct_fraction is the plain mean of the correct flags; correct_measure
    scales it by the support volume, i.e. the estimated area of the region.
    """

    grid: np.ndarray
    eta: np.ndarray
    margin: np.ndarray
    labels: np.ndarray
    bayes: np.ndarray
    correct: np.ndarray
    correct_fraction: float
    correct_measure: float


def correctness_region(clf, gt: GroundTruthModel, grid_resolution: int = 200) -> RegionReport:
    """Classify a uniform grid over the support with `clf` and with the Bayes
    rule eta > 1/2; report agreement statistics."""
    grid, eta = _grid_truth(gt, grid_resolution)
    bayes = (eta > 0.5).astype(np.int64)
    labels = np.asarray(clf.predict_labels(grid), dtype=np.int64)
    correct = labels == bayes
    frac = float(np.mean(correct))
    return RegionReport(
        grid=grid,
        eta=eta,
        margin=np.abs(eta - 0.5),
        labels=labels,
        bayes=bayes,
        correct=correct,
        correct_fraction=frac,
        correct_measure=frac * gt.support.volume,
    )


# ---------------------------------------------------------------------------
# The probability-mass radius r_p
# ---------------------------------------------------------------------------


def _circle_box_area(center: np.ndarray, r: float, box: Box) -> float:
    """Exact area of disk(center, r) intersected with a 2-D box."""

    def F(x):
        # antiderivative of sqrt(r^2 - X^2) from -r to x, x clipped to [-r, r]
        x = min(max(x, -r), r)
        return 0.5 * (x * math.sqrt(max(r * r - x * x, 0.0)) + r * r * math.asin(x / r)) + \
            0.25 * math.pi * r * r

    def quadrant(x, y):
        # area of {X <= x, Y <= y} inside the disk (disk-centered coordinates)
        if x <= -r or y <= -r:
            return 0.0
        if y >= r:
            return 2.0 * F(x)
        s = math.sqrt(max(r * r - y * y, 0.0))
        u = min(x, r)
        if y >= 0.0:
            area = 0.0
            if u > -s:
                a, b = -s, min(u, s)
                area += y * (b - a) + F(b) - F(a)
                area += 2.0 * F(-s)  # left cap, X < -s
                if u > s:
                    area += 2.0 * (F(u) - F(s))
            else:
                area += 2.0 * F(u)
            return area
        # y < 0: only the slab |X| <= s contributes, with height y + g(X) >= 0
        if u <= -s:
            return 0.0
        a, b = -s, min(u, s)
        return y * (b - a) + F(b) - F(a)

    x1, y1 = box.lo - center
    x2, y2 = box.hi - center
    return quadrant(x2, y2) - quadrant(x1, y2) - quadrant(x2, y1) + quadrant(x1, y1)


def _ball_box_measure(center: np.ndarray, r: float, box: Box) -> float:
    """Uniform-on-box probability mass of the ball of radius r around center."""
    if box.dim == 1:
        lo = max(float(box.lo[0]), float(center[0]) - r)
        hi = min(float(box.hi[0]), float(center[0]) + r)
        return max(hi - lo, 0.0) / box.volume
    if box.dim == 2:
        return _circle_box_area(center, r, box) / box.volume
    raise ValueError("analytic ball measure implemented for d <= 2")


def radius_rp(samples, x0: np.ndarray, p: float) -> float:
    """Smallest radius whose ball around x0 carries probability mass >= p.

    `samples` is either an (N, d) array (empirical: the ceil(p*N)-th smallest
    distance) or a Box (uniform density: closed-form ball-measure bisection).
    """
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    x0 = np.asarray(x0, dtype=float)
    if isinstance(samples, Box):
        corners = np.array(
            [[samples.lo[i], samples.hi[i]] for i in range(samples.dim)]
        )
        far = np.sqrt(np.max(np.sum(
            (np.stack(np.meshgrid(*corners, indexing="ij"), axis=-1).reshape(-1, samples.dim)
             - x0) ** 2, axis=1)))
        if p == 1.0:
            return float(far)
        lo, hi = 0.0, float(far)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if _ball_box_measure(x0, mid, samples) >= p:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-13 * max(far, 1.0):
                break
        return hi
    samples = np.asarray(samples, dtype=float)
    d = np.linalg.norm(samples - x0, axis=1)
    idx = max(int(np.ceil(p * len(d))) - 1, 0)
    return float(np.partition(d, idx)[idx])


def radius_rp_grid(samples: np.ndarray, X: np.ndarray, p: float) -> np.ndarray:
    """Empirical r_p for many query points at once (chunked full scan)."""
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    samples = np.asarray(samples, dtype=float)
    X = np.atleast_2d(X)
    idx = max(int(np.ceil(p * len(samples))) - 1, 0)
    out = np.empty(len(X))
    chunk = max(1, int(2e7 // max(len(samples), 1)))
    for a in range(0, len(X), chunk):
        q = X[a : a + chunk]
        d2 = (
            np.sum(q * q, axis=1)[:, None]
            + np.sum(samples * samples, axis=1)[None, :]
            - 2.0 * q @ samples.T
        )
        np.maximum(d2, 0.0, out=d2)
        out[a : a + chunk] = np.sqrt(np.partition(d2, idx, axis=1)[:, idx])
    return out


# ---------------------------------------------------------------------------
# Bound evaluators (as printed)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Thm1Params:
    """k-NN correctness-set constants: sample size, neighbors, dimension,
    failure probability, Holder smoothness, and the free constant inside the
    mass-shift term delta_p."""

    n: int
    k: int
    d: int
    delta: float
    holder_alpha: float = 1.0
    holder_L: float = 1.0
    c_dp: float = 1.0

    def __post_init__(self):
        if not 0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 1/2)")
        if not 1 <= self.k <= self.n:
            raise ValueError("need 1 <= k <= n")
        if not 0 < self.holder_alpha <= 1:
            raise ValueError("holder_alpha must lie in (0, 1]")


def thm1_constants(params: Thm1Params) -> tuple[float, float]:
    """(C0, delta_p) evaluated exactly as printed.

    C0 = sqrt((2 log 2 + log(n^{d+1} + 1) - log delta) / (2k)); the log term
    is computed as (d+1) log n + log1p(n^-(d+1)) so huge d cannot overflow.
    delta_p = (c_dp / n) (d log n + log(1/delta) + sqrt(k (d log n + log(1/delta)))).
    """
    n, k, d = params.n, params.k, params.d
    log_pow = (d + 1) * math.log(n)
    log_term = log_pow + math.log1p(math.exp(-log_pow)) if log_pow < 700 else log_pow
    c0 = math.sqrt((2.0 * math.log(2.0) + log_term - math.log(params.delta)) / (2.0 * k))
    base = d * math.log(n) + math.log(1.0 / params.delta)
    delta_p = params.c_dp / n * (base + math.sqrt(k * base))
    return c0, delta_p


@dataclass(frozen=True)
class Thm1Indicator:
    in_set: bool
    radius_defined: bool
    margin: float
    radius: float
    threshold: float


def thm1_correct_set_indicator(
    gt: GroundTruthModel, params: Thm1Params, samples: np.ndarray, x: np.ndarray
) -> Thm1Indicator:
    """Membership of x in the predicted correct set
    |eta(x) - 1/2| - L * r_{k/n + delta_p}(x)^alpha > C0, with r estimated
    from training-distribution samples.  When k/n + delta_p > 1 the radius is
    undefined and the indicator reports False with radius_defined=False."""
    c0, delta_p = thm1_constants(params)
    p = params.k / params.n + delta_p
    margin = float(np.abs(gt.eta(np.atleast_2d(x))[0] - 0.5))
    if p > 1.0:
        return Thm1Indicator(False, False, margin, math.nan, c0)
    r = radius_rp(samples, x, p)
    lhs = margin - params.holder_L * r**params.holder_alpha
    return Thm1Indicator(bool(lhs > c0), True, margin, r, c0)


def thm1_correct_set_mask(
    gt: GroundTruthModel, params: Thm1Params, samples: np.ndarray, X: np.ndarray
) -> np.ndarray:
    """Vectorised indicator over many points (all radii from one sample set)."""
    c0, delta_p = thm1_constants(params)
    p = params.k / params.n + delta_p
    X = np.atleast_2d(X)
    if p > 1.0:
        return np.zeros(len(X), dtype=bool)
    margin = np.abs(gt.eta(X) - 0.5)
    r = radius_rp_grid(samples, X, p)
    return (margin - params.holder_L * r**params.holder_alpha) > c0


@dataclass(frozen=True)
class Thm2Params:
    n: int
    h: float
    d: int
    lipschitz_L: float = 1.0
    C: float = 1.0
    t: Optional[float] = None  # None means log^2 n

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("h must be > 0")

    @property
    def t_value(self) -> float:
        return self.t if self.t is not None else math.log(self.n) ** 2


@dataclass(frozen=True)
class Thm3Params:
    n: int
    h: float
    d: int
    lambda_n: float
    lipschitz_L: float = 1.0
    C: float = 1.0
    t: Optional[float] = None

    def __post_init__(self):
        if self.h <= 0 or self.lambda_n <= 0:
            raise ValueError("h and lambda_n must be > 0")

    @property
    def t_value(self) -> float:
        return self.t if self.t is not None else math.log(self.n) ** 2


def thm2_bound(params: Thm2Params, mu_at_x: float) -> float:
    """h L + 2t / (C n h^d mu(x) - t); +inf when the denominator is <= 0."""
    t = params.t_value
    denom = params.C * params.n * params.h**params.d * mu_at_x - t
    if denom <= 0:
        return math.inf
    return params.h * params.lipschitz_L + 2.0 * t / denom


def thm3_bound(params: Thm3Params, mu_at_x: float) -> float:
    """2t / (C n h^d mu(x) - t) + L h + C sqrt(n / lambda_n) / (h (C n h^d - t));
    +inf when either denominator is <= 0."""
    t = params.t_value
    nhd = params.C * params.n * params.h**params.d
    denom_mu = nhd * mu_at_x - t
    denom = nhd - t
    if denom_mu <= 0 or denom <= 0:
        return math.inf
    return (
        2.0 * t / denom_mu
        + params.lipschitz_L * params.h
        + params.C / (params.h * denom) * math.sqrt(params.n / params.lambda_n)
    )


# ---------------------------------------------------------------------------
# Monte-Carlo verification of the k-NN sup-error inequality
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KnnBoundReport:
    trials: int
    violations: int
    violation_fraction: float
    sup_errors: np.ndarray  # per trial
    worst_slack: float  # min over trials of min_x (rhs - |err|); > 0 means held


def verify_knn_bound(
    gt: GroundTruthModel,
    beta: float,
    n: int,
    k: int,
    delta: float,
    trials: int,
    density_floor: float = 0.05,
    grid_resolution: int = 50,
    holder_alpha: float = 1.0,
    holder_L: float = 1.0,
    c_dp: float = 1.0,
    reference_samples: int = 50_000,
    seed: int = 0,
) -> KnnBoundReport:
    """Fraction of Monte-Carlo training draws from the concentrated density
    whose grid sup of |eta_hat - eta| breaches the pointwise bound
    L r_{k/n+delta_p}(x)^alpha + C0."""
    params = Thm1Params(n=n, k=k, d=gt.support.dim, delta=delta,
                        holder_alpha=holder_alpha, holder_L=holder_L, c_dp=c_dp)
    c0, delta_p = thm1_constants(params)
    p = k / n + delta_p
    if p > 1.0:
        raise ValueError(f"k/n + delta_p = {p:.3f} > 1: radius undefined")
    grid, eta = _grid_truth(gt, grid_resolution)
    ref = sample_beta_concentrated(
        gt, BetaSamplerConfig(beta=beta, density_floor=density_floor,
                              seed=split_seed(seed, 0)), reference_samples
    )
    rhs = holder_L * radius_rp_grid(ref, grid, p) ** holder_alpha + c0
    sups = np.empty(trials)
    violations = 0
    worst = math.inf
    for trial in range(trials):
        cfg = BetaSamplerConfig(beta=beta, density_floor=density_floor,
                                seed=split_seed(seed, 1 + 2 * trial))
        X = sample_beta_concentrated(gt, cfg, n)
        y = bernoulli_labels(gt, X, rng_for(seed, 2 + 2 * trial))
        model = knn_fit(LabeledDataset(X, y), k)
        err = np.abs(model.predict_eta(grid) - eta)
        sups[trial] = float(err.max())
        slack = float(np.min(rhs - err))
        worst = min(worst, slack)
        if np.any(err >= rhs):
            violations += 1
    return KnnBoundReport(
        trials=trials,
        violations=violations,
        violation_fraction=violations / trials,
        sup_errors=sups,
        worst_slack=worst,
    )


# ---------------------------------------------------------------------------
# Concentration sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BetaTrendReport:
    beta_list: tuple
    fractions: np.ndarray  # (len(beta_list), seeds)
    means: np.ndarray
    spearman: Optional[float]  # None for fewer than two beta levels


def beta_monotonicity_experiment(
    gt: GroundTruthModel,
    estimator: str,
    estimator_param: float,
    beta_list,
    n: int,
    seeds: int,
    density_floor: float = 0.05,
    grid_resolution: int = 200,
    base_seed: int = 0,
) -> BetaTrendReport:
    """For each (beta, seed): draw a training set from the concentrated
    density, label it y ~ Bernoulli(eta), fit the estimator, and measure the
    correct-region fraction.  Reports per-beta means and the Spearman
    correlation between beta and those means."""
    beta_list = tuple(float(b) for b in beta_list)
    if not beta_list:
        raise ValueError("beta_list must be non-empty")
    grid, eta = _grid_truth(gt, grid_resolution)
    bayes = (eta > 0.5).astype(np.int64)
    fractions = np.empty((len(beta_list), seeds))
    for bi, beta in enumerate(beta_list):
        for s in range(seeds):
            task = split_seed(base_seed, bi * seeds + s)
            cfg = BetaSamplerConfig(beta=beta, density_floor=density_floor,
                                    seed=split_seed(task, 0))
            X = sample_beta_concentrated(gt, cfg, n)
            y = bernoulli_labels(gt, X, rng_for(task, 1))
            ds = LabeledDataset(X, y)
            if estimator == "knn":
                model = knn_fit(ds, int(estimator_param))
            elif estimator == "nw":
                model = nw_fit(ds, float(estimator_param))
            else:
                raise ValueError("estimator must be 'knn' or 'nw'")
            labels = model.predict_labels(grid)
            fractions[bi, s] = float(np.mean(labels == bayes))
    means = fractions.mean(axis=1)
    spearman = None
    if len(beta_list) >= 2:
        rho = scipy.stats.spearmanr(np.asarray(beta_list), means).statistic
        spearman = float(rho)
    return BetaTrendReport(
        beta_list=beta_list, fractions=fractions, means=means, spearman=spearman
    )
