"""Dataset generation, ingestion, and boundary-concentrated sampling.

Synthetic problems carry an analytic posterior eta(x) = P(y=1 | x) so that
Bayes labels, margins |eta - 1/2|, and concentrated sampling densities can
all be evaluated exactly.  Real datasets (abalone CSV, MNIST IDX) are loaded
into the same LabeledDataset container.
"""

import csv
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .errors import FormatError, ParseError, SamplerStalled

ROLES = ("train", "adversary", "test")


@dataclass(frozen=True)
class Box:
    """Axis-aligned bounding box, lo <= x <= hi coordinate-wise."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if not np.all(lo < hi):
            raise ValueError("box must have positive extent on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        lo.setflags(write=False)
        hi.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.all((X >= self.lo) & (X <= self.hi), axis=1)

    def sample_uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u = rng.random((n, self.dim))
        return self.lo + u * (self.hi - self.lo)


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix plus integer labels and a split-role tag."""

    X: np.ndarray
    y: np.ndarray
    role: str = "train"
    name: str = ""

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=float)
        y = np.ascontiguousarray(self.y, dtype=np.int64)
        if X.ndim != 2:
            raise ValueError("X must be a 2-D feature matrix")
        if y.ndim != 1 or len(y) != len(X):
            raise ValueError("labels must be one per row of X")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        if len(y) and y.min() < 0:
            raise ValueError("labels must be non-negative class indices")
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def with_role(self, role: str) -> "LabeledDataset":
        return LabeledDataset(self.X, self.y, role=role, name=self.name)


@dataclass(frozen=True, eq=False)
class GroundTruthModel:
    """Analytic posterior for a synthetic binary problem.

    `eta` maps an (m, d) array to the (m,) vector of P(y=1 | x).  The Bayes
    classifier is the strict-threshold rule eta(x) > 1/2.  Hashed by identity
    so grid evaluations can be memoised.
    """

    eta: Callable[[np.ndarray], np.ndarray]
    support: Box
    class_count: int = 2

    def bayes_labels(self, X: np.ndarray) -> np.ndarray:
        return (self.eta(np.atleast_2d(X)) > 0.5).astype(np.int64)


@dataclass(frozen=True)
class BetaSamplerConfig:
    """Parameters of the boundary-concentrated rejection sampler.

    The target density is proportional to max(|eta(x) - 1/2|, density_floor)
    raised to -beta; the floor keeps it bounded near the boundary.
    """

    beta: float
    density_floor: float = 1e-3
    max_rejections: int = 20_000_000
    seed: int = 0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if not 0 < self.density_floor < 0.5:
            raise ValueError("density_floor must lie in (0, 0.5)")
        if self.max_rejections < 1:
            raise ValueError("max_rejections must be positive")


# ---------------------------------------------------------------------------
# Halfmoon
# ---------------------------------------------------------------------------

_ARC_POINTS = 360


def _halfmoon_arcs(n_points: int = _ARC_POINTS):
    """Noise-free arc centers: upper arc is class 0, shifted lower arc class 1."""
    t = np.linspace(0.0, np.pi, n_points)
    arc0 = np.column_stack([np.cos(t), np.sin(t)])
    arc1 = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    return arc0, arc1


def halfmoon_ground_truth(noise_sigma: float, arc_points: int = _ARC_POINTS) -> GroundTruthModel:
    """Posterior for the two-moons model with isotropic noise `noise_sigma`.

    Class-conditional densities are discretised as equal-weight Gaussian
    mixtures over `arc_points` evenly spaced centers per arc, so eta is a
    deterministic, exactly reproducible function.
    """
    if noise_sigma <= 0:
        raise ValueError("noise_sigma must be > 0")
    arc0, arc1 = _halfmoon_arcs(arc_points)
    pad = 3.0 * noise_sigma
    lo = np.array([-1.0 - pad, -0.5 - pad])
    hi = np.array([2.0 + pad, 1.0 + pad])
    centers = np.vstack([arc0, arc1])
    c_sq = np.sum(centers * centers, axis=1)
    split = len(arc0)

    def eta(X: np.ndarray, _c=centers, _csq=c_sq, _s=noise_sigma, _k=split) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(len(X))
        # chunked to bound the (m, centers) intermediate
        for a in range(0, len(X), 8192):
            chunk = X[a : a + 8192]
            d2 = np.sum(chunk * chunk, axis=1)[:, None] + _csq[None, :] - 2.0 * (chunk @ _c.T)
            e = d2 * (-1.0 / (2.0 * _s * _s))
            e -= e.max(axis=1)[:, None]
            np.exp(e, out=e)
            s0 = e[:, :_k].sum(axis=1)
            s1 = e[:, _k:].sum(axis=1)
            out[a : a + 8192] = s1 / (s0 + s1)
        return out

    return GroundTruthModel(eta=eta, support=Box(lo, hi))


def generate_halfmoon(
    n: int, noise_sigma: float, seed: int, role: str = "train"
) -> tuple[LabeledDataset, GroundTruthModel]:
    """Draw `n` two-moons points (n//2 per class) plus the matching posterior.

    Each point is a uniformly random arc angle plus N(0, noise_sigma^2 I)
    noise; labels are the generating arc.  Deterministic for a fixed seed.
    """
    if n < 2:
        raise ValueError("need n >= 2 to place both classes")
    if noise_sigma <= 0:
        raise ValueError("noise_sigma must be > 0")
    rng = np.random.default_rng(seed)
    n0 = n // 2
    n1 = n - n0
    t0 = rng.uniform(0.0, np.pi, n0)
    t1 = rng.uniform(0.0, np.pi, n1)
    pts0 = np.column_stack([np.cos(t0), np.sin(t0)])
    pts1 = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    X = np.vstack([pts0, pts1]) + rng.normal(0.0, noise_sigma, (n, 2))
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    perm = rng.permutation(n)
    ds = LabeledDataset(X[perm], y[perm], role=role, name="halfmoon")
    return ds, halfmoon_ground_truth(noise_sigma)


# ---------------------------------------------------------------------------
# Abalone
# ---------------------------------------------------------------------------

_SEX_CODE = {"M": 0.0, "F": 0.5, "I": 1.0}


def load_abalone(path, role: str = "train") -> LabeledDataset:
    """Load the UCI abalone CSV as a binary age-threshold problem.

    Features: sex coded M->0.0, F->0.5, I->1.0 followed by the seven physical
    measurements.  Label is 1 when rings + 1.5 > 11 (age above eleven).
    """
    rows = []
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 9:
                raise ParseError(f"expected 9 fields, got {len(parts)}", lineno)
            sex = parts[0].strip()
            if sex not in _SEX_CODE:
                raise ParseError(f"unknown sex code {sex!r}", lineno)
            try:
                meas = [float(v) for v in parts[1:8]]
                rings = float(parts[8])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            rows.append([_SEX_CODE[sex]] + meas)
            labels.append(1 if rings + 1.5 > 11.0 else 0)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    return LabeledDataset(np.array(rows), np.array(labels), role=role, name="abalone")


# ---------------------------------------------------------------------------
# MNIST IDX
# ---------------------------------------------------------------------------

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


def _read_idx_images(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16:
            raise FormatError(f"{path}: truncated IDX image header")
        magic, count, rows, cols = struct.unpack(">iiii", header)
        if magic != IDX_IMAGE_MAGIC:
            raise FormatError(f"{path}: bad image magic 0x{magic:08x}")
        payload = fh.read(count * rows * cols)
        if len(payload) != count * rows * cols:
            raise FormatError(f"{path}: truncated IDX image payload")
        return np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)


def _read_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) != 8:
            raise FormatError(f"{path}: truncated IDX label header")
        magic, count = struct.unpack(">ii", header)
        if magic != IDX_LABEL_MAGIC:
            raise FormatError(f"{path}: bad label magic 0x{magic:08x}")
        payload = fh.read(count)
        if len(payload) != count:
            raise FormatError(f"{path}: truncated IDX label payload")
        return np.frombuffer(payload, dtype=np.uint8)


def load_mnist_idx(
    image_path,
    label_path,
    keep_digits: Optional[Iterable[int]] = None,
    role: str = "train",
) -> LabeledDataset:
    """Load an MNIST-style IDX image/label pair; pixels scaled to [0, 1].

    With `keep_digits` given, only those digits are retained and labels are
    remapped to 0..len(keep_digits)-1 in sorted digit order (so {1, 7} becomes
    the binary problem 1->0, 7->1).
    """
    images = _read_idx_images(image_path)
    labels = _read_idx_labels(label_path)
    if len(images) != len(labels):
        raise FormatError(
            f"image/label count mismatch: {len(images)} images vs {len(labels)} labels"
        )
    X = images.astype(float) / 255.0
    y = labels.astype(np.int64)
    name = "mnist"
    if keep_digits is not None:
        digits = sorted(set(int(d) for d in keep_digits))
        mask = np.isin(y, digits)
        X = X[mask]
        remap = {d: i for i, d in enumerate(digits)}
        y = np.array([remap[int(v)] for v in y[mask]], dtype=np.int64)
        name = "mnist" + "v".join(str(d) for d in digits)
    return LabeledDataset(X, y, role=role, name=name)


def stratified_subsample(
    ds: LabeledDataset, per_class: dict[int, int], seed: int, role: Optional[str] = None
) -> tuple[LabeledDataset, np.ndarray]:
    """Deterministic stratified subsample: per class, a seeded permutation of
    that class's indices is taken first-k.  Returns the subset and the row
    indices used (so disjoint follow-up splits can exclude them)."""
    rng = np.random.default_rng(seed)
    chosen = []
    for cls in sorted(per_class):
        idx = np.flatnonzero(ds.y == cls)
        if len(idx) < per_class[cls]:
            raise ValueError(f"class {cls}: asked {per_class[cls]} of {len(idx)} rows")
        perm = rng.permutation(len(idx))
        chosen.append(idx[perm[: per_class[cls]]])
    rows = np.concatenate(chosen)
    sub = LabeledDataset(ds.X[rows], ds.y[rows], role=role or ds.role, name=ds.name)
    return sub, rows


# ---------------------------------------------------------------------------
# Boundary-concentrated sampling
# ---------------------------------------------------------------------------

_PROPOSAL_BATCH = 16384


def acceptance_probability(gt: GroundTruthModel, cfg: BetaSamplerConfig, X: np.ndarray) -> np.ndarray:
    """Rejection-acceptance probability (clamped margin / floor) ** -beta."""
    margin = np.abs(gt.eta(np.atleast_2d(X)) - 0.5)
    clamped = np.maximum(margin, cfg.density_floor)
    return (cfg.density_floor / clamped) ** cfg.beta


def sample_beta_concentrated(gt: GroundTruthModel, cfg: BetaSamplerConfig, n: int) -> np.ndarray:
    """Draw `n` i.i.d. points with density proportional to clamped-margin^-beta.

    Proposals are uniform on the support box and accepted with probability
    (floor / max(|eta - 1/2|, floor)) ** beta, which equals 1 inside the
    clamp region and reduces to accept-all at beta = 0.  Raises
    SamplerStalled when the proposal budget is exhausted.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = np.random.default_rng(cfg.seed)
    out = np.empty((n, gt.support.dim))
    got = 0
    proposed = 0
    while got < n:
        if proposed >= cfg.max_rejections:
            rate = got / max(proposed, 1)
            raise SamplerStalled(
                f"accepted {got}/{n} after {proposed} proposals", rate
            )
        batch = gt.support.sample_uniform(rng, _PROPOSAL_BATCH)
        accept = rng.random(_PROPOSAL_BATCH) < acceptance_probability(gt, cfg, batch)
        proposed += _PROPOSAL_BATCH
        kept = batch[accept]
        take = min(len(kept), n - got)
        out[got : got + take] = kept[:take]
        got += take
    return out


def bernoulli_labels(gt: GroundTruthModel, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Labels drawn y ~ Bernoulli(eta(x)), the generative conditional model."""
    return (rng.random(len(X)) < gt.eta(X)).astype(np.int64)


# ---------------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------------

CSV_SCHEMA_LINE = "# schema=v1"


def save_dataset_csv(ds: LabeledDataset, path) -> None:
    """Write `x0..x{d-1},label` rows; floats use repr so reloads are bit-exact."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(CSV_SCHEMA_LINE + "\n")
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(ds.dim)] + ["label"])
        for row, label in zip(ds.X, ds.y):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def load_dataset_csv(path, role: str = "train", name: str = "") -> LabeledDataset:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or header[-1] != "label" or header[0] != "x0":
        raise FormatError(f"{path}: expected header x0..x{{d-1}},label")
    d = len(header) - 1
    X, y = [], []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != d + 1:
            raise ParseError(f"expected {d + 1} fields, got {len(row)}", lineno)
        try:
            X.append([float(v) for v in row[:d]])
            y.append(int(row[d]))
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    return LabeledDataset(np.array(X), np.array(y), role=role, name=name)
