import struct

import numpy as np
import pytest
import scipy.integrate
import scipy.stats

from boundarylab.datasets import (
    BetaSamplerConfig,
    Box,
    GroundTruthModel,
    LabeledDataset,
    acceptance_probability,
    generate_halfmoon,
    halfmoon_ground_truth,
    load_abalone,
    load_dataset_csv,
    load_mnist_idx,
    sample_beta_concentrated,
    save_dataset_csv,
    stratified_subsample,
)
from boundarylab.errors import FormatError, ParseError, SamplerStalled


# ---------------------------------------------------------------------------
# halfmoon
# ---------------------------------------------------------------------------


def test_halfmoon_split_sizes():
    ds, _ = generate_halfmoon(1800, 0.2, seed=1)
    assert ds.n == 1800
    assert int((ds.y == 0).sum()) == 900
    assert int((ds.y == 1).sum()) == 900


def test_halfmoon_tiny_noise_pure_posterior():
    ds, gt = generate_halfmoon(2, 0.01, seed=0)
    eta = gt.eta(ds.X)
    for val, label in zip(eta, ds.y):
        assert abs(val - label) < 0.01


def test_halfmoon_eta_matches_monte_carlo_oracle():
    sigma = 0.2
    gt = halfmoon_ground_truth(sigma)
    x = np.array([0.0, 1.0])
    rng = np.random.default_rng(42)
    t = rng.uniform(0.0, np.pi, 10**6)
    arc0 = np.column_stack([np.cos(t), np.sin(t)])
    arc1 = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    p0 = np.mean(np.exp(-np.sum((arc0 - x) ** 2, axis=1) / (2 * sigma * sigma)))
    p1 = np.mean(np.exp(-np.sum((arc1 - x) ** 2, axis=1) / (2 * sigma * sigma)))
    eta_mc = p1 / (p0 + p1)
    assert abs(gt.eta(x[None, :])[0] - eta_mc) < 0.005


def test_halfmoon_arc_swap_symmetry():
    gt = halfmoon_ground_truth(0.2)
    X = np.random.default_rng(0).uniform(-1.5, 2.5, (400, 2))
    TX = np.column_stack([1.0 - X[:, 0], 0.5 - X[:, 1]])
    assert np.max(np.abs(gt.eta(TX) - (1.0 - gt.eta(X)))) < 1e-6


def test_halfmoon_deterministic():
    a, _ = generate_halfmoon(64, 0.2, seed=7)
    b, _ = generate_halfmoon(64, 0.2, seed=7)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)


def test_halfmoon_rejects_tiny_n():
    with pytest.raises(ValueError):
        generate_halfmoon(1, 0.2, seed=0)


# ---------------------------------------------------------------------------
# abalone
# ---------------------------------------------------------------------------

ABALONE_ROWS = [
    "M,0.455,0.365,0.095,0.514,0.2245,0.101,0.15,15",
    "F,0.53,0.42,0.135,0.677,0.2565,0.1415,0.21,9",
    "I,0.44,0.365,0.125,0.516,0.2155,0.114,0.155,10",
]


def test_abalone_rows(tmp_path):
    path = tmp_path / "abalone.data"
    path.write_text("\n".join(ABALONE_ROWS) + "\n")
    ds = load_abalone(path)
    assert ds.dim == 8
    assert np.allclose(ds.X[0], [0.0, 0.455, 0.365, 0.095, 0.514, 0.2245, 0.101, 0.15])
    # rings 15: 16.5 > 11; rings 9: 10.5 <= 11; rings 10: 11.5 > 11
    assert list(ds.y) == [1, 0, 1]
    assert ds.X[1, 0] == 0.5 and ds.X[2, 0] == 1.0


def test_abalone_malformed_row_reports_line(tmp_path):
    path = tmp_path / "bad.data"
    path.write_text(ABALONE_ROWS[0] + "\nM,0.1,oops\n")
    with pytest.raises(ParseError) as err:
        load_abalone(path)
    assert err.value.line_number == 2


def test_abalone_missing_file():
    with pytest.raises(OSError):
        load_abalone("/nonexistent/abalone.data")


def test_abalone_deterministic(tmp_path):
    path = tmp_path / "abalone.data"
    path.write_text("\n".join(ABALONE_ROWS) + "\n")
    a = load_abalone(path)
    b = load_abalone(path)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)


# ---------------------------------------------------------------------------
# MNIST IDX
# ---------------------------------------------------------------------------


def write_idx_pair(tmp_path, images, labels, image_magic=0x803, label_magic=0x801):
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    img_path = tmp_path / "images-idx3-ubyte"
    lab_path = tmp_path / "labels-idx1-ubyte"
    n, rows, cols = images.shape
    with open(img_path, "wb") as fh:
        fh.write(struct.pack(">iiii", image_magic, n, rows, cols))
        fh.write(images.tobytes())
    with open(lab_path, "wb") as fh:
        fh.write(struct.pack(">ii", label_magic, len(labels)))
        fh.write(labels.tobytes())
    return img_path, lab_path


def test_idx_hand_crafted_pair(tmp_path):
    images = np.array(
        [[[0, 255], [128, 0]], [[255, 255], [0, 0]]], dtype=np.uint8
    )
    img, lab = write_idx_pair(tmp_path, images, [3, 5])
    ds = load_mnist_idx(img, lab)
    assert ds.n == 2 and ds.dim == 4
    assert ds.X[0, 1] == 1.0  # byte 255 -> 1.0
    assert ds.X[0, 2] == 128 / 255.0
    assert list(ds.y) == [3, 5]


def test_idx_magic_mismatch(tmp_path):
    images = np.zeros((1, 2, 2), dtype=np.uint8)
    img, lab = write_idx_pair(tmp_path, images, [0], image_magic=0x123)
    with pytest.raises(FormatError):
        load_mnist_idx(img, lab)


def test_idx_count_mismatch(tmp_path):
    images = np.zeros((2, 2, 2), dtype=np.uint8)
    img, lab = write_idx_pair(tmp_path, images, [0, 1, 2])
    with pytest.raises(FormatError):
        load_mnist_idx(img, lab)


def test_idx_keep_digits_remap(tmp_path):
    images = np.zeros((4, 2, 2), dtype=np.uint8)
    img, lab = write_idx_pair(tmp_path, images, [1, 7, 7, 2])
    ds = load_mnist_idx(img, lab, keep_digits={1, 7})
    assert ds.n == 3
    assert list(ds.y) == [0, 1, 1]
    assert ds.name == "mnist1v7"


def test_stratified_subsample_deterministic(tmp_path):
    images = np.zeros((10, 2, 2), dtype=np.uint8)
    img, lab = write_idx_pair(tmp_path, images, [0, 1, 0, 1, 0, 1, 0, 1, 0, 1])
    ds = load_mnist_idx(img, lab)
    a, rows_a = stratified_subsample(ds, {0: 2, 1: 2}, seed=3)
    b, rows_b = stratified_subsample(ds, {0: 2, 1: 2}, seed=3)
    assert np.array_equal(rows_a, rows_b)
    assert list(a.y) == [0, 0, 1, 1]


# ---------------------------------------------------------------------------
# boundary-concentrated sampler
# ---------------------------------------------------------------------------


def line_ground_truth():
    """1-D synthetic posterior eta(x) = x on [0, 1]."""
    return GroundTruthModel(
        eta=lambda X: np.atleast_2d(X)[:, 0], support=Box(np.array([0.0]), np.array([1.0]))
    )


def test_beta_zero_accepts_all_and_uniform():
    gt = halfmoon_ground_truth(0.2)
    cfg = BetaSamplerConfig(beta=0.0, seed=5)
    pts = sample_beta_concentrated(gt, cfg, 4000)
    lo, hi = gt.support.lo, gt.support.hi
    for axis in range(2):
        u = (pts[:, axis] - lo[axis]) / (hi[axis] - lo[axis])
        assert scipy.stats.kstest(u, "uniform").pvalue > 0.01


def test_beta_two_concentrates_near_boundary():
    gt = halfmoon_ground_truth(0.2)
    n = 2000
    pts0 = sample_beta_concentrated(gt, BetaSamplerConfig(beta=0.0, seed=11), n)
    pts2 = sample_beta_concentrated(
        gt, BetaSamplerConfig(beta=2.0, density_floor=0.05, seed=11), n
    )
    frac0 = float(np.mean(np.abs(gt.eta(pts0) - 0.5) < 0.1))
    frac2 = float(np.mean(np.abs(gt.eta(pts2) - 0.5) < 0.1))
    assert frac2 > frac0


def test_clamped_margin_accepts_with_probability_one():
    gt = line_ground_truth()
    cfg = BetaSamplerConfig(beta=2.0, density_floor=0.05, seed=0)
    X = np.array([[0.5], [0.51], [0.46]])  # |eta - 1/2| <= floor everywhere
    assert np.all(acceptance_probability(gt, cfg, X) == 1.0)


def test_sampler_decile_histogram_matches_density():
    # empirical mass per decile bin proportional to the clamped inverse margin
    gt = line_ground_truth()
    beta, floor = 1.0, 0.05
    pts = sample_beta_concentrated(
        gt, BetaSamplerConfig(beta=beta, density_floor=floor, seed=123), 100_000
    )[:, 0]
    density = lambda x: max(abs(x - 0.5), floor) ** -beta
    total, _ = scipy.integrate.quad(density, 0.0, 1.0, points=[0.45, 0.5, 0.55])
    edges = np.linspace(0.0, 1.0, 11)
    counts, _ = np.histogram(pts, bins=edges)
    for i in range(10):
        expected, _ = scipy.integrate.quad(
            density, edges[i], edges[i + 1], points=[0.45, 0.5, 0.55]
        )
        expected /= total
        empirical = counts[i] / len(pts)
        assert abs(empirical - expected) / expected < 0.05


def test_sampler_deterministic():
    gt = halfmoon_ground_truth(0.2)
    cfg = BetaSamplerConfig(beta=1.0, density_floor=0.05, seed=9)
    a = sample_beta_concentrated(gt, cfg, 500)
    b = sample_beta_concentrated(gt, cfg, 500)
    assert np.array_equal(a, b)


def test_sampler_stall_reports_acceptance_rate():
    gt = line_ground_truth()
    cfg = BetaSamplerConfig(beta=8.0, density_floor=1e-3, seed=0, max_rejections=65536)
    with pytest.raises(SamplerStalled) as err:
        sample_beta_concentrated(gt, cfg, 60_000)
    assert 0.0 <= err.value.acceptance_rate < 1.0


def test_sampler_config_validation():
    with pytest.raises(ValueError):
        BetaSamplerConfig(beta=-1.0)
    with pytest.raises(ValueError):
        BetaSamplerConfig(beta=1.0, density_floor=0.7)


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------


def test_dataset_csv_round_trip(tmp_path):
    ds, _ = generate_halfmoon(50, 0.2, seed=2)
    path = tmp_path / "hm.csv"
    save_dataset_csv(ds, path)
    back = load_dataset_csv(path)
    assert np.array_equal(back.X, ds.X)
    assert np.array_equal(back.y, ds.y)


def test_dataset_csv_byte_identical(tmp_path):
    ds, _ = generate_halfmoon(20, 0.2, seed=2)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    save_dataset_csv(ds, p1)
    save_dataset_csv(ds, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_labeled_dataset_validation():
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((3, 2)), np.zeros(2, dtype=int))
    with pytest.raises(ValueError):
        LabeledDataset(np.array([[np.inf, 0.0]]), np.zeros(1, dtype=int))
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((2, 2)), np.zeros(2, dtype=int), role="pool")
