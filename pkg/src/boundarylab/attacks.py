"""Adversarial example generators.

White-box attacks against k-NN victims (direct, region-based, kernel
substitute), a label-only black-box attack (ray search + bisection), and the
gradient-based family (FGSM, PGD, DeepFool, C&W) against any model exposing
`input_gradient` / `logit_jacobian` / `logits`.

Every attack returns an AdversarialExample whose stored norms are recomputed
from (original, perturbed) and whose success flag means the victim label
changed.  Attacks are pure given (model, config, seed).
"""

import csv
from dataclasses import dataclass

import numpy as np

from .classifiers import KnnModel, knn_predict
from .errors import AttackInfeasible, NumericError

ATTACK_METHODS = (
    "direct",
    "rba_approx",
    "rba_exact",
    "kernel_sub",
    "bbox_opt",
    "fgsm",
    "pgd",
    "deepfool",
    "cw",
)


@dataclass(frozen=True)
class AdversarialExample:
    original: np.ndarray
    perturbed: np.ndarray
    perturbation_l2: float
    perturbation_linf: float
    attack: str
    success: bool
    label_original: int
    label_perturbed: int
    queries_used: int = 0

    def __post_init__(self):
        diff = np.asarray(self.perturbed, dtype=float) - np.asarray(self.original, dtype=float)
        l2 = float(np.linalg.norm(diff))
        linf = float(np.max(np.abs(diff))) if diff.size else 0.0
        if abs(l2 - self.perturbation_l2) > 1e-12 or abs(linf - self.perturbation_linf) > 1e-12:
            raise ValueError("stored perturbation norms disagree with the point pair")
        if self.success != (self.label_original != self.label_perturbed):
            raise ValueError("success flag disagrees with the victim labels")


def make_example(
    original: np.ndarray,
    perturbed: np.ndarray,
    attack: str,
    label_original: int,
    label_perturbed: int,
    queries_used: int = 0,
) -> AdversarialExample:
    """Build an example with norms computed from the point pair."""
    original = np.asarray(original, dtype=float).copy()
    perturbed = np.asarray(perturbed, dtype=float).copy()
    diff = perturbed - original
    return AdversarialExample(
        original=original,
        perturbed=perturbed,
        perturbation_l2=float(np.linalg.norm(diff)),
        perturbation_linf=float(np.max(np.abs(diff))) if diff.size else 0.0,
        attack=attack,
        success=bool(label_perturbed != label_original),
        label_original=int(label_original),
        label_perturbed=int(label_perturbed),
        queries_used=int(queries_used),
    )


@dataclass(frozen=True)
class AttackConfig:
    """Per-method knobs; unused fields are ignored by a given method."""

    method: str = "direct"
    epsilon: float = 0.15
    steps: int = 40
    step_size: float = 0.01
    candidate_set_size: int = 10  # m nearest opposite cells for rba_approx
    kernel_c: float = 1.0  # softness of the kernel-substitute surrogate
    radius: float | None = None  # direct-attack radius; None = auto per point
    directions: int = 10
    bisect_tol: float = 1e-3
    refine_steps: int = 5
    cw_c_lo: float = 1e-3
    cw_c_hi: float = 1e2
    cw_search_steps: int = 9
    cw_iters: int = 200
    cw_lr: float = 1e-2
    kappa: float = 0.0
    overshoot: float = 0.02
    max_iter: int = 50
    scale: float = 1.0  # perturbation down-scaling applied before querying
    box: tuple | None = None  # (lo, hi) coordinate bounds, e.g. (0.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        if self.method not in ATTACK_METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {ATTACK_METHODS}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0.0 <= self.scale <= 1.0:
            raise ValueError("scale must lie in [0, 1]")


def _clip_box(x: np.ndarray, box) -> np.ndarray:
    if box is None:
        return x
    return np.clip(x, box[0], box[1])


# ---------------------------------------------------------------------------
# Label oracle with query accounting
# ---------------------------------------------------------------------------


class CountingOracle:
    """Wraps a batch label function; each queried row counts as one call."""

    def __init__(self, predict_labels):
        self._predict = predict_labels
        self.count = 0

    def query(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self.count += len(X)
        return np.asarray(self._predict(X)).reshape(len(X))

    def query_one(self, x: np.ndarray) -> int:
        return int(self.query(x[None, :])[0])


# ---------------------------------------------------------------------------
# Direct attack (k-NN victim)
# ---------------------------------------------------------------------------


def direct_attack(model: KnnModel, x: np.ndarray, r: float) -> AdversarialExample:
    """Step distance r from x toward the nearest training point whose label
    differs from the victim's label at x."""
    x = np.asarray(x, dtype=float)
    label = int(knn_predict(model, x))
    mask = model.y != label
    if not np.any(mask):
        raise AttackInfeasible("training set has no point with a different label")
    cand = model.X[mask]
    dists = np.linalg.norm(cand - x, axis=1)
    j = int(np.argmin(dists))
    if dists[j] == 0.0:
        raise AttackInfeasible("nearest opposite-label point coincides with x")
    direction = (cand[j] - x) / dists[j]
    x_adv = x + r * direction
    return make_example(x, x_adv, "direct", label, int(knn_predict(model, x_adv)))


def auto_direct_radius(model: KnnModel, x: np.ndarray, factor: float = 1.05) -> float:
    """factor * half the distance to the nearest opposite-label training point."""
    x = np.asarray(x, dtype=float)
    label = int(knn_predict(model, x))
    mask = model.y != label
    if not np.any(mask):
        raise AttackInfeasible("training set has no point with a different label")
    d = float(np.min(np.linalg.norm(model.X[mask] - x, axis=1)))
    return factor * d / 2.0


# ---------------------------------------------------------------------------
# Region-based attack (1-NN victim): projection onto Voronoi cells
# ---------------------------------------------------------------------------


def _project_halfspaces_dykstra(
    x: np.ndarray, A: np.ndarray, b: np.ndarray, tol: float, max_sweeps: int
) -> np.ndarray:
    """Dykstra's alternating projections onto the intersection of halfspaces
    a_i . z <= b_i (rows of A are unit vectors)."""
    if len(A) == 1:
        v = float(A[0] @ x - b[0])
        return x - max(v, 0.0) * A[0] if v > 0 else x.copy()
    z = x.copy()
    corrections = np.zeros((len(A), len(x)))
    for _ in range(max_sweeps):
        z_prev = z.copy()
        for i in range(len(A)):
            w = z + corrections[i]
            v = float(A[i] @ w - b[i])
            z = w - max(v, 0.0) * A[i]
            corrections[i] = w - z
        if float(np.max(np.abs(z - z_prev))) <= tol:
            return z
    residual = float(np.max(A @ z - b))
    raise NumericError(f"Dykstra projection did not converge (residual {residual:.3e})")


def project_onto_voronoi_cell(
    X: np.ndarray, j: int, x: np.ndarray, tol: float = 1e-8, max_sweeps: int = 10_000
) -> np.ndarray:
    """Euclidean projection of x onto the Voronoi cell of training row j.

    The cell is the intersection of the bisector halfspaces against every
    other row.  Solved by constraint generation: project onto a small working
    set with Dykstra, then add the most violated constraints until the result
    is feasible for all of them (a feasible solution of a relaxation is the
    exact projection).
    """
    x = np.asarray(x, dtype=float)
    diff = X - X[j]  # a_i = x_i - x_j
    norms = np.linalg.norm(diff, axis=1)
    keep = norms > 0
    keep[j] = False
    A_all = diff[keep] / norms[keep][:, None]
    b_all = (np.sum(X[keep] * X[keep], axis=1) - np.sum(X[j] * X[j])) / 2.0 / norms[keep]
    if len(A_all) == 0:
        return x.copy()
    violations = A_all @ x - b_all
    if np.max(violations) <= 0:
        return x.copy()
    working = [int(np.argmax(violations))]
    for _ in range(64):
        z = _project_halfspaces_dykstra(x, A_all[working], b_all[working], tol, max_sweeps)
        v = A_all @ z - b_all
        worst = float(np.max(v))
        if worst <= 10.0 * tol:
            return z
        order = np.argsort(v)[::-1]
        added = 0
        for i in order:
            if v[i] > 10.0 * tol and int(i) not in working:
                working.append(int(i))
                added += 1
                if added == 2:
                    break
        if added == 0:
            raise NumericError(f"constraint generation stalled (residual {worst:.3e})")
    raise NumericError("constraint generation exceeded its round limit")


def rba_attack(
    model: KnnModel, x: np.ndarray, m: int = 10, exact: bool = False
) -> AdversarialExample:
    """Region-based attack for 1-NN: minimum-norm projection of x onto the
    Voronoi cells of opposite-label training points, nudged 1e-6 inside.

    `exact` enumerates all opposite-label cells (allowed only for n <= 500);
    otherwise the m nearest opposite-label points are tried.
    """
    if model.k != 1:
        raise ValueError("region-based attack supports k=1 only")
    if exact and model.n > 500:
        raise ValueError("exact enumeration is gated to n <= 500; use exact=False")
    x = np.asarray(x, dtype=float)
    label = int(knn_predict(model, x))
    opp = np.flatnonzero(model.y != label)
    if len(opp) == 0:
        raise AttackInfeasible("training set has no point with a different label")
    if not exact:
        d = np.linalg.norm(model.X[opp] - x, axis=1)
        opp = opp[np.argsort(d, kind="stable")[:m]]
    best = None
    best_dist = np.inf
    for j in opp:
        z = project_onto_voronoi_cell(model.X, int(j), x)
        dist = float(np.linalg.norm(z - x))
        if dist < best_dist:
            best, best_dist, best_j = z, dist, int(j)
    toward = model.X[best_j] - best
    nt = float(np.linalg.norm(toward))
    x_adv = best + 1e-6 * toward / nt if nt > 0 else best
    return make_example(x, x_adv, "rba_exact" if exact else "rba_approx",
                        label, int(knn_predict(model, x_adv)))


# ---------------------------------------------------------------------------
# Kernel substitute attack (k-NN victim)
# ---------------------------------------------------------------------------


def kernel_substitute_gradient(
    train_X: np.ndarray, train_y: np.ndarray, x: np.ndarray, y: int, c: float
) -> np.ndarray:
    """Analytic input gradient of the cross-entropy of the softened k-NN.

    The surrogate is f_k(x) = sum_z w_z(x) [y_z = k] with softmax weights
    w_z(x) over -||z - x||^2 / c.
    """
    x = np.asarray(x, dtype=float)
    d2 = np.sum((train_X - x) ** 2, axis=1)
    e = -d2 / c
    e -= e.max()
    w = np.exp(e)
    w /= w.sum()
    is_y = (train_y == y).astype(float)
    p_y = float(w @ is_y)
    # d p_y / dx = sum_z w_z ([y_z = y] - p_y) * 2 (z - x) / c
    grad_p = ((w * (is_y - p_y))[:, None] * (2.0 * (train_X - x) / c)).sum(axis=0)
    return -grad_p / max(p_y, 1e-12)


def kernel_substitute_attack(
    model: KnnModel, x: np.ndarray, epsilon: float, c: float, box=None
) -> AdversarialExample:
    """One FGSM step of size epsilon on the softened k-NN's cross-entropy,
    scored against the real k-NN victim."""
    if c <= 0:
        raise ValueError("c must be > 0")
    x = np.asarray(x, dtype=float)
    label = int(knn_predict(model, x))
    grad = kernel_substitute_gradient(model.X, model.y, x, label, c)
    x_adv = _clip_box(x + epsilon * np.sign(grad), box)
    return make_example(x, x_adv, "kernel_sub", label, int(knn_predict(model, x_adv)))


# ---------------------------------------------------------------------------
# Black-box boundary-distance attack
# ---------------------------------------------------------------------------


def ray_crossing(
    oracle: CountingOracle,
    x: np.ndarray,
    y: int,
    theta: np.ndarray,
    bs_tol: float = 1e-3,
    initial_radius: float = 1.0,
    ray_cap: float = 1e3,
    upper: float | None = None,
) -> float | None:
    """Distance to the first label change along unit direction theta, or None.

    A geometric coarse ray search brackets the crossing, then bisection
    narrows the bracket to bs_tol.  With `upper` given, only improvements
    below it are searched: one probe at `upper` rejects non-improving rays.
    """
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if upper is not None:
        if oracle.query_one(x + upper * theta) == y:
            return None
        lo, hi = 0.0, upper
    else:
        grid = initial_radius * np.power(2.0, np.arange(12))
        grid = grid[grid <= ray_cap]
        labels = oracle.query(x + grid[:, None] * theta[None, :])
        hit = np.flatnonzero(labels != y)
        if len(hit) == 0:
            return None
        hi = float(grid[hit[0]])
        lo = float(grid[hit[0] - 1]) if hit[0] > 0 else 0.0
    while hi - lo > bs_tol:
        mid = 0.5 * (lo + hi)
        if oracle.query_one(x + mid * theta) == y:
            lo = mid
        else:
            hi = mid
    return hi


def bbox_opt_attack(
    oracle: CountingOracle,
    x: np.ndarray,
    y: int | None = None,
    directions: int = 10,
    bs_tol: float = 1e-3,
    refine_steps: int = 5,
    initial_radius: float = 1.0,
    ray_cap: float = 1e3,
    seed: int = 0,
    reference_points: np.ndarray | None = None,
) -> AdversarialExample:
    """Estimate the shortest boundary-crossing distance over `directions`
    candidate rays via ray_crossing, then polish the best direction with
    zeroth-order perturbations, keeping improvements.

    Rays are isotropic Gaussian by default.  With `reference_points` given
    (e.g. the unlabeled query pool) rays point at randomly drawn reference
    points instead; in high dimension isotropic rays essentially never cross
    a nearest-neighbor boundary, data-directed rays do.
    """
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)
    if y is None:
        y = oracle.query_one(x)

    def draw_direction():
        if reference_points is not None:
            ref = reference_points[rng.integers(len(reference_points))]
            theta = np.asarray(ref, dtype=float) - x
        else:
            theta = rng.standard_normal(len(x))
        norm = np.linalg.norm(theta)
        return theta / norm if norm > 0 else None

    best_theta, best_g = None, None
    for _ in range(directions):
        theta = draw_direction()
        if theta is None:
            continue
        g = ray_crossing(oracle, x, y, theta, bs_tol, initial_radius, ray_cap, upper=best_g)
        if g is not None and (best_g is None or g < best_g):
            best_theta, best_g = theta, g
    extra = 0
    while best_theta is None and extra < 64:
        # unlucky draws can all run parallel to the boundary; keep trying a
        # bounded number of fresh rays before declaring infeasibility
        extra += 1
        theta = draw_direction()
        if theta is None:
            continue
        g = ray_crossing(oracle, x, y, theta, bs_tol, initial_radius, ray_cap)
        if g is not None:
            best_theta, best_g = theta, g
    if best_theta is None:
        raise AttackInfeasible("no label change found along any sampled ray")
    for step in range(refine_steps):
        nu = 0.3 * (0.5**step)
        bump = rng.standard_normal(len(x))
        bump /= np.linalg.norm(bump)
        theta = best_theta + nu * bump
        theta /= np.linalg.norm(theta)
        g = ray_crossing(oracle, x, y, theta, bs_tol, initial_radius, ray_cap, upper=best_g)
        if g is not None and g < best_g:
            best_theta, best_g = theta, g
    x_adv = x + best_g * best_theta
    return make_example(x, x_adv, "bbox_opt", y, oracle.query_one(x_adv), oracle.count)


# ---------------------------------------------------------------------------
# Gradient-based attacks (differentiable victims)
# ---------------------------------------------------------------------------


def fgsm(model, x: np.ndarray, y: int, epsilon: float, box=None) -> AdversarialExample:
    """x + epsilon * sign(grad loss); sign(0) = 0 leaves dead coordinates alone."""
    x = np.asarray(x, dtype=float)
    grad = model.input_gradient(x, y)
    x_adv = _clip_box(x + epsilon * np.sign(grad), box)
    return make_example(x, x_adv, "fgsm",
                        int(model.predict_labels(x)), int(model.predict_labels(x_adv)))


def pgd(
    model,
    x: np.ndarray,
    y: int,
    epsilon: float,
    step_size: float,
    steps: int,
    box=None,
    return_path: bool = False,
):
    """Iterated signed-gradient ascent projected onto the L-inf ball of
    radius epsilon around x (plus the coordinate box when given)."""
    x = np.asarray(x, dtype=float)
    cur = x.copy()
    path = []
    for _ in range(steps):
        grad = model.input_gradient(cur, y)
        cur = cur + step_size * np.sign(grad)
        cur = x + np.clip(cur - x, -epsilon, epsilon)
        cur = _clip_box(cur, box)
        if return_path:
            path.append(cur.copy())
    adv = make_example(x, cur, "pgd", int(model.predict_labels(x)), int(model.predict_labels(cur)))
    return (adv, path) if return_path else adv


def deepfool(
    model, x: np.ndarray, overshoot: float = 0.02, max_iter: int = 50, box=None
) -> AdversarialExample:
    """Iterative linearization toward the nearest class hyperplane.

    Per iteration the class k minimizing |f_k| / ||w_k|| over logit
    differences f_k = Z_k - Z_cur is chosen and the minimal step onto that
    hyperplane taken; the accumulated perturbation is finally inflated by
    (1 + overshoot).
    """
    x = np.asarray(x, dtype=float)
    label = int(model.predict_labels(x))
    cur = x.copy()
    for _ in range(max_iter):
        logits = np.asarray(model.logits(cur), dtype=float)
        if int(np.argmax(logits)) != label:
            break
        J = model.logit_jacobian(cur)
        f = logits - logits[label]
        W = J - J[label]
        norms = np.linalg.norm(W, axis=1)
        scores = np.full(len(f), np.inf)
        for k in range(len(f)):
            if k != label and norms[k] > 0:
                scores[k] = abs(f[k]) / norms[k]
        k = int(np.argmin(scores))
        if not np.isfinite(scores[k]):
            break
        cur = cur + (abs(f[k]) + 1e-12) / (norms[k] ** 2) * W[k]
    x_adv = _clip_box(x + (1.0 + overshoot) * (cur - x), box)
    return make_example(x, x_adv, "deepfool", label, int(model.predict_labels(x_adv)))


def _cw_objective_grad(model, x0, w, y, c, kappa, targeted):
    """Objective, gradient in w-space, and the decoded point for C&W-L2."""
    t = np.tanh(w)
    x_adv = 0.5 * (t + 1.0)
    eta = x_adv - x0
    logits = np.asarray(model.logits(x_adv), dtype=float)
    rival = int(np.argmax(np.delete(logits, y)))
    rival = rival + 1 if rival >= y else rival
    f = (logits[rival] - logits[y]) if targeted else (logits[y] - logits[rival])
    obj = float(eta @ eta + c * max(f, -kappa))
    grad_x = 2.0 * eta
    if f > -kappa:
        J = model.logit_jacobian(x_adv)
        df_dx = (J[rival] - J[y]) if targeted else (J[y] - J[rival])
        grad_x = grad_x + c * df_dx
    grad_w = grad_x * 0.5 * (1.0 - t * t)
    return obj, grad_w, x_adv, f


def cw_l2(
    model,
    x: np.ndarray,
    y: int | None = None,
    target: int | None = None,
    c_lo: float = 1e-3,
    c_hi: float = 1e2,
    search_steps: int = 9,
    iters: int = 200,
    lr: float = 1e-2,
    kappa: float = 0.0,
) -> AdversarialExample:
    """Carlini-Wagner L2 with the tanh change of variables (box [0,1]^d).

    Untargeted by default: f = max(Z_y - max_{i != y} Z_i, -kappa) where the
    class to escape, y, defaults to the model's label at x.  Binary search
    over c keeps the smallest successful perturbation; on total failure the
    best final iterate is returned with success False.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > 1):
        raise ValueError("C&W requires inputs inside the [0,1] box")
    label = int(model.predict_labels(x))
    targeted = target is not None
    if targeted:
        y = int(target)
    elif y is None:
        y = label
    eps = 1e-6
    w0 = np.arctanh(2.0 * np.clip(x, eps, 1.0 - eps) - 1.0)

    def attack_succeeds(x_adv) -> bool:
        pred = int(model.predict_labels(x_adv))
        return pred == y if targeted else pred != y

    best = None
    best_l2 = np.inf
    last_iterate = None
    lo, hi = np.log10(c_lo), np.log10(c_hi)
    for _ in range(search_steps):
        c = 10.0 ** (0.5 * (lo + hi))
        w = w0.copy()
        succeeded = False
        for _ in range(iters):
            _, grad_w, x_adv, _ = _cw_objective_grad(model, x, w, y, c, kappa, targeted)
            w = w - lr * grad_w
            if attack_succeeds(x_adv):
                l2 = float(np.linalg.norm(x_adv - x))
                succeeded = True
                if l2 < best_l2:
                    best, best_l2 = x_adv.copy(), l2
        x_adv = 0.5 * (np.tanh(w) + 1.0)
        if attack_succeeds(x_adv):
            l2 = float(np.linalg.norm(x_adv - x))
            succeeded = True
            if l2 < best_l2:
                best, best_l2 = x_adv.copy(), l2
        last_iterate = x_adv
        if succeeded:
            hi = np.log10(c)  # smaller c favors smaller perturbations
        else:
            lo = np.log10(c)
    if best is None:
        return make_example(x, last_iterate, "cw", label, int(model.predict_labels(last_iterate)))
    return make_example(x, best, "cw", label, int(model.predict_labels(best)))


# ---------------------------------------------------------------------------
# Scaling and persistence
# ---------------------------------------------------------------------------


def scale_perturbation(adv: AdversarialExample, scale: float, victim_labels) -> AdversarialExample:
    """Shrink the perturbation to original + scale * (perturbed - original);
    norms are recomputed and success re-evaluated through `victim_labels`."""
    if scale < 0:
        raise ValueError("scale must be >= 0")
    perturbed = adv.original + scale * (adv.perturbed - adv.original)
    labels = np.asarray(victim_labels(np.vstack([adv.original, perturbed])))
    return make_example(adv.original, perturbed, adv.attack, int(labels[0]), int(labels[1]),
                        adv.queries_used)


ADV_CSV_SCHEMA = "# schema=v1"


def save_adversarial_csv(examples, path) -> None:
    """original coords, perturbed coords, attack, L2, Linf, victim label, success."""
    examples = list(examples)
    if not examples:
        raise ValueError("no adversarial examples to write")
    d = len(examples[0].original)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(ADV_CSV_SCHEMA + "\n")
        writer = csv.writer(fh)
        writer.writerow(
            [f"o{i}" for i in range(d)]
            + [f"p{i}" for i in range(d)]
            + ["attack", "l2", "linf", "victim_label", "success"]
        )
        for ex in examples:
            writer.writerow(
                [repr(float(v)) for v in ex.original]
                + [repr(float(v)) for v in ex.perturbed]
                + [
                    ex.attack,
                    repr(ex.perturbation_l2),
                    repr(ex.perturbation_linf),
                    ex.label_perturbed,
                    int(ex.success),
                ]
            )
