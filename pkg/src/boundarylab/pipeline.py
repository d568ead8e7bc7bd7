"""Train -> Generate -> Retrain extraction pipeline with query budgets.

The victim is fitted on its own train split; a query strategy picks or
crafts up to `budget` points; the victim answers label queries (the only
information flowing to the shadow); the shadow is retrained on those pairs
and scored on held-out test data against ground-truth labels.

Ground-truth pool labels are never read: selection and attacks see pool
features only.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import attacks as atk
from .attacks import AttackConfig, CountingOracle
from .classifiers import knn_fit, krr_fit, nw_fit
from .datasets import LabeledDataset
from .errors import UnsupportedStrategy
from .neural import MlpModel, TrainConfig, mlp_train
from .seeds import rng_for, split_seed

STRATEGIES = ("random", "margin", "dfal", "max_confidence")

GRADIENT_METHODS = ("fgsm", "pgd", "deepfool", "cw")


# ---------------------------------------------------------------------------
# Model specs
# ---------------------------------------------------------------------------


def parse_model_spec(spec: str) -> tuple[str, Optional[float]]:
    """'knn:1', 'nw:0.15', 'krr:0.1', or 'mlp' -> (kind, parameter)."""
    kind, _, param = spec.partition(":")
    kind = kind.strip()
    if kind not in ("knn", "nw", "krr", "mlp"):
        raise ValueError(f"unknown model spec {spec!r}")
    if kind == "mlp":
        return "mlp", None
    if not param:
        raise ValueError(f"model spec {spec!r} needs a parameter, e.g. 'knn:1'")
    return kind, float(param)


def fit_model(spec: str, X: np.ndarray, y: np.ndarray, seed: int = 0,
              mlp_cfg: Optional[TrainConfig] = None):
    kind, param = parse_model_spec(spec)
    ds = LabeledDataset(X, y)
    if kind == "knn":
        return knn_fit(ds, int(param))
    if kind == "nw":
        return nw_fit(ds, param)
    if kind == "krr":
        return krr_fit(ds, param)
    cfg = mlp_cfg or TrainConfig(seed=seed)
    if cfg.seed != seed:
        cfg = replace(cfg, seed=seed)
    model, _ = mlp_train(ds, cfg)
    return model


# ---------------------------------------------------------------------------
# Selection strategies
# ---------------------------------------------------------------------------


def select_random(pool_size: int, budget: int, seed: int) -> np.ndarray:
    """Uniform sample of row indices without replacement."""
    if budget > pool_size:
        raise ValueError(f"budget {budget} exceeds pool size {pool_size}")
    rng = np.random.default_rng(seed)
    return rng.permutation(pool_size)[:budget]


def select_margin(pool_X: np.ndarray, victim, budget: int) -> np.ndarray:
    """Indices of the `budget` pool points with smallest |eta_hat - 1/2|,
    ties broken by lower index."""
    if not hasattr(victim, "predict_eta"):
        raise UnsupportedStrategy("margin selection needs a victim with score output")
    if budget > len(pool_X):
        raise ValueError(f"budget {budget} exceeds pool size {len(pool_X)}")
    margins = np.abs(np.asarray(victim.predict_eta(pool_X)) - 0.5)
    return np.argsort(margins, kind="stable")[:budget]


def select_dfal(
    pool_X: np.ndarray,
    surrogate: MlpModel,
    budget: int,
    perturbation_magnitude: Optional[float] = None,
    overshoot: float = 0.02,
    max_iter: int = 50,
) -> tuple[np.ndarray, list]:
    """DeepFool every pool point against the surrogate and keep the `budget`
    points whose adversarial example is closest in L2.

    With `perturbation_magnitude` set, the returned examples are rescaled to
    that absolute L2 length (the variants that query perturbed points).
    """
    if pool_X.shape[1] != surrogate.dim:
        raise ValueError("pool dimension does not match the surrogate")
    if budget > len(pool_X):
        raise ValueError(f"budget {budget} exceeds pool size {len(pool_X)}")
    examples = [atk.deepfool(surrogate, x, overshoot=overshoot, max_iter=max_iter)
                for x in pool_X]
    dists = np.array([ex.perturbation_l2 for ex in examples])
    order = np.argsort(dists, kind="stable")[:budget]
    selected = []
    for i in order:
        ex = examples[i]
        if perturbation_magnitude is not None and ex.perturbation_l2 > 0:
            unit = (ex.perturbed - ex.original) / ex.perturbation_l2
            moved = ex.original + perturbation_magnitude * unit
            ex = atk.make_example(
                ex.original, moved, ex.attack,
                ex.label_original, int(surrogate.predict_labels(moved)),
            )
        selected.append(ex)
    return order, selected


def select_max_confidence(
    pool_X: np.ndarray,
    surrogate: MlpModel,
    budget: int,
    overshoot: float = 0.02,
    max_iter: int = 50,
) -> tuple[np.ndarray, list]:
    """DeepFool every pool point; rank by the surrogate's top softmax
    probability at the adversarial point, descending."""
    if pool_X.shape[1] != surrogate.dim:
        raise ValueError("pool dimension does not match the surrogate")
    if budget > len(pool_X):
        raise ValueError(f"budget {budget} exceeds pool size {len(pool_X)}")
    examples = [atk.deepfool(surrogate, x, overshoot=overshoot, max_iter=max_iter)
                for x in pool_X]
    conf = np.empty(len(examples))
    for i, ex in enumerate(examples):
        _, probs = surrogate.forward(ex.perturbed)
        conf[i] = float(np.max(probs))
    order = np.argsort(-conf, kind="stable")[:budget]
    return order, [examples[i] for i in order]


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    victim: str
    shadow: str
    train: LabeledDataset
    pool: LabeledDataset
    strategy: str = "random"
    attack: Optional[AttackConfig] = None
    budget: int = 0
    scale: float = 0.9  # perturbation shrink applied before querying
    seed: int = 0
    surrogate_hidden: tuple = (32, 32)
    surrogate_cfg: Optional[TrainConfig] = None
    dfal_magnitude: Optional[float] = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.budget < 0:
            raise ValueError("budget must be >= 0")


@dataclass(frozen=True)
class SyntheticDataset:
    """Query points with victim-assigned labels and per-point provenance."""

    points: np.ndarray
    labels: np.ndarray
    provenance: tuple
    queries_used: int  # victim calls that produced `labels`


@dataclass(frozen=True)
class PipelineReport:
    dataset: str
    strategy: str
    attack: str
    budget: int
    seed: int
    victim_acc: float
    shadow_acc: float
    mean_l2: Optional[float]
    queries_used: int
    degenerate: bool = False


@dataclass(frozen=True)
class RunDetails:
    """Intermediate artifacts of a pipeline run, for inspection and tests."""

    victim: object
    shadow: object
    synthetic: SyntheticDataset
    adversarial: Optional[tuple]


def _attack_points(cfg: PipelineConfig, victim, oracle, surrogate, X_sel, rng,
                   pool_X=None) -> list:
    """Run the configured attack on each selected clean point."""
    ac = cfg.attack
    out = []
    box = ac.box
    for i, x in enumerate(X_sel):
        if ac.method == "direct":
            r = ac.radius if ac.radius is not None else atk.auto_direct_radius(victim, x)
            out.append(atk.direct_attack(victim, x, r))
        elif ac.method in ("rba_approx", "rba_exact"):
            out.append(atk.rba_attack(victim, x, m=ac.candidate_set_size,
                                      exact=ac.method == "rba_exact"))
        elif ac.method == "kernel_sub":
            out.append(atk.kernel_substitute_attack(victim, x, ac.epsilon, ac.kernel_c, box=box))
        elif ac.method == "bbox_opt":
            out.append(atk.bbox_opt_attack(
                oracle, x,
                directions=ac.directions, bs_tol=ac.bisect_tol,
                refine_steps=ac.refine_steps, seed=split_seed(ac.seed, i),
                reference_points=pool_X,
            ))
        elif ac.method == "fgsm":
            y = int(surrogate.predict_labels(x))
            out.append(atk.fgsm(surrogate, x, y, ac.epsilon, box=box))
        elif ac.method == "pgd":
            y = int(surrogate.predict_labels(x))
            out.append(atk.pgd(surrogate, x, y, ac.epsilon, ac.step_size, ac.steps, box=box))
        elif ac.method == "deepfool":
            out.append(atk.deepfool(surrogate, x, overshoot=ac.overshoot,
                                    max_iter=ac.max_iter, box=box))
        elif ac.method == "cw":
            out.append(atk.cw_l2(surrogate, x, c_lo=ac.cw_c_lo, c_hi=ac.cw_c_hi,
                                 search_steps=ac.cw_search_steps, iters=ac.cw_iters,
                                 lr=ac.cw_lr, kappa=ac.kappa))
        else:
            raise ValueError(f"attack method {ac.method!r} not usable in the pipeline")
    return out


def _needs_surrogate(cfg: PipelineConfig, victim) -> bool:
    if cfg.strategy in ("dfal", "max_confidence"):
        return True
    if cfg.attack is not None and cfg.attack.method in GRADIENT_METHODS:
        return not isinstance(victim, MlpModel)
    return False


def run_pipeline(cfg: PipelineConfig, test: LabeledDataset, return_details: bool = False):
    """Execute one Train -> Generate -> Retrain round and score it.

    Gradient attacks against non-differentiable victims run on a surrogate
    network fitted to the victim's train split; the victim remains the only
    source of synthetic labels.  With return_details=True the report comes
    with the fitted models and the synthetic dataset.
    """
    if cfg.pool.dim != cfg.train.dim or test.dim != cfg.train.dim:
        raise ValueError("train, pool, and test dimensions must agree")
    victim = fit_model(cfg.victim, cfg.train.X, cfg.train.y, seed=split_seed(cfg.seed, 0))
    oracle = CountingOracle(victim.predict_labels)
    score_queries = 0
    pool_X = cfg.pool.X  # ground-truth pool labels are deliberately unused

    if cfg.budget == 0:
        synthetic = SyntheticDataset(points=np.empty((0, cfg.train.dim)),
                                     labels=np.empty(0, dtype=np.int64),
                                     provenance=(), queries_used=0)
        report = PipelineReport(
            dataset=cfg.train.name,
            strategy=cfg.strategy,
            attack=cfg.attack.method if cfg.attack else "none",
            budget=0,
            seed=cfg.seed,
            victim_acc=float(np.mean(victim.predict_labels(test.X) == test.y)),
            # untrained shadow degenerates to the constant class-0 rule
            shadow_acc=float(np.mean(test.y == 0)),
            mean_l2=None,
            queries_used=0,
            degenerate=True,
        )
        if return_details:
            return report, RunDetails(victim=victim, shadow=None,
                                      synthetic=synthetic, adversarial=None)
        return report

    surrogate = None
    if _needs_surrogate(cfg, victim):
        if isinstance(victim, MlpModel):
            surrogate = victim
        else:
            sur_cfg = cfg.surrogate_cfg or TrainConfig(seed=split_seed(cfg.seed, 3))
            surrogate, _ = mlp_train(
                LabeledDataset(cfg.train.X, cfg.train.y), sur_cfg, hidden=cfg.surrogate_hidden
            )
    elif cfg.attack is not None and cfg.attack.method in GRADIENT_METHODS:
        surrogate = victim  # differentiable victim attacked directly

    adv_examples = None
    if cfg.strategy == "random":
        idx = select_random(len(pool_X), cfg.budget, split_seed(cfg.seed, 1))
        X_sel = pool_X[idx]
        if cfg.attack is not None:
            adv_examples = _attack_points(cfg, victim, oracle, surrogate, X_sel,
                                          rng_for(cfg.seed, 2), pool_X=pool_X)
    elif cfg.strategy == "margin":
        if cfg.attack is None:
            idx = select_margin(pool_X, victim, cfg.budget)
            score_queries += len(pool_X)
            X_sel = pool_X[idx]
        else:
            # lowest-confidence adversarial candidates: craft for the whole
            # pool, then rank the scaled candidates by victim margin
            all_adv = _attack_points(cfg, victim, oracle, surrogate, pool_X,
                                     rng_for(cfg.seed, 2), pool_X=pool_X)
            scaled = np.array([ex.original + cfg.scale * (ex.perturbed - ex.original)
                               for ex in all_adv])
            if not hasattr(victim, "predict_eta"):
                raise UnsupportedStrategy("margin selection needs a victim with score output")
            margins = np.abs(np.asarray(victim.predict_eta(scaled)) - 0.5)
            score_queries += len(scaled)
            idx = np.argsort(margins, kind="stable")[: cfg.budget]
            adv_examples = [all_adv[i] for i in idx]
            X_sel = pool_X[idx]
    elif cfg.strategy == "dfal":
        idx, adv_examples = select_dfal(pool_X, surrogate, cfg.budget,
                                        perturbation_magnitude=cfg.dfal_magnitude)
        X_sel = pool_X[idx]
        if cfg.dfal_magnitude is None:
            adv_examples = None  # classic variant queries the clean points
    else:  # max_confidence
        idx, adv_examples = select_max_confidence(pool_X, surrogate, cfg.budget)
        X_sel = pool_X[idx]

    mean_l2 = None
    if adv_examples is not None:
        queried = np.array([ex.original + cfg.scale * (ex.perturbed - ex.original)
                            for ex in adv_examples])
        if cfg.attack is not None and cfg.attack.box is not None:
            queried = np.clip(queried, cfg.attack.box[0], cfg.attack.box[1])
        provenance = tuple(f"adversarial:{ex.attack}" for ex in adv_examples)
        originals = np.array([ex.original for ex in adv_examples])
        mean_l2 = float(np.mean(np.linalg.norm(queried - originals, axis=1)))
    else:
        queried = X_sel
        provenance = tuple("clean" for _ in range(len(X_sel)))

    victim_acc = float(np.mean(victim.predict_labels(test.X) == test.y))
    labels = oracle.query(queried)
    synthetic = SyntheticDataset(points=queried, labels=labels,
                                 provenance=provenance, queries_used=len(queried))
    shadow = fit_model(cfg.shadow, synthetic.points, synthetic.labels,
                       seed=split_seed(cfg.seed, 4))
    shadow_acc = float(np.mean(shadow.predict_labels(test.X) == test.y))
    report = PipelineReport(
        dataset=cfg.train.name,
        strategy=cfg.strategy,
        attack=cfg.attack.method if cfg.attack else "none",
        budget=cfg.budget,
        seed=cfg.seed,
        victim_acc=victim_acc,
        shadow_acc=shadow_acc,
        mean_l2=mean_l2,
        queries_used=oracle.count + score_queries,
        degenerate=False,
    )
    if return_details:
        details = RunDetails(
            victim=victim, shadow=shadow, synthetic=synthetic,
            adversarial=tuple(adv_examples) if adv_examples is not None else None,
        )
        return report, details
    return report
