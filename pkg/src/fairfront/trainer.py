"""Training loop with grad-norm-balanced CMI regularization, plus the sweep
and cross-validation protocol around it.

One training step: compose the input (append the one-hot group when
sensitive-input mode is on), forward, compute the raw cross-entropy and
soft-CMI losses, measure each loss's batch-mean per-sample gradient norm at
the features (detached), combine the logit gradients with weights
(1-lam)/(n_task+eps) and lam/(n_cmi+eps), backpropagate once, Adam step.

The sweep trains one model per (mixing weight, fold) cell with a seed
derived by hashing (master seed, fold, weight index), evaluates deployment
metrics on the held-out fold with the decision threshold tuned on the
validation fold, and aggregates mean and standard deviation per weight.
"""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import metrics as fm
from .data import SplitView, TabularDataset, encode_splits
from .neural import (
    BalancedLossConfig,
    MLPModel,
    adam_step,
    backward,
    balanced_objective,
    cross_entropy,
    feature_grad_norms,
    forward,
    init_adam,
    init_mlp,
    soft_cmi_loss,
    softmax,
)

DEFAULT_LAMBDA_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99)


class TrainingDiverged(FloatingPointError):
    """Loss or activations left the finite range."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 256
    lam: float = 0.0
    eps: float = 1e-8
    seed: int = 0
    sensitive_input: bool = True
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    hidden: tuple[int, ...] = (64, 64)

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch size must be >= 2")
        if not (0.0 <= self.lam <= 1.0):
            raise ValueError("lam must lie in [0, 1]")


@dataclass
class TrainResult:
    model: MLPModel
    task_curve: list[float]  # final-batch task loss per epoch
    cmi_curve: list[float]  # final-batch soft CMI per epoch


def compose_input(x: np.ndarray, z: np.ndarray, card_z: int, sensitive_input: bool) -> np.ndarray:
    if not sensitive_input:
        return x
    onehot = np.zeros((len(z), card_z))
    onehot[np.arange(len(z)), z] = 1.0
    return np.hstack([x, onehot])


def train(
    config: TrainConfig,
    x: np.ndarray,
    y: np.ndarray,
    z: np.ndarray,
    card_y: int,
    card_z: int,
    monitor=None,
) -> TrainResult:
    """Run the regularized loop for config.epochs over shuffled mini-batches.

    The per-epoch curves record the raw losses of each epoch's final batch;
    they are the residual-violation monitor. ``monitor``, when given, is
    called as monitor(epoch, batch_index, logits, yb, zb, task, cmi) after
    every batch.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    xin_dim = x.shape[1] + (card_z if config.sensitive_input else 0)
    model = init_mlp(xin_dim, config.hidden, card_y, seed=config.seed)
    adam = init_adam(
        model.parameters(),
        lr=config.lr,
        beta1=config.beta1,
        beta2=config.beta2,
        eps_opt=config.adam_eps,
    )
    loss_cfg = BalancedLossConfig(lam=config.lam, eps=config.eps)
    rng = np.random.default_rng(config.seed)
    x_in = compose_input(x, z, card_z, config.sensitive_input)

    task_curve: list[float] = []
    cmi_curve: list[float] = []
    n = len(y)
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        task = cmi = 0.0
        batch_index = 0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            if len(idx) < 2:
                continue  # a 1-sample tail batch carries no usable signal
            xb, yb, zb = x_in[idx], y[idx], z[idx]
            trace = forward(model, xb)
            task, g_task = cross_entropy(trace.logits, yb)
            cmi, g_cmi = soft_cmi_loss(trace.logits, yb, zb, card_y=card_y, card_z=card_z)
            n_task, n_cmi = feature_grad_norms(model, trace, g_task, g_cmi)
            total, g_comb = balanced_objective(
                task, cmi, n_task, n_cmi, loss_cfg, grad_task=g_task, grad_cmi=g_cmi
            )
            if not np.isfinite(total):
                raise TrainingDiverged(
                    f"non-finite objective at epoch {epoch}, batch {batch_index}: "
                    f"task={task!r} cmi={cmi!r} n_task={n_task!r} n_cmi={n_cmi!r}"
                )
            grads = backward(model, trace, g_comb)
            adam_step(adam, model.parameters(), grads)
            if monitor is not None:
                monitor(epoch, batch_index, trace.logits, yb, zb, task, cmi)
            batch_index += 1
        task_curve.append(task)
        cmi_curve.append(cmi)
    return TrainResult(model=model, task_curve=task_curve, cmi_curve=cmi_curve)


def predict_posterior(model: MLPModel, x, z, card_z: int, sensitive_input: bool) -> np.ndarray:
    x_in = compose_input(np.asarray(x, dtype=np.float64), np.asarray(z, dtype=np.int64), card_z, sensitive_input)
    return softmax(forward(model, x_in).logits)


def stratified_kfold(y, z, k: int, seed: int) -> np.ndarray:
    """Fold ids stratified jointly on (y, z); per-cell counts differ by <= 1."""
    y = np.asarray(y, dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    if k < 2:
        raise ValueError("need k >= 2 folds")
    rng = np.random.default_rng(seed)
    folds = np.full(len(y), -1, dtype=np.int64)
    cells = sorted(set(zip(y.tolist(), z.tolist())))
    for yy, zz in cells:
        idx = np.flatnonzero((y == yy) & (z == zz))
        if len(idx) < k:
            raise ValueError(f"stratum (y={yy}, z={zz}) has {len(idx)} samples, fewer than k={k}")
        idx = rng.permutation(idx)
        folds[idx] = np.arange(len(idx)) % k
    return folds


def cell_seed(master_seed: int, fold: int, lam_index: int) -> int:
    """Stable per-cell seed so every (weight, fold) cell is independently reproducible."""
    digest = hashlib.sha256(f"{master_seed}:{fold}:{lam_index}".encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


@dataclass
class CellResult:
    lam: float
    lam_index: int
    fold: int
    seed: int
    metrics: dict = field(default_factory=dict)
    task_curve: list[float] = field(default_factory=list)
    cmi_curve: list[float] = field(default_factory=list)
    error: str | None = None


@dataclass
class SweepResult:
    grid: tuple[float, ...]
    folds: int
    master_seed: int
    config: TrainConfig
    dataset_hash: str
    records: list[CellResult]
    bins: int = 10

    def aggregate(self) -> dict[float, dict[str, tuple[float, float]]]:
        """Per-weight mean and standard deviation for every metric."""
        out: dict[float, dict[str, tuple[float, float]]] = {}
        for lam in self.grid:
            cells = [r for r in self.records if r.lam == lam and r.error is None]
            if not cells:
                out[lam] = {}
                continue
            names = sorted(cells[0].metrics)
            out[lam] = {}
            for name in names:
                vals = np.array([c.metrics[name] for c in cells])
                out[lam][name] = (float(vals.mean()), float(vals.std(ddof=0)))
        return out

    def to_rows(self) -> list[tuple[str, str, str, str]]:
        rows = []
        for r in sorted(self.records, key=lambda r: (r.lam_index, r.fold)):
            for name in sorted(r.metrics):
                rows.append((repr(r.lam), str(r.fold), name, repr(r.metrics[name])))
        return rows

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", "fold", "metric", "value"])
            w.writerows(self.to_rows())

    def manifest(self) -> dict:
        return {
            "grid": list(self.grid),
            "folds": self.folds,
            "master_seed": self.master_seed,
            "config": asdict(self.config),
            "dataset_hash": self.dataset_hash,
            "bins": self.bins,
            "cell_seeds": {
                f"{r.lam_index}:{r.fold}": r.seed for r in self.records
            },
            "errors": {f"{r.lam_index}:{r.fold}": r.error for r in self.records if r.error},
        }


def evaluate_cell(
    model: MLPModel, view: SplitView, lam: float, card_z: int, sensitive_input: bool, bins: int
) -> dict:
    """Held-out metrics for one trained cell (binary target)."""
    post_val = predict_posterior(model, view.x_val, view.z_val, card_z, sensitive_input)
    post_test = predict_posterior(model, view.x_test, view.z_test, card_z, sensitive_input)
    scores_val = post_val[:, 1]
    scores_test = post_test[:, 1]
    threshold = fm.tune_threshold(scores_val, view.y_val, view.z_val, tradeoff_weight=lam)
    preds = (scores_test >= threshold).astype(np.int64)
    cmi = fm.posterior_cmi(scores_test, view.y_test, view.z_test, bins=bins)
    return {
        "accuracy": fm.accuracy(preds, view.y_test),
        "auroc": fm.auroc(scores_test, view.y_test),
        "eo_gap": fm.eo_gap(preds, view.y_test, view.z_test),
        "eopp_gap": fm.eopp_gap(preds, view.y_test, view.z_test),
        "test_cmi": cmi.raw,
        "test_cmi_corrected": cmi.corrected,
        "test_mi": fm.posterior_mi(scores_test, view.y_test, bins=bins),
        "threshold": threshold,
    }


def _run_cell(args) -> CellResult:
    config, dataset, folds, lam, lam_index, fold, seed, bins = args
    record = CellResult(lam=lam, lam_index=lam_index, fold=fold, seed=seed)
    try:
        view = encode_splits(dataset, folds, fold)
        cfg = replace(config, lam=lam, seed=seed)
        result = train(
            cfg, view.x_train, view.y_train, view.z_train, dataset.card_y, dataset.card_z
        )
        record.task_curve = result.task_curve
        record.cmi_curve = result.cmi_curve
        record.metrics = evaluate_cell(
            result.model, view, lam, dataset.card_z, cfg.sensitive_input, bins
        )
    except Exception as exc:  # failures stay per-cell, the sweep continues
        record.error = f"{type(exc).__name__}: {exc}"
    return record


def sweep(
    config: TrainConfig,
    grid,
    dataset: TabularDataset,
    k: int,
    master_seed: int = 0,
    bins: int = 10,
    jobs: int = 1,
) -> SweepResult:
    """Train and evaluate every (mixing weight, fold) cell of the grid.

    Deterministic for a fixed (config, grid, dataset, master seed): cells
    derive independent seeds, and results are merged in cell order no matter
    how many workers run.
    """
    grid = tuple(float(g) for g in grid)
    if not grid:
        raise ValueError("empty mixing-weight grid")
    if k < 2:
        raise ValueError("need k >= 2 folds")
    folds = stratified_kfold(dataset.y, dataset.z, k, master_seed)
    tasks = [
        (config, dataset, folds, lam, li, fold, cell_seed(master_seed, fold, li), bins)
        for li, lam in enumerate(grid)
        for fold in range(k)
    ]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_cell, tasks))
    else:
        records = [_run_cell(t) for t in tasks]
    return SweepResult(
        grid=grid,
        folds=k,
        master_seed=master_seed,
        config=config,
        dataset_hash=dataset.content_hash(),
        records=records,
        bins=bins,
    )


def read_results_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["lambda", "fold", "metric", "value"]:
            raise ValueError(f"unexpected results header: {reader.fieldnames}")
        return [
            {
                "lambda": float(r["lambda"]),
                "fold": int(r["fold"]),
                "metric": r["metric"],
                "value": float(r["value"]),
            }
            for r in reader
        ]


def aggregate_rows(rows) -> dict[float, dict[str, tuple[float, float]]]:
    """Group result rows by (weight, metric) into mean and standard deviation."""
    table: dict[float, dict[str, list[float]]] = {}
    for r in rows:
        table.setdefault(r["lambda"], {}).setdefault(r["metric"], []).append(r["value"])
    return {
        lam: {
            name: (float(np.mean(vals)), float(np.std(vals, ddof=0)))
            for name, vals in metrics.items()
        }
        for lam, metrics in sorted(table.items())
    }
