"""Deployment-side utility and fairness metrics.

Equalized-odds style gaps over group-conditional error rates, rank-based
AUROC, accuracy, the validation threshold tuner for deterministic policies,
and test-time information metrics of score/posterior batches (quantile-binned
plug-in CMI/MI with optional bias correction).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .estimators import BiasModel, SampleBatch, SoftBatch, miller_madow_correct, plugin_cmi_hard, soft_cmi


class MetricError(ValueError):
    """Metric called on data that cannot support it."""


@dataclass(frozen=True)
class GroupRates:
    """Per-group confusion rates for binary targets.

    Rates are NaN for groups missing the relevant class; counts record how
    many positives/negatives each group has.
    """

    groups: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    fnr: np.ndarray
    tnr: np.ndarray
    n_pos: np.ndarray
    n_neg: np.ndarray


def group_rates(preds, y_true, z) -> GroupRates:
    preds = np.asarray(preds, dtype=np.int64)
    y = np.asarray(y_true, dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    if not (len(preds) == len(y) == len(z)):
        raise MetricError("preds, y_true, z must have equal length")
    if len(y) == 0:
        raise MetricError("empty evaluation batch")
    if np.any((y != 0) & (y != 1)) or np.any((preds != 0) & (preds != 1)):
        raise MetricError("group rates require binary labels and predictions")
    groups = np.unique(z)
    tpr = np.full(len(groups), np.nan)
    fpr = np.full(len(groups), np.nan)
    n_pos = np.zeros(len(groups), dtype=np.int64)
    n_neg = np.zeros(len(groups), dtype=np.int64)
    for i, g in enumerate(groups):
        sel = z == g
        pos = sel & (y == 1)
        neg = sel & (y == 0)
        n_pos[i] = pos.sum()
        n_neg[i] = neg.sum()
        if n_pos[i]:
            tpr[i] = preds[pos].mean()
        if n_neg[i]:
            fpr[i] = preds[neg].mean()
    return GroupRates(
        groups=groups, tpr=tpr, fpr=fpr, fnr=1.0 - tpr, tnr=1.0 - fpr, n_pos=n_pos, n_neg=n_neg
    )


def eo_gap(preds, y_true, z) -> float:
    """0.5 * [(max-min FPR across groups) + (max-min FNR across groups)].

    Groups missing a class are excluded from the corresponding spread with a
    warning rather than failing; small test folds routinely produce them.
    """
    rates = group_rates(preds, y_true, z)
    if np.isnan(rates.fpr).any() or np.isnan(rates.fnr).any():
        warnings.warn("a group is missing a y-class; its rate is excluded from the gap")

    def spread(vals):
        vals = vals[~np.isnan(vals)]
        if len(vals) == 0:
            return 0.0
        return float(vals.max() - vals.min())

    return 0.5 * (spread(rates.fpr) + spread(rates.fnr))


def eopp_gap(preds, y_true, z) -> float:
    """Largest pairwise TPR difference across groups."""
    rates = group_rates(preds, y_true, z)
    tpr = rates.tpr[~np.isnan(rates.tpr)]
    if len(tpr) < 2:
        raise MetricError("equal-opportunity gap needs positives in at least two groups")
    return float(tpr.max() - tpr.min())


def accuracy(preds, y_true) -> float:
    preds = np.asarray(preds)
    y = np.asarray(y_true)
    if len(preds) != len(y):
        raise MetricError("preds and y_true must have equal length")
    if len(y) == 0:
        raise MetricError("empty evaluation batch")
    return float((preds == y).mean())


def auroc(scores, y_true) -> float:
    """Mann-Whitney AUROC with midrank tie handling."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y_true, dtype=np.int64)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUROC needs both classes present")
    ranks = rankdata(scores)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


THRESHOLD_GRID = np.round(np.linspace(0.0, 1.0, 201), 10)


def tune_threshold(scores, y_true, z, tradeoff_weight: float) -> float:
    """argmax over a fixed 201-point grid of accuracy - weight * EO gap.

    Ties break toward 0.5, then toward the smaller threshold, so the result
    is deterministic. Predictions are score >= threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    best = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for t in THRESHOLD_GRID:
            preds = (scores >= t).astype(np.int64)
            obj = accuracy(preds, y_true) - tradeoff_weight * eo_gap(preds, y_true, z)
            key = (-obj, abs(t - 0.5), t)
            if best is None or key < best[0]:
                best = (key, float(t))
    return best[1]


@dataclass(frozen=True)
class PosteriorCMI:
    raw: float
    corrected: float
    bins_used: int
    merged_bins: bool


def quantile_bin(scores, bins: int):
    """Quantile-bin scores into categories; duplicate edges collapse bins.

    Categories are compacted to the occupied bins, so a degenerate score
    distribution yields fewer than ``bins`` categories and sets the merged
    flag.
    """
    if bins < 2:
        raise MetricError("need at least 2 bins")
    scores = np.asarray(scores, dtype=np.float64)
    edges = np.unique(np.quantile(scores, np.linspace(0.0, 1.0, bins + 1))[1:-1])
    cats = np.searchsorted(edges, scores, side="right")
    used, cats = np.unique(cats, return_inverse=True)
    return cats.astype(np.int64), len(used), len(used) < bins


def posterior_cmi(scores_or_posteriors, y_true, z, bins: int = 10) -> PosteriorCMI:
    """Test-time separation violation of a score or posterior batch, in nats.

    Binary scores are quantile-binned (default 10 bins) and fed to the hard
    plug-in estimator; the corrected value subtracts the first-order bias.
    Full posterior matrices skip binning and use the soft estimator.
    """
    y = np.asarray(y_true, dtype=np.int64)
    zz = np.asarray(z, dtype=np.int64)
    arr = np.asarray(scores_or_posteriors, dtype=np.float64)
    k_y = int(y.max()) + 1
    k_z = int(zz.max()) + 1
    if arr.ndim == 2:
        batch = SoftBatch(p=arr, y=y, z=zz)
        raw = soft_cmi(batch)
        model = BiasModel(k_u=arr.shape[1], k_y=k_y, k_z=k_z, batch_size=len(y))
        return PosteriorCMI(
            raw=raw, corrected=miller_madow_correct(raw, model), bins_used=arr.shape[1], merged_bins=False
        )
    cats, n_bins, merged = quantile_bin(arr, bins)
    if merged:
        warnings.warn("degenerate score distribution collapsed quantile bins")
    batch = SampleBatch(u=cats, y=y, z=zz, card_u=n_bins, card_y=k_y, card_z=k_z)
    raw = plugin_cmi_hard(batch)
    model = BiasModel(k_u=n_bins, k_y=k_y, k_z=k_z, batch_size=len(y))
    return PosteriorCMI(
        raw=raw, corrected=miller_madow_correct(raw, model), bins_used=n_bins, merged_bins=merged
    )


def posterior_mi(scores, y_true, bins: int = 10) -> float:
    """Plug-in utility I(binned score; Y) of a binary score batch, in nats."""
    y = np.asarray(y_true, dtype=np.int64)
    cats, n_bins, _ = quantile_bin(scores, bins)
    counts = np.zeros((n_bins, int(y.max()) + 1))
    np.add.at(counts, (cats, y), 1.0)
    p = counts / counts.sum()
    pa = p.sum(axis=1, keepdims=True)
    pb = p.sum(axis=0, keepdims=True)
    mask = p > 0
    return max(float((p[mask] * np.log(p[mask] / (pa * pb)[mask])).sum()), 0.0)
