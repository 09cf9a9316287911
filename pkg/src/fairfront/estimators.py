"""Sample-based estimators of MI/CMI and their finite-sample guarantees.

The hard plug-in estimator is the stratified average sum_y (B_y/|B|) * I_y
with I_y the empirical mutual information between prediction and group
inside the label-y stratum; it coincides with the exact conditional mutual
information of the empirical joint law. The soft variant averages softmax
posteriors per (label, group) cell and aggregates KL divergences, which
makes it differentiable in the posteriors.

Also here: the asymptotic-bias correction and the McDiarmid-style
concentration radius for the plug-in estimator, plus normalized-covariance
checkers for the "bounded test function" dependence bounds.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .dist import JointPMF2, JointPMF3, conditional_mutual_information

SIMPLEX_TOL = 1e-9


class BatchError(ValueError):
    """Malformed sample batch."""


def _as_index_array(values, name: str, card: int | None) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.int64)
    if arr.ndim != 1:
        raise BatchError(f"{name} must be 1-d")
    if arr.size and arr.min() < 0:
        raise BatchError(f"{name} has negative category indices")
    if card is not None and arr.size and arr.max() >= card:
        raise BatchError(f"{name} index {arr.max()} outside cardinality {card}")
    return arr


@dataclass(frozen=True)
class SampleBatch:
    """Hard categorical samples (u_i, y_i, z_i).

    Cardinalities default to max index + 1; pass them explicitly when a
    category can be absent from the batch.
    """

    u: np.ndarray
    y: np.ndarray
    z: np.ndarray
    card_u: int | None = None
    card_y: int | None = None
    card_z: int | None = None

    def __post_init__(self):
        u = _as_index_array(self.u, "u", self.card_u)
        y = _as_index_array(self.y, "y", self.card_y)
        z = _as_index_array(self.z, "z", self.card_z)
        if not (len(u) == len(y) == len(z)):
            raise BatchError("u, y, z must have equal length")
        if len(u) < 1:
            raise BatchError("batch must contain at least one sample")
        for name, arr in (("u", u), ("y", y), ("z", z)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "card_u", self.card_u or int(u.max()) + 1)
        object.__setattr__(self, "card_y", self.card_y or int(y.max()) + 1)
        object.__setattr__(self, "card_z", self.card_z or int(z.max()) + 1)

    def __len__(self) -> int:
        return len(self.u)

    def empirical_joint(self) -> JointPMF3:
        """Empirical law as a (u, y, z) table."""
        counts = np.zeros((self.card_u, self.card_y, self.card_z))
        np.add.at(counts, (self.u, self.y, self.z), 1.0)
        return JointPMF3(counts / len(self))

    def min_cell_frequency(self) -> float:
        """Smallest empirical P(u, z | y) over occupied y strata.

        Reported alongside concentration bounds because the true q_min they
        need is unknowable from data; this does not certify the bound.
        """
        counts = np.zeros((self.card_y, self.card_u, self.card_z))
        np.add.at(counts, (self.y, self.u, self.z), 1.0)
        ny = counts.sum(axis=(1, 2))
        freq = counts[ny > 0] / ny[ny > 0, None, None]
        return float(freq.min())


@dataclass(frozen=True)
class SoftBatch:
    """Posterior rows p_i on the simplex with hard labels y_i, groups z_i."""

    p: np.ndarray
    y: np.ndarray
    z: np.ndarray
    card_y: int | None = None
    card_z: int | None = None

    def __post_init__(self):
        p = np.ascontiguousarray(self.p, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 1:
            raise BatchError("p must be a nonempty 2-d array of posterior rows")
        if np.any(p < 0):
            raise BatchError("posterior entries must be nonnegative")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > SIMPLEX_TOL):
            raise BatchError("posterior rows must sum to 1")
        y = _as_index_array(self.y, "y", self.card_y)
        z = _as_index_array(self.z, "z", self.card_z)
        if not (len(p) == len(y) == len(z)):
            raise BatchError("p, y, z must have equal length")
        p.setflags(write=False)
        y.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "card_y", self.card_y or int(y.max()) + 1)
        object.__setattr__(self, "card_z", self.card_z or int(z.max()) + 1)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def card_u(self) -> int:
        return self.p.shape[1]


def _hard_cmi_numpy(u, y, z, ku, ky, kz) -> float:
    counts = np.zeros((ky, ku, kz))
    np.add.at(counts, (y, u, z), 1.0)
    n = len(u)
    total = 0.0
    for yy in range(ky):
        c = counts[yy]
        ny = c.sum()
        if ny == 0:
            continue
        pu = c.sum(axis=1)
        pz = c.sum(axis=0)
        mask = c > 0
        outer = pu[:, None] * pz[None, :]
        stratum = float((c[mask] * np.log(c[mask] * ny / outer[mask])).sum())
        total += stratum / n
    return max(total, 0.0)


def plugin_cmi_hard(batch: SampleBatch) -> float:
    """Stratified plug-in estimate of I(U;Z|Y), in nats.

    Strata with no samples contribute zero; a single-sample batch gives 0.
    """
    if kernels is not None:
        return float(
            kernels.hard_cmi(batch.u, batch.y, batch.z, batch.card_u, batch.card_y, batch.card_z)
        )
    return _hard_cmi_numpy(batch.u, batch.y, batch.z, batch.card_u, batch.card_y, batch.card_z)


def _soft_cmi_numpy(p, y, z, ky, kz, want_grad):
    n, k = p.shape
    sums = np.zeros((ky, kz, k))
    np.add.at(sums, (y, z), p)
    cnt = np.zeros((ky, kz))
    np.add.at(cnt, (y, z), 1.0)

    ny = cnt.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        m_yz = sums / cnt[:, :, None]
        m_y = sums.sum(axis=1) / ny[:, None]
    value = 0.0
    cell_grad = np.zeros((ky, kz, k)) if want_grad else None
    for yy in range(ky):
        if ny[yy] == 0:
            continue
        for zz in range(kz):
            if cnt[yy, zz] == 0:
                continue
            m = m_yz[yy, zz]
            base = m_y[yy]
            pos = m > 0
            ratio = np.zeros(k)
            ratio[pos] = np.log(m[pos] / base[pos])
            value += float(cnt[yy, zz] * (m[pos] * ratio[pos]).sum()) / n
            if want_grad:
                cell_grad[yy, zz] = ratio / n
    value = max(value, 0.0)
    if not want_grad:
        return value, None
    return value, cell_grad[y, z]


def soft_cmi(batch: SoftBatch, return_grad: bool = False):
    """Soft plug-in CMI of posterior rows, optionally with its gradient.

    The gradient with respect to sample i's posterior is
    ln(mean posterior of i's (y,z) cell / mean posterior of i's y stratum) / |B|
    componentwise. Empty cells are skipped; components where the cell mean is
    exactly zero (only reachable on the simplex boundary) get gradient 0.
    """
    if kernels is not None:
        value, grad = kernels.soft_cmi(
            batch.p, batch.y, batch.z, batch.card_y, batch.card_z, return_grad
        )
    else:
        value, grad = _soft_cmi_numpy(
            batch.p, batch.y, batch.z, batch.card_y, batch.card_z, return_grad
        )
    if return_grad:
        return float(value), grad
    return float(value)


@dataclass(frozen=True)
class BiasModel:
    """Cardinalities and batch size entering the asymptotic bias term."""

    k_u: int
    k_y: int
    k_z: int
    batch_size: int

    def __post_init__(self):
        if min(self.k_u, self.k_y, self.k_z, self.batch_size) < 1:
            raise ValueError("cardinalities and batch size must be >= 1")

    @property
    def bias(self) -> float:
        return self.k_y * (self.k_u - 1) * (self.k_z - 1) / (2.0 * self.batch_size)


def miller_madow_correct(raw: float, model: BiasModel) -> float:
    """Subtract the first-order plug-in bias K_Y(K_U-1)(K_Z-1)/(2|B|), floored at 0."""
    return max(0.0, raw - model.bias)


@dataclass(frozen=True)
class ConcentrationParams:
    k_u: int
    k_y: int
    k_z: int
    p_min: float
    q_min: float
    delta: float
    batch_size: int

    def __post_init__(self):
        if min(self.k_u, self.k_y, self.k_z) < 1 or self.batch_size < 1:
            raise ValueError("cardinalities and batch size must be >= 1")
        if not (0.0 < self.p_min < 1.0 and 0.0 < self.q_min < 1.0):
            raise ValueError("p_min and q_min must lie in (0, 1)")
        if self.p_min * self.k_y > 1.0 + 1e-12:
            raise ValueError("p_min * k_y exceeds 1: infeasible stratum floor")
        if self.q_min * self.k_u * self.k_z > 1.0 + 1e-12:
            raise ValueError("q_min * k_u * k_z exceeds 1: infeasible cell floor")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")


def concentration_constant(params: ConcentrationParams) -> float:
    """C = 2*sqrt(2) * (M_max + 6*L_0) with M_max = ln(K_U K_Z), L_0 = 1 + ln(2/q_min)."""
    m_max = math.log(params.k_u * params.k_z)
    l0 = 1.0 + math.log(2.0 / params.q_min)
    return 2.0 * math.sqrt(2.0) * (m_max + 6.0 * l0)


def concentration_bound(params: ConcentrationParams) -> float:
    """High-probability deviation radius C * sqrt(ln(2/delta) / |B|), in nats."""
    c = concentration_constant(params)
    return c * math.sqrt(math.log(2.0 / params.delta) / params.batch_size)


def empirical_covariance_bound(n: int, delta: float, sup_h: float, sup_g: float) -> float:
    """Hoeffding radius M_h * M_g * sqrt(2 ln(6/delta) / n) for the empirical covariance."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    return sup_h * sup_g * math.sqrt(2.0 * math.log(6.0 / delta) / n)


def normalized_covariance(joint: JointPMF2, h, g) -> float:
    """|Cov(h(A), g(B))| / (sup|h_c| * sup|g_c|) for centered lookup tables.

    ``h`` and ``g`` are value tables over the categories of the two axes.
    Both are centered under the joint's marginals before taking sup-norms;
    an identically-zero centered table is an error. Sup-norms are essential
    sups: categories with zero marginal mass are ignored.
    """
    p = joint.probs
    h = np.asarray(h, dtype=np.float64).ravel()
    g = np.asarray(g, dtype=np.float64).ravel()
    if h.size != joint.card_a or g.size != joint.card_b:
        raise ValueError("table lengths must match the joint cardinalities")
    pa = p.sum(axis=1)
    pb = p.sum(axis=0)
    hc = h - float(pa @ h)
    gc = g - float(pb @ g)
    sup_h = float(np.abs(hc[pa > 0]).max()) if np.any(pa > 0) else 0.0
    sup_g = float(np.abs(gc[pb > 0]).max()) if np.any(pb > 0) else 0.0
    if sup_h == 0.0 or sup_g == 0.0:
        raise ValueError("test function is constant on the support after centering")
    cov = float(hc @ p @ gc)
    return abs(cov) / (sup_h * sup_g)


def normalized_covariance_samples(u, z, h, g, card_u=None, card_z=None) -> float:
    """Sample version of normalized_covariance via the empirical pair law."""
    u = _as_index_array(u, "u", card_u)
    z = _as_index_array(z, "z", card_z)
    ku = card_u or int(u.max()) + 1
    kz = card_z or int(z.max()) + 1
    counts = np.zeros((ku, kz))
    np.add.at(counts, (u, z), 1.0)
    return normalized_covariance(JointPMF2(counts / len(u)), h, g)


@dataclass(frozen=True)
class BoundCheckReport:
    max_ratio: float
    bound: float
    trials: int
    seed: int
    violations: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "max_ratio": self.max_ratio,
                "bound": self.bound,
                "trials": self.trials,
                "seed": self.seed,
                "violations": self.violations,
            }
        )


def conditional_dependence_bound_check(
    joint: JointPMF3,
    trials: int = 10_000,
    seed: int = 0,
    u_axis: int = 0,
    z_axis: int = 2,
    y_axis: int = 1,
) -> BoundCheckReport:
    """Monte-Carlo audit of the sqrt(2 * CMI) conditional dependence bound.

    Samples bounded test tables uniformly from [-1, 1] per category, centers
    them within each y stratum, and compares the averaged conditional inner
    product against sqrt(2 * I(U;Z|Y)).
    """
    p = np.transpose(joint.probs, (u_axis, z_axis, y_axis))
    ku, kz, ky = p.shape
    p_y = p.sum(axis=(0, 1))
    with np.errstate(invalid="ignore", divide="ignore"):
        p_uz_y = p / p_y[None, None, :]
    p_uz_y[:, :, p_y == 0] = 0.0
    p_u_y = p_uz_y.sum(axis=1)  # (ku, ky)
    p_z_y = p_uz_y.sum(axis=0)  # (kz, ky)

    rng = np.random.default_rng(seed)
    h = rng.uniform(-1.0, 1.0, size=(trials, ku))
    g = rng.uniform(-1.0, 1.0, size=(trials, kz))
    # center within each stratum: tables become functions of (category, y)
    hc = h[:, :, None] - np.einsum("tu,uy->ty", h, p_u_y)[:, None, :]
    gc = g[:, :, None] - np.einsum("tz,zy->ty", g, p_z_y)[:, None, :]

    sup_h = np.abs(np.where(p_u_y[None, :, :] > 0, hc, 0.0)).max(axis=(1, 2))
    sup_g = np.abs(np.where(p_z_y[None, :, :] > 0, gc, 0.0)).max(axis=(1, 2))

    inner = np.einsum("tuy,tzy,uzy->ty", hc, gc, p_uz_y)
    avg = np.abs(inner) @ p_y
    denom = sup_h * sup_g
    ratios = np.where(denom > 0, avg / np.where(denom > 0, denom, 1.0), 0.0)

    cmi = conditional_mutual_information(joint, u_axis=u_axis, z_axis=z_axis, y_axis=y_axis)
    bound = math.sqrt(2.0 * cmi)
    violations = int((ratios > bound + 1e-12).sum())
    return BoundCheckReport(
        max_ratio=float(ratios.max()),
        bound=bound,
        trials=trials,
        seed=seed,
        violations=violations,
    )


# --- batch serialization ----------------------------------------------------

def write_hard_batch_csv(batch: SampleBatch, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "y", "z"])
        for row in zip(batch.u, batch.y, batch.z):
            w.writerow([int(v) for v in row])


def read_hard_batch_csv(path_or_text) -> SampleBatch:
    rows = _read_csv_rows(path_or_text, expected_header=["u", "y", "z"])
    arr = np.array(rows, dtype=np.int64)
    return SampleBatch(u=arr[:, 0], y=arr[:, 1], z=arr[:, 2])


def write_soft_batch_csv(batch: SoftBatch, path) -> None:
    k = batch.card_u
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"p_{j}" for j in range(k)] + ["y", "z"])
        for i in range(len(batch)):
            w.writerow([repr(float(v)) for v in batch.p[i]] + [int(batch.y[i]), int(batch.z[i])])


def read_soft_batch_csv(path_or_text) -> SoftBatch:
    rows, header = _read_csv_rows(path_or_text, expected_header=None)
    k = len(header) - 2
    if k < 1 or header[-2:] != ["y", "z"] or header[:k] != [f"p_{j}" for j in range(k)]:
        raise BatchError(f"soft batch header must be p_0..p_{{K-1}},y,z, got {header}")
    arr = np.array(rows, dtype=np.float64)
    return SoftBatch(p=arr[:, :k], y=arr[:, k].astype(np.int64), z=arr[:, k + 1].astype(np.int64))


def _read_csv_rows(path_or_text, expected_header):
    if isinstance(path_or_text, str) and "\n" in path_or_text:
        fh = io.StringIO(path_or_text)
    else:
        fh = open(path_or_text, newline="")
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise BatchError("empty batch file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise BatchError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise BatchError(f"row {lineno}: {exc}") from exc
    if not rows:
        raise BatchError("batch file has a header but no samples")
    if expected_header is not None:
        if header != expected_header:
            raise BatchError(f"expected header {expected_header}, got {header}")
        return rows
    return rows, header
