"""Exact information quantities on finite joint distributions.

Everything in this module is computed in nats (natural log), so constants
of the form sqrt(2*I) inherited from Pinsker's inequality apply without
unit conversion. Zero cells follow the conventions 0*ln(0) = 0 and
0*ln(0/0) = 0, which keep every quantity total on the boundary of the
simplex.

Tables are dense numpy arrays. Triple joints use axis order (x, y, z);
after a predictor pushforward the first axis holds the prediction, so the
order reads (u, y, z). Cardinalities are capped at MAX_CARD per axis:
these objects are exact desk-scale oracles, not estimators.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

MAX_CARD = 64

# A table whose total mass deviates from 1 by less than RENORM_TOL is
# renormalized silently (float ingestion noise). Larger deviations are
# treated as caller bugs.
RENORM_TOL = 1e-9


class DistributionError(ValueError):
    """Invalid probability table, vector, or predictor."""


def _validated_probs(probs, shape) -> np.ndarray:
    p = np.ascontiguousarray(probs, dtype=np.float64)
    if p.shape != shape:
        raise DistributionError(f"probability table has shape {p.shape}, expected {shape}")
    if np.any(p < 0):
        raise DistributionError("probability table has negative entries")
    total = float(p.sum())
    if abs(total - 1.0) > RENORM_TOL:
        raise DistributionError(f"probability table sums to {total!r}, not 1")
    if total != 1.0:
        p = p / total
    p.setflags(write=False)
    return p


def _check_card(*cards: int) -> None:
    for k in cards:
        if not (1 <= int(k) <= MAX_CARD):
            raise DistributionError(f"cardinality {k} outside [1, {MAX_CARD}]")


@dataclass(frozen=True)
class JointPMF3:
    """Dense joint law of a triple of finite variables, axis order (x, y, z)."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 3:
            raise DistributionError("JointPMF3 needs a 3-d table")
        _check_card(*p.shape)
        object.__setattr__(self, "probs", _validated_probs(p, p.shape))

    @property
    def card_x(self) -> int:
        return self.probs.shape[0]

    @property
    def card_y(self) -> int:
        return self.probs.shape[1]

    @property
    def card_z(self) -> int:
        return self.probs.shape[2]

    def marginal(self, axis: int) -> np.ndarray:
        axes = tuple(a for a in range(3) if a != axis)
        return self.probs.sum(axis=axes)

    def pair(self, axis_a: int, axis_b: int) -> "JointPMF2":
        """Marginal pair law with axes ordered (axis_a, axis_b)."""
        if axis_a == axis_b:
            raise DistributionError("pair axes must differ")
        other = ({0, 1, 2} - {axis_a, axis_b}).pop()
        p = np.transpose(self.probs, (axis_a, axis_b, other)).sum(axis=2)
        return JointPMF2(p)

    def pair_grouped(self, axis_a: int) -> "JointPMF2":
        """Pair law of axis_a against the two remaining axes flattened together."""
        rest = [a for a in range(3) if a != axis_a]
        p = np.transpose(self.probs, (axis_a, *rest))
        return JointPMF2(p.reshape(p.shape[0], -1))

    def to_json(self) -> str:
        return json.dumps(
            {"card": [self.card_x, self.card_y, self.card_z], "probs": self.probs.ravel().tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "JointPMF3":
        try:
            doc = json.loads(text)
            card = [int(c) for c in doc["card"]]
            probs = np.asarray(doc["probs"], dtype=np.float64)
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise DistributionError(f"malformed joint document: {exc}") from exc
        if len(card) != 3:
            raise DistributionError("joint document needs exactly three cardinalities")
        if probs.size != card[0] * card[1] * card[2]:
            raise DistributionError("probs length does not match cardinalities")
        return cls(probs.reshape(card))


@dataclass(frozen=True)
class JointPMF2:
    """Dense joint law of a pair of finite variables."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 2:
            raise DistributionError("JointPMF2 needs a 2-d table")
        object.__setattr__(self, "probs", _validated_probs(p, p.shape))

    @property
    def card_a(self) -> int:
        return self.probs.shape[0]

    @property
    def card_b(self) -> int:
        return self.probs.shape[1]


@dataclass(frozen=True)
class PredictorTable:
    """Deterministic predictor: a lookup table over (x, z) cells.

    ``map[x, z]`` is the predicted category in {0, ..., card_out - 1}.
    """

    map: np.ndarray
    card_out: int

    def __post_init__(self):
        m = np.ascontiguousarray(self.map, dtype=np.int64)
        if m.ndim != 2:
            raise DistributionError("predictor map must be 2-d (x by z)")
        if self.card_out < 1:
            raise DistributionError("card_out must be >= 1")
        if m.size and (m.min() < 0 or m.max() >= self.card_out):
            raise DistributionError("predictor map entry outside output range")
        m.setflags(write=False)
        object.__setattr__(self, "map", m)


@dataclass(frozen=True)
class RandomizedPredictor:
    """Bernoulli mixture of two deterministic tables.

    An external coin selects ``f1`` with probability ``mix``; the realized
    prediction is the pair (coin, table output), so the pushforward output
    space has cardinality 2 * card_out.
    """

    f0: PredictorTable
    f1: PredictorTable
    mix: float

    def __post_init__(self):
        if self.f0.card_out != self.f1.card_out:
            raise DistributionError("mixture components must share card_out")
        if self.f0.map.shape != self.f1.map.shape:
            raise DistributionError("mixture components must share input shape")
        if not (0.0 <= self.mix <= 1.0):
            raise DistributionError("mix must lie in [0, 1]")

    @property
    def card_out(self) -> int:
        return 2 * self.f0.card_out


def entropy(pmf) -> float:
    """Shannon entropy -sum(p ln p) of a probability vector, in nats."""
    p = np.asarray(pmf, dtype=np.float64).ravel()
    if p.size == 0:
        raise DistributionError("empty probability vector")
    if np.any(p < 0):
        raise DistributionError("negative probability entry")
    total = float(p.sum())
    if abs(total - 1.0) > RENORM_TOL:
        raise DistributionError(f"probability vector sums to {total!r}, not 1")
    if total != 1.0:
        p = p / total
    nz = p > 0
    return float(-(p[nz] * np.log(p[nz])).sum())


def mutual_information(joint: JointPMF2) -> float:
    """I(A;B) in nats; zero-probability cells contribute nothing."""
    p = joint.probs
    pa = p.sum(axis=1)
    pb = p.sum(axis=0)
    mask = p > 0
    outer = pa[:, None] * pb[None, :]
    val = float((p[mask] * np.log(p[mask] / outer[mask])).sum())
    return max(val, 0.0)


def conditional_mutual_information(
    joint: JointPMF3, u_axis: int = 0, z_axis: int = 2, y_axis: int = 1
) -> float:
    """I(U;Z|Y) in nats with the axis roles given by position.

    Defaults treat the table as a pushforward law (u, y, z). The quantity is
    symmetric in the u and z roles.
    """
    if sorted((u_axis, z_axis, y_axis)) != [0, 1, 2]:
        raise DistributionError("axis roles must be a permutation of (0, 1, 2)")
    p = np.transpose(joint.probs, (u_axis, z_axis, y_axis))
    p_y = p.sum(axis=(0, 1))
    p_uy = p.sum(axis=1)
    p_zy = p.sum(axis=0)
    mask = p > 0
    num = p * p_y[None, None, :]
    den = p_uy[:, None, :] * p_zy[None, :, :]
    val = float((p[mask] * np.log(num[mask] / den[mask])).sum())
    return max(val, 0.0)


def _push_table(probs: np.ndarray, pred: PredictorTable) -> np.ndarray:
    kx, ky, kz = probs.shape
    if pred.map.shape != (kx, kz):
        raise DistributionError(
            f"predictor map shape {pred.map.shape} does not match joint ({kx}, {kz})"
        )
    out = np.zeros((pred.card_out, kz, ky))
    # scatter-add the (x, z) slice p(x, :, z) onto output row f(x, z)
    p_t = np.transpose(probs, (0, 2, 1))
    np.add.at(out, (pred.map, np.arange(kz)[None, :]), p_t)
    return np.transpose(out, (0, 2, 1))


def pushforward(joint: JointPMF3, pred) -> JointPMF3:
    """Joint law of (U, Y, Z) with U the predictor output.

    For a RandomizedPredictor the first axis indexes the pair
    (coin, table output) as coin * card_out + output.
    """
    if isinstance(pred, PredictorTable):
        return JointPMF3(_push_table(joint.probs, pred))
    if isinstance(pred, RandomizedPredictor):
        p0 = _push_table(joint.probs, pred.f0)
        p1 = _push_table(joint.probs, pred.f1)
        return JointPMF3(np.concatenate([(1.0 - pred.mix) * p0, pred.mix * p1], axis=0))
    raise DistributionError(f"unsupported predictor type {type(pred).__name__}")


@dataclass(frozen=True)
class CIReport:
    holds: bool
    max_violation: float


def check_conditional_independence(joint: JointPMF3, kind: str, tol: float = 1e-10) -> CIReport:
    """Test a conditional factorization of the joint table.

    kind "x_z_given_y" checks p(x,y,z) = p(y) p(x|y) p(z|y);
    kind "y_z_given_x" checks p(x,y,z) = p(x) p(y|x) p(z|x).
    Returns whether the factorization holds within ``tol`` together with the
    largest absolute cell deviation.
    """
    p = joint.probs
    if kind == "x_z_given_y":
        cond_axis, a_axis, b_axis = 1, 0, 2
    elif kind == "y_z_given_x":
        cond_axis, a_axis, b_axis = 0, 1, 2
    else:
        raise DistributionError(f"unknown independence kind {kind!r}")
    q = np.transpose(p, (a_axis, b_axis, cond_axis))
    p_c = q.sum(axis=(0, 1))
    p_ac = q.sum(axis=1)
    p_bc = q.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        recon = p_ac[:, None, :] * p_bc[None, :, :] / p_c[None, None, :]
    recon[:, :, p_c == 0] = 0.0
    dev = float(np.abs(q - recon).max())
    return CIReport(holds=dev <= tol, max_violation=dev)
