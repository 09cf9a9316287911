"""Brute-force ground truth for the separation-utility trade-off.

Enumerates every deterministic predictor table on a small joint, places each
at its (violation, utility) = (I(U;Z|Y), I(U;Y)) coordinates, and builds two
frontiers on top of that cloud: the deterministic step frontier (best utility
at violation budget v) and the randomized frontier, which is the upper
concave envelope of the cloud and is attained by Bernoulli mixtures of two
tables.

The checkers in this module turn the structural facts about these objects
(budget identity, envelope containment of mixtures, the input-only fairness
limit and the strict trade-off beyond it, conditional law matching of fair
predictors) into report objects that the test suite and the CLI assert on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dist import (
    JointPMF2,
    JointPMF3,
    PredictorTable,
    check_conditional_independence,
    conditional_mutual_information,
    entropy,
    mutual_information,
    pushforward,
)

ENUMERATION_CAP = 2**20
FAIR_V_TOL = 1e-10  # numerical zero for "perfect separation" on log-sum noise


class EnumerationCapError(ValueError):
    """Predictor space too large for brute force."""


class PreconditionError(ValueError):
    """A checker was called outside its stated premises."""


@dataclass(frozen=True)
class FrontierPoint:
    v: float
    u: float
    provenance: str


@dataclass(frozen=True)
class Frontier:
    """Piecewise-linear concave upper envelope on the information plane.

    Vertices have strictly increasing v, non-decreasing u, and
    non-increasing segment slopes. Evaluation is linear interpolation,
    constant beyond the last vertex, and clamped to the first vertex on the
    left (v below the smallest attainable violation).
    """

    vertices: tuple[FrontierPoint, ...]

    def __post_init__(self):
        if not self.vertices:
            raise ValueError("a frontier needs at least one vertex")

    def evaluate(self, v):
        vs = np.array([p.v for p in self.vertices])
        us = np.array([p.u for p in self.vertices])
        return np.interp(v, vs, us)


def uv_of_predictor(joint: JointPMF3, pred) -> tuple[float, float]:
    """Exact (violation, utility) coordinates of a predictor on a joint."""
    pushed = pushforward(joint, pred)
    u = mutual_information(pushed.pair(0, 1))
    v = conditional_mutual_information(pushed)
    return v, u


def accuracy_of_predictor(joint: JointPMF3, pred: PredictorTable) -> float:
    """P(f(X,Z) = Y); only meaningful when card_out == card_y."""
    pushed = pushforward(joint, pred)
    k = min(pushed.card_x, pushed.card_y)
    pair = pushed.pair(0, 1).probs
    return float(np.trace(pair[:k, :k]))


def _predictor_count(joint: JointPMF3, card_out: int) -> int:
    n_cells = joint.card_x * joint.card_z
    count = card_out**n_cells
    if count > ENUMERATION_CAP:
        raise EnumerationCapError(
            f"{card_out}^{n_cells} = {count} deterministic predictors exceed the "
            f"cap of {ENUMERATION_CAP}"
        )
    return count


def predictor_from_index(joint: JointPMF3, card_out: int, index: int) -> PredictorTable:
    """Decode a predictor id into its table (mixed-radix over row-major (x, z) cells)."""
    n_cells = joint.card_x * joint.card_z
    digits = np.empty(n_cells, dtype=np.int64)
    rem = index
    for c in range(n_cells - 1, -1, -1):
        digits[c] = rem % card_out
        rem //= card_out
    return PredictorTable(map=digits.reshape(joint.card_x, joint.card_z), card_out=card_out)


def _uv_batch(tables: np.ndarray, joint: JointPMF3, card_out: int):
    """(v, u) for a chunk of predictors, vectorized over the chunk axis.

    tables: (n, cells) int array of output digits in row-major (x, z) order.
    """
    kx, ky, kz = joint.probs.shape
    n = tables.shape[0]
    # per-cell mass blocks: cell (x, z) contributes p(x, :, z) at column z
    blocks = np.zeros((kx * kz, ky, kz))
    cell = 0
    for x in range(kx):
        for z in range(kz):
            blocks[cell, :, z] = joint.probs[x, :, z]
            cell += 1
    onehot = np.eye(card_out)[tables]  # (n, cells, card_out)
    p = np.einsum("nco,cyz->noyz", onehot, blocks)  # (n, card_out, ky, kz)

    p_y = joint.probs.sum(axis=(0, 2))
    p_yz = joint.probs.sum(axis=0)
    p_uy = p.sum(axis=3)
    p_u = p_uy.sum(axis=2)

    with np.errstate(divide="ignore", invalid="ignore"):
        term_u = p_uy * np.log(p_uy / (p_u[:, :, None] * p_y[None, None, :]))
        term_v = p * np.log(
            p * p_y[None, None, :, None] / (p_uy[:, :, :, None] * p_yz[None, None, :, :])
        )
    term_u[~(p_uy > 0)] = 0.0
    term_v[~(p > 0)] = 0.0
    u = np.maximum(term_u.sum(axis=(1, 2)), 0.0)
    v = np.maximum(term_v.sum(axis=(1, 2, 3)), 0.0)
    return v, u


def enumerate_deterministic_set(
    joint: JointPMF3,
    card_out: int,
    dedup_tol: float = 1e-12,
    chunk: int = 4096,
) -> list[FrontierPoint]:
    """All (v_f, u_f) pairs over deterministic tables f, deduplicated.

    Provenance records the id of the first predictor attaining each point;
    ids decode through predictor_from_index.
    """
    total = _predictor_count(joint, card_out)
    n_cells = joint.card_x * joint.card_z
    radix = card_out ** np.arange(n_cells - 1, -1, -1, dtype=np.int64)
    decimals = max(0, int(round(-np.log10(dedup_tol)))) if dedup_tol > 0 else None

    out: list[FrontierPoint] = []
    seen: dict[tuple[float, float], int] = {}
    for start in range(0, total, chunk):
        ids = np.arange(start, min(start + chunk, total), dtype=np.int64)
        tables = (ids[:, None] // radix[None, :]) % card_out
        v, u = _uv_batch(tables, joint, card_out)
        for i, pid in enumerate(ids):
            if decimals is None:
                out.append(FrontierPoint(v=float(v[i]), u=float(u[i]), provenance=f"f{pid}"))
                continue
            key = (round(float(v[i]), decimals), round(float(u[i]), decimals))
            if key not in seen:
                seen[key] = int(pid)
    if decimals is None:
        return out
    return [FrontierPoint(v=k[0], u=k[1], provenance=f"f{pid}") for k, pid in seen.items()]


def _pareto_filter(points) -> list[FrontierPoint]:
    ordered = sorted(points, key=lambda p: (p.v, -p.u))
    kept: list[FrontierPoint] = []
    best_u = -np.inf
    for p in ordered:
        if p.u > best_u:
            kept.append(p)
            best_u = p.u
    return kept


def upper_concave_envelope(points) -> Frontier:
    """Concave upper envelope of a point cloud on the information plane.

    Dominated points are dropped first (for equal v, the larger u wins), then
    a monotone-chain pass keeps only vertices with strictly decreasing
    slopes. This is the randomized frontier: every Bernoulli mixture of two
    enumerated predictors lands on or under it.
    """
    points = list(points)
    if not points:
        raise ValueError("cannot build an envelope from no points")
    kept = _pareto_filter(points)
    hull: list[FrontierPoint] = []
    for p in kept:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # pop b when it sits on or below the chord a -> p
            if (b.v - a.v) * (p.u - a.u) - (b.u - a.u) * (p.v - a.v) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return Frontier(vertices=tuple(hull))


def det_frontier(points, v_grid) -> list[tuple[float, float]]:
    """Deterministic step frontier: max{u_f : v_f <= v} per grid value.

    Empty budgets evaluate to 0, the utility of a constant predictor.
    """
    points = sorted(points, key=lambda p: p.v)
    if not points:
        raise ValueError("no points to build the deterministic frontier from")
    vs = np.array([p.v for p in points])
    prefix_max = np.maximum.accumulate(np.array([p.u for p in points]))
    out = []
    for v in np.atleast_1d(np.asarray(v_grid, dtype=np.float64)):
        idx = int(np.searchsorted(vs, v, side="right")) - 1
        out.append((float(v), float(prefix_max[idx]) if idx >= 0 else 0.0))
    return out


@dataclass(frozen=True)
class BudgetReport:
    u: float
    v: float
    i_u_yz: float
    budget: float
    identity_deviation: float
    identity_ok: bool
    bound_ok: bool


def budget_check(joint: JointPMF3, pred, tol: float = 1e-12) -> BudgetReport:
    """Audit u + v = I(U;(Y,Z)) and u + v <= I((X,Z);Y) + H(Z|Y).

    Failures are reported, not raised.
    """
    pushed = pushforward(joint, pred)
    u = mutual_information(pushed.pair(0, 1))
    v = conditional_mutual_information(pushed)
    i_u_yz = mutual_information(pushed.pair_grouped(0))
    i_xz_y = mutual_information(joint.pair_grouped(1))
    pair_yz = joint.pair(1, 2).probs
    h_z_given_y = entropy(pair_yz.ravel()) - entropy(pair_yz.sum(axis=1))
    budget = i_xz_y + h_z_given_y
    dev = abs(u + v - i_u_yz)
    return BudgetReport(
        u=u,
        v=v,
        i_u_yz=i_u_yz,
        budget=budget,
        identity_deviation=dev,
        identity_ok=dev <= tol,
        bound_ok=u + v <= budget + tol,
    )


@dataclass(frozen=True)
class NecessityReport:
    u_x_star: float
    u_xz_star: float
    x_indep_z_given_y: bool
    z_informative_given_x: bool
    degenerate_z_given_y: bool
    assumption_holds: bool
    max_fair_utility: float
    fairness_limit_ok: bool | None
    strict_tradeoff_ok: bool | None
    witnesses: dict

    def __post_init__(self):
        if self.u_x_star > self.u_xz_star + 1e-12:
            raise AssertionError("input-only optimum exceeded the full optimum")


def necessity_analysis(
    joint: JointPMF3, card_out: int, fair_tol: float = FAIR_V_TOL
) -> NecessityReport:
    """Fairness-limit and strict-trade-off audit via exhaustive enumeration.

    Under the non-degeneracy premises (X indep Z given Y, Z informative
    beyond X, and Z not a function of Y), the best utility at zero violation
    equals the best utility of any predictor ignoring Z, and exceeding it
    forces positive violation. When a premise fails the verdicts are left
    None: the degenerate Y=Z regime genuinely escapes the limit.
    """
    total = _predictor_count(joint, card_out)
    if card_out ** joint.card_x > ENUMERATION_CAP:
        raise EnumerationCapError("input-only predictor space exceeds the cap")

    best_full, best_full_id = -np.inf, None
    best_fair, best_fair_id = -np.inf, None
    tradeoff_witness = None
    all_v = np.empty(total)
    all_u = np.empty(total)
    n_cells = joint.card_x * joint.card_z
    radix = card_out ** np.arange(n_cells - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, 4096):
        ids = np.arange(start, min(start + 4096, total), dtype=np.int64)
        tables = (ids[:, None] // radix[None, :]) % card_out
        v, u = _uv_batch(tables, joint, card_out)
        all_v[ids] = v
        all_u[ids] = u
        for i, pid in enumerate(ids):
            if u[i] > best_full:
                best_full, best_full_id = float(u[i]), int(pid)
            if v[i] <= fair_tol and u[i] > best_fair:
                best_fair, best_fair_id = float(u[i]), int(pid)

    # input-only tables: one digit per x, broadcast across z
    u_x_star, best_x_id = -np.inf, None
    x_radix = card_out ** np.arange(joint.card_x - 1, -1, -1, dtype=np.int64)
    for gid in range(card_out**joint.card_x):
        digits = (gid // x_radix) % card_out
        table = PredictorTable(
            map=np.repeat(digits[:, None], joint.card_z, axis=1), card_out=card_out
        )
        _, u = uv_of_predictor(joint, table)
        if u > u_x_star:
            u_x_star, best_x_id = float(u), gid

    ci = check_conditional_independence(joint, "x_z_given_y")
    i_zy_given_x = conditional_mutual_information(joint, u_axis=2, z_axis=1, y_axis=0)
    pair_yz = joint.pair(1, 2).probs
    h_z_given_y = entropy(pair_yz.ravel()) - entropy(pair_yz.sum(axis=1))
    z_informative = i_zy_given_x > 1e-10
    degenerate = h_z_given_y <= 1e-12
    assumption = ci.holds and z_informative and not degenerate

    fairness_ok = None
    tradeoff_ok = None
    if assumption:
        fairness_ok = abs(best_fair - u_x_star) <= 1e-9
        beyond = all_u > u_x_star + 1e-9
        tradeoff_ok = bool(np.all(all_v[beyond] > fair_tol))
        if np.any(beyond):
            tradeoff_witness = int(np.argmax(all_u))

    witnesses = {"u_xz_star": f"f{best_full_id}", "u_x_star": f"g{best_x_id}"}
    if best_fair_id is not None:
        witnesses["max_fair"] = f"f{best_fair_id}"
    if tradeoff_witness is not None:
        witnesses["beyond_limit"] = f"f{tradeoff_witness}"

    return NecessityReport(
        u_x_star=u_x_star,
        u_xz_star=best_full,
        x_indep_z_given_y=ci.holds,
        z_informative_given_x=z_informative,
        degenerate_z_given_y=degenerate,
        assumption_holds=assumption,
        max_fair_utility=best_fair if best_fair_id is not None else 0.0,
        fairness_limit_ok=fairness_ok,
        strict_tradeoff_ok=tradeoff_ok,
        witnesses=witnesses,
    )


@dataclass(frozen=True)
class LawMatchingReport:
    max_deviation: float
    max_mi_deviation: float
    ok: bool


def conditional_law_matching_check(
    joint: JointPMF3, pred: PredictorTable, tol: float = 1e-9
) -> LawMatchingReport:
    """For a fair predictor, compare L(f(X,z)|Y=y) against L(U|Y=y) per z.

    Requires X indep Z given Y and a predictor with violation below
    FAIR_V_TOL; a fair predictor must then look identical no matter which
    group value is frozen into it, so it cannot gain utility from the group.
    """
    ci = check_conditional_independence(joint, "x_z_given_y")
    if not ci.holds:
        raise PreconditionError(
            f"joint violates X indep Z given Y (max deviation {ci.max_violation:.3g})"
        )
    v, u = uv_of_predictor(joint, pred)
    if v > FAIR_V_TOL:
        raise PreconditionError(f"predictor has violation {v:.3g}, not separation-fair")

    p = joint.probs
    p_y = p.sum(axis=(0, 2))
    p_z = p.sum(axis=(0, 1))
    with np.errstate(invalid="ignore", divide="ignore"):
        p_x_given_y = p.sum(axis=2) / p_y[None, :]
    p_x_given_y[:, p_y == 0] = 0.0

    pushed = pushforward(joint, pred)
    with np.errstate(invalid="ignore", divide="ignore"):
        p_u_given_y = pushed.probs.sum(axis=2) / p_y[None, :]
    p_u_given_y[:, p_y == 0] = 0.0

    max_dev = 0.0
    max_mi_dev = 0.0
    for z in range(joint.card_z):
        if p_z[z] == 0:
            continue
        q = np.zeros((pred.card_out, joint.card_y))
        for x in range(joint.card_x):
            q[pred.map[x, z]] += p_x_given_y[x]
        max_dev = max(max_dev, float(np.abs(q - p_u_given_y)[:, p_y > 0].max()))
        mi_z = mutual_information(JointPMF2(q * p_y[None, :]))
        max_mi_dev = max(max_mi_dev, abs(mi_z - u))
    return LawMatchingReport(
        max_deviation=max_dev, max_mi_deviation=max_mi_dev, ok=max_mi_dev <= tol
    )
