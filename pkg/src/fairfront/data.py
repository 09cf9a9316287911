"""Tabular dataset ingestion, synthetic generation, and leak-free fold views.

CSV ingestion follows a JSON schema naming each column's kind (numeric or
categorical) and role (feature, target, sensitive, ignore). Rows missing the
target or sensitive value are dropped; missing numeric features stay NaN
until fold encoding, where they are imputed with the train-fold median and
standardized with train-fold statistics only.

The synthetic generator samples a latent (x-category, y, z) triple from an
exact joint and emits Gaussian features per x-category, so downstream
estimates can be compared against exact oracle values on the same joint.
"""

from __future__ import annotations

import csv
import hashlib
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dist import JointPMF3

MISSING_TOKENS = {"", "?", "na", "nan", "null", "none"}


class DataError(ValueError):
    """Unusable input file or schema."""


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str  # numeric | categorical
    role: str  # feature | target | sensitive | ignore

    def __post_init__(self):
        if self.kind not in ("numeric", "categorical"):
            raise DataError(f"column {self.name}: unknown kind {self.kind!r}")
        if self.role not in ("feature", "target", "sensitive", "ignore"):
            raise DataError(f"column {self.name}: unknown role {self.role!r}")


def load_schema(path_or_doc) -> list[ColumnSpec]:
    if isinstance(path_or_doc, dict):
        doc = path_or_doc
    else:
        with open(path_or_doc) as fh:
            doc = json.load(fh)
    try:
        cols = [ColumnSpec(c["name"], c["kind"], c["role"]) for c in doc["columns"]]
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed schema: {exc}") from exc
    roles = [c.role for c in cols]
    if roles.count("target") != 1 or roles.count("sensitive") != 1:
        raise DataError("schema must name exactly one target and one sensitive column")
    return cols


@dataclass
class TabularDataset:
    """Encoded feature matrix plus integer target/sensitive columns.

    Features may contain NaN (missing numerics); imputation is deferred to
    fold encoding so test rows never leak into the statistics.
    """

    features: np.ndarray
    y: np.ndarray
    z: np.ndarray
    feature_names: list[str]
    y_categories: list[str]
    z_categories: list[str]
    dropped_rows: int = 0
    constant_columns: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not (len(self.features) == len(self.y) == len(self.z)):
            raise DataError("feature/target/sensitive lengths differ")
        if len(self.y_categories) < 2 or len(self.z_categories) < 2:
            raise DataError("target and sensitive variables need at least 2 categories")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def card_y(self) -> int:
        return len(self.y_categories)

    @property
    def card_z(self) -> int:
        return len(self.z_categories)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        h.update(np.ascontiguousarray(self.z).tobytes())
        h.update("\x1f".join(self.feature_names).encode())
        return h.hexdigest()

    def to_csv(self, path) -> None:
        """Canonical numeric dump; floats round-trip bit-exactly via repr."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([*self.feature_names, "y", "z"])
            for i in range(len(self)):
                w.writerow(
                    [repr(float(v)) for v in self.features[i]]
                    + [int(self.y[i]), int(self.z[i])]
                )

    @classmethod
    def from_csv(cls, path, card_y: int | None = None, card_z: int | None = None):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [r for r in reader if r]
        if header[-2:] != ["y", "z"]:
            raise DataError("canonical dataset CSV must end with y,z columns")
        arr = np.array(rows, dtype=np.float64)
        y = arr[:, -2].astype(np.int64)
        z = arr[:, -1].astype(np.int64)
        ky = card_y or int(y.max()) + 1
        kz = card_z or int(z.max()) + 1
        return cls(
            features=arr[:, :-2],
            y=y,
            z=z,
            feature_names=header[:-2],
            y_categories=[str(i) for i in range(ky)],
            z_categories=[str(i) for i in range(kz)],
        )


def _parse_numeric(token: str, colname: str, lineno: int) -> float:
    if token.strip().lower() in MISSING_TOKENS:
        return np.nan
    try:
        return float(token)
    except ValueError:
        raise DataError(f"row {lineno}, column {colname!r}: cannot parse {token!r}") from None


def load_csv(path, schema) -> TabularDataset:
    """Ingest a CSV per the column schema into an encoded TabularDataset."""
    specs = load_schema(schema) if not isinstance(schema, list) else schema
    by_name = {c.name: c for c in specs}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("empty dataset file") from None
        unknown = [h for h in header if h not in by_name]
        if unknown:
            raise DataError(f"columns not in schema: {unknown}")
        missing = [c.name for c in specs if c.name not in header]
        if missing:
            raise DataError(f"schema columns absent from file: {missing}")
        raw_rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
            raw_rows.append((lineno, [v.strip() for v in row]))
    if not raw_rows:
        raise DataError("dataset file has no data rows")

    col_idx = {name: header.index(name) for name in by_name}
    target = next(c for c in specs if c.role == "target")
    sensitive = next(c for c in specs if c.role == "sensitive")

    kept, dropped = [], 0
    for lineno, row in raw_rows:
        if (
            row[col_idx[target.name]].lower() in MISSING_TOKENS
            or row[col_idx[sensitive.name]].lower() in MISSING_TOKENS
        ):
            dropped += 1
            continue
        kept.append((lineno, row))
    if not kept:
        raise DataError("all rows dropped: target or sensitive always missing")

    def categories_of(col: ColumnSpec) -> list[str]:
        vals = {row[col_idx[col.name]] for _, row in kept}
        vals -= {v for v in vals if v.lower() in MISSING_TOKENS}
        return sorted(vals)

    y_cats = categories_of(target)
    z_cats = categories_of(sensitive)
    y_map = {v: i for i, v in enumerate(y_cats)}
    z_map = {v: i for i, v in enumerate(z_cats)}

    feature_cols, names, constant = [], [], []
    for col in specs:
        if col.role != "feature":
            continue
        idx = col_idx[col.name]
        if col.kind == "numeric":
            vals = np.array([_parse_numeric(row[idx], col.name, ln) for ln, row in kept])
            feature_cols.append(vals[:, None])
            names.append(col.name)
            if np.nanstd(vals) == 0:
                constant.append(col.name)
        else:
            cats = sorted({row[idx] for _, row in kept})
            if len(cats) == 1:
                constant.append(col.name)
                warnings.warn(f"categorical column {col.name!r} has a single category")
            cmap = {v: i for i, v in enumerate(cats)}
            onehot = np.zeros((len(kept), len(cats)))
            for r, (_, row) in enumerate(kept):
                onehot[r, cmap[row[idx]]] = 1.0
            feature_cols.append(onehot)
            names.extend(f"{col.name}={c}" for c in cats)

    features = np.hstack(feature_cols) if feature_cols else np.zeros((len(kept), 0))
    y = np.array([y_map[row[col_idx[target.name]]] for _, row in kept], dtype=np.int64)
    z = np.array([z_map[row[col_idx[sensitive.name]]] for _, row in kept], dtype=np.int64)
    return TabularDataset(
        features=features,
        y=y,
        z=z,
        feature_names=names,
        y_categories=y_cats,
        z_categories=z_cats,
        dropped_rows=dropped,
        constant_columns=constant,
    )


@dataclass(frozen=True)
class SyntheticSpec:
    """Latent joint plus per-x-category Gaussian feature emission."""

    joint: JointPMF3
    n: int
    means: np.ndarray  # (card_x, feature_dim)
    scales: np.ndarray  # (card_x,) or (card_x, feature_dim)
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise DataError("need n >= 1 samples")
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        scales = np.asarray(self.scales, dtype=np.float64)
        if means.shape[0] != self.joint.card_x:
            raise DataError("means must have one row per x-category")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "scales", scales)


def generate_synthetic(spec: SyntheticSpec) -> tuple[TabularDataset, JointPMF3]:
    """Sample the latent triple i.i.d. and emit noisy features per x-category."""
    rng = np.random.default_rng(spec.seed)
    kx, ky, kz = spec.joint.probs.shape
    flat = rng.choice(kx * ky * kz, size=spec.n, p=spec.joint.probs.ravel())
    x_cat, rem = np.divmod(flat, ky * kz)
    y, z = np.divmod(rem, kz)
    d = spec.means.shape[1]
    scales = np.atleast_1d(spec.scales)
    if scales.ndim == 1:
        scales = scales[:, None]
    scales = np.broadcast_to(scales, (kx, d))
    noise = rng.standard_normal(size=(spec.n, d))
    features = spec.means[x_cat] + scales[x_cat] * noise
    ds = TabularDataset(
        features=features,
        y=y.astype(np.int64),
        z=z.astype(np.int64),
        feature_names=[f"x{j}" for j in range(d)],
        y_categories=[str(i) for i in range(ky)],
        z_categories=[str(i) for i in range(kz)],
    )
    return ds, spec.joint


@dataclass(frozen=True)
class SplitView:
    """Train/validation/test arrays with train-only encoding statistics."""

    x_train: np.ndarray
    y_train: np.ndarray
    z_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    z_val: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    z_test: np.ndarray
    medians: np.ndarray
    means: np.ndarray
    stds: np.ndarray


def encode_splits(dataset: TabularDataset, folds: np.ndarray, test_fold: int) -> SplitView:
    """Fold views with validation = (test_fold + 1) mod k and train = rest.

    Imputation (train median) and standardization (train mean/std) are fit on
    the train rows only and applied unchanged to validation and test.
    """
    folds = np.asarray(folds)
    k = int(folds.max()) + 1
    if k < 3:
        raise DataError("need at least 3 folds so a validation fold exists")
    if not (0 <= test_fold < k):
        raise DataError(f"test fold {test_fold} outside range 0..{k - 1}")
    val_fold = (test_fold + 1) % k
    test_idx = folds == test_fold
    val_idx = folds == val_fold
    train_idx = ~(test_idx | val_idx)

    x_train = dataset.features[train_idx].copy()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # all-NaN columns become NaN medians
        medians = np.nanmedian(x_train, axis=0)
    medians = np.where(np.isnan(medians), 0.0, medians)

    def encode(x):
        x = np.where(np.isnan(x), medians[None, :], x)
        return (x - means[None, :]) / stds[None, :]

    x_train = np.where(np.isnan(x_train), medians[None, :], x_train)
    means = x_train.mean(axis=0)
    stds = x_train.std(axis=0)
    stds = np.where(stds == 0, 1.0, stds)
    return SplitView(
        x_train=(x_train - means[None, :]) / stds[None, :],
        y_train=dataset.y[train_idx],
        z_train=dataset.z[train_idx],
        x_val=encode(dataset.features[val_idx].copy()),
        y_val=dataset.y[val_idx],
        z_val=dataset.z[val_idx],
        x_test=encode(dataset.features[test_idx].copy()),
        y_test=dataset.y[test_idx],
        z_test=dataset.z[test_idx],
        medians=medians,
        means=means,
        stds=stds,
    )
