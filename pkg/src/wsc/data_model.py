"""Experimental-unit data model and dataset validation.

One experimental unit carries a binary assignment indicator ``z`` (0 =
control, 1 = treatment), a binary exposure indicator ``w`` (0 = unexposed,
1 = exposed), a real outcome ``y``, and a fixed-length covariate vector
``x``. The design is one-sided: control users are never exposed, so any
record with ``z=0, w=1`` is rejected at load.

Datasets are stored column-oriented (indicator columns, outcome column,
covariate matrix) and are immutable once validated, so estimators can be
run concurrently on a shared dataset and can vectorize freely.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ComplianceViolation,
    EmptyDataset,
    NonBinaryIndicator,
    SchemaError,
    ShapeMismatch,
)

CovariateKind = str  # "binary" | "count" | "continuous"

_KINDS = ("binary", "count", "continuous")


class Group(enum.Enum):
    """Record-selection patterns over the (z, w) indicators."""

    CONTROL = "control"
    TREATMENT = "treatment"
    TREATMENT_EXPOSED = "treatment_exposed"
    TREATMENT_UNEXPOSED = "treatment_unexposed"


@dataclass(frozen=True)
class CovariateSchema:
    """Names, kinds, and the exact-matching subset of the covariates.

    Args:
        names: Ordered covariate names; unique and non-empty.
        kinds: Per-covariate kind tag, one of ``binary``, ``count``,
            ``continuous``.
        matching_subset: Covariates eligible for exact matching. Every entry
            must name a binary covariate.
    """

    names: tuple[str, ...]
    kinds: tuple[CovariateKind, ...]
    matching_subset: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "matching_subset", tuple(self.matching_subset))
        if len(self.names) != len(self.kinds):
            raise SchemaError("names and kinds must have equal length")
        if len(set(self.names)) != len(self.names):
            raise SchemaError("covariate names must be unique")
        for name in self.names:
            if not name:
                raise SchemaError("covariate names must be non-empty")
        for kind in self.kinds:
            if kind not in _KINDS:
                raise SchemaError(f"unknown covariate kind {kind!r}")
        for name in self.matching_subset:
            if name not in self.names:
                raise SchemaError(f"matching covariate {name!r} not in schema")
            if self.kind_of(name) != "binary":
                raise SchemaError(f"matching covariate {name!r} is not binary")

    @property
    def k(self) -> int:
        return len(self.names)

    def kind_of(self, name: str) -> CovariateKind:
        return self.kinds[self.names.index(name)]

    def indices_of(self, names: Sequence[str]) -> np.ndarray:
        """Column indices of the given covariate names, in the given order."""
        try:
            return np.array([self.names.index(n) for n in names], dtype=np.intp)
        except ValueError:
            missing = [n for n in names if n not in self.names]
            raise SchemaError(f"unknown covariate(s): {', '.join(missing)}") from None


@dataclass(frozen=True)
class UserRecord:
    """One experimental unit: assignment, exposure, outcome, covariates."""

    z: int
    w: int
    y: float
    x: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))


@dataclass(frozen=True)
class StudyDataset:
    """Validated, immutable, column-oriented collection of records.

    Group counts: ``n_t`` treatment, ``n_c`` control, ``n_te``
    treatment-exposed, ``n_tu`` treatment-unexposed. Arrays are marked
    read-only; record order is preserved so views and bootstrap indexing
    are deterministic.
    """

    schema: CovariateSchema
    z: np.ndarray
    w: np.ndarray
    y: np.ndarray
    x: np.ndarray
    n_t: int = field(init=False)
    n_c: int = field(init=False)
    n_te: int = field(init=False)
    n_tu: int = field(init=False)

    def __post_init__(self):
        for arr in (self.z, self.w, self.y, self.x):
            arr.setflags(write=False)
        n_t = int(np.sum(self.z == 1))
        n_te = int(np.sum((self.z == 1) & (self.w == 1)))
        object.__setattr__(self, "n_t", n_t)
        object.__setattr__(self, "n_c", len(self.z) - n_t)
        object.__setattr__(self, "n_te", n_te)
        object.__setattr__(self, "n_tu", n_t - n_te)

    def __len__(self) -> int:
        return len(self.z)

    def mask(self, group: Group) -> np.ndarray:
        if group is Group.CONTROL:
            return self.z == 0
        if group is Group.TREATMENT:
            return self.z == 1
        if group is Group.TREATMENT_EXPOSED:
            return (self.z == 1) & (self.w == 1)
        return (self.z == 1) & (self.w == 0)

    def records(self) -> Iterable[UserRecord]:
        for i in range(len(self)):
            yield UserRecord(
                z=int(self.z[i]),
                w=int(self.w[i]),
                y=float(self.y[i]),
                x=tuple(float(v) for v in self.x[i]),
            )


@dataclass(frozen=True)
class GroupView:
    """Read-only selection of one group's records, order preserved."""

    group: Group
    indices: np.ndarray
    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        for arr in (self.indices, self.y, self.x):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.indices)


def subset(dataset: StudyDataset, group: Group) -> GroupView:
    """Select one group's records. An empty view is legal."""
    idx = np.flatnonzero(dataset.mask(group))
    return GroupView(group=group, indices=idx, y=dataset.y[idx], x=dataset.x[idx])


def _check_columns(z: np.ndarray, w: np.ndarray, y: np.ndarray, x: np.ndarray,
                   schema: CovariateSchema) -> None:
    n = len(z)
    if n == 0:
        raise EmptyDataset("dataset has no records")
    if x.shape != (n, schema.k):
        raise ShapeMismatch(
            f"covariate matrix has shape {x.shape}, expected ({n}, {schema.k})"
        )
    if not np.isin(z, (0, 1)).all() or not np.isin(w, (0, 1)).all():
        raise NonBinaryIndicator("z and w must be 0 or 1")
    bad = np.flatnonzero((z == 0) & (w == 1))
    if bad.size:
        raise ComplianceViolation(
            f"record {bad[0]} is in the control group but marked exposed"
        )
    if not np.isfinite(y).all():
        raise ShapeMismatch("outcomes must be finite reals")
    if not np.isfinite(x).all():
        raise ShapeMismatch("covariate values must be finite (no missing data)")
    for j, kind in enumerate(schema.kinds):
        if kind == "binary" and not np.isin(x[:, j], (0.0, 1.0)).all():
            raise ShapeMismatch(
                f"binary covariate {schema.names[j]!r} has values outside {{0, 1}}"
            )


def dataset_from_columns(z, w, y, x, schema: CovariateSchema, *,
                         validate: bool = True) -> StudyDataset:
    """Build a dataset from column arrays, validating unless told otherwise.

    ``validate=False`` is reserved for provably valid inputs (bootstrap
    resamples of an already validated dataset).
    """
    z = np.ascontiguousarray(z, dtype=np.int8)
    w = np.ascontiguousarray(w, dtype=np.int8)
    y = np.ascontiguousarray(y, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(len(z), -1)
    if not (len(z) == len(w) == len(y) == len(x)):
        raise ShapeMismatch("column lengths differ")
    if validate:
        _check_columns(z, w, y, x, schema)
    return StudyDataset(schema=schema, z=z, w=w, y=y, x=x)


def validate_dataset(records: Iterable[UserRecord], schema: CovariateSchema) -> StudyDataset:
    """Validate records against the schema and return an immutable dataset.

    Raises:
        EmptyDataset: No records.
        ShapeMismatch: Covariate length differs from the schema, or a
            non-finite outcome/covariate value.
        NonBinaryIndicator: z or w outside {0, 1}.
        ComplianceViolation: A record with z=0, w=1.
    """
    records = list(records)
    if not records:
        raise EmptyDataset("dataset has no records")
    k = schema.k
    for i, r in enumerate(records):
        if len(r.x) != k:
            raise ShapeMismatch(
                f"record {i} has {len(r.x)} covariates, schema expects {k}"
            )
    z = np.array([r.z for r in records], dtype=np.int8)
    w = np.array([r.w for r in records], dtype=np.int8)
    y = np.array([r.y for r in records], dtype=np.float64)
    x = np.array([r.x for r in records], dtype=np.float64).reshape(len(records), k)
    return dataset_from_columns(z, w, y, x, schema)


# --- CSV interchange --------------------------------------------------------
#
# Header row `z,w,y,<cov1>,<cov2>,...`; z,w in {0,1}; y and covariates are
# decimal literals; UTF-8, LF line endings, no quoting.

def _fmt(v: float) -> str:
    return repr(float(v))


def save_dataset_csv(dataset: StudyDataset, path: str | Path) -> None:
    """Write the dataset in the CSV interchange format (round-trip exact)."""
    path = Path(path)
    names = dataset.schema.names
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("z,w,y," + ",".join(names) + "\n")
        for i in range(len(dataset)):
            row = [str(int(dataset.z[i])), str(int(dataset.w[i])), _fmt(dataset.y[i])]
            row.extend(_fmt(v) for v in dataset.x[i])
            fh.write(",".join(row) + "\n")


def infer_kinds(x: np.ndarray) -> tuple[CovariateKind, ...]:
    """Infer covariate kinds from values: {0,1} -> binary, non-negative
    integers -> count, anything else -> continuous."""
    kinds = []
    for j in range(x.shape[1]):
        col = x[:, j]
        if np.isin(col, (0.0, 1.0)).all():
            kinds.append("binary")
        elif (col >= 0).all() and (col == np.rint(col)).all():
            kinds.append("count")
        else:
            kinds.append("continuous")
    return tuple(kinds)


def default_matching_subset(names: Sequence[str],
                            kinds: Sequence[CovariateKind]) -> tuple[str, ...]:
    """First three binary covariates, the conventional exact-matching set."""
    binary = [n for n, k in zip(names, kinds) if k == "binary"]
    return tuple(binary[:3])


def load_dataset_csv(path: str | Path, schema: CovariateSchema | None = None) -> StudyDataset:
    """Load and validate a dataset from the CSV interchange format.

    When no schema is supplied, covariate kinds are inferred from the data
    and the matching subset defaults to the first three binary covariates.
    """
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataset(f"{path} is empty") from None
        if header[:3] != ["z", "w", "y"]:
            raise ShapeMismatch(f"{path}: header must start with z,w,y")
        names = header[3:]
        rows = list(reader)
    if not rows:
        raise EmptyDataset(f"{path} has a header but no records")
    try:
        data = np.array(rows, dtype=np.float64)
    except ValueError as exc:
        raise ShapeMismatch(f"{path}: non-numeric cell ({exc})") from None
    if data.shape[1] != 3 + len(names):
        raise ShapeMismatch(f"{path}: row width does not match header")
    z, w, y = data[:, 0], data[:, 1], data[:, 2]
    x = data[:, 3:]
    if schema is None:
        kinds = infer_kinds(x)
        schema = CovariateSchema(
            names=tuple(names),
            kinds=kinds,
            matching_subset=default_matching_subset(names, kinds),
        )
    elif tuple(names) != schema.names:
        raise ShapeMismatch(f"{path}: covariate names do not match the schema")
    if not np.isin(z, (0.0, 1.0)).all() or not np.isin(w, (0.0, 1.0)).all():
        raise NonBinaryIndicator(f"{path}: z and w must be 0 or 1")
    return dataset_from_columns(z.astype(np.int8), w.astype(np.int8), y, x, schema)
