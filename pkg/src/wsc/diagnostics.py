"""Covariate balance diagnostics and bootstrap confidence intervals.

Balance is measured by the absolute standardized mean difference (ASMD)
between the treatment-exposed and treatment-unexposed groups, before and
after weighting; a weighted ASMD below 0.1 is the conventional
"reasonably balanced" heuristic. The denominator uses the unweighted
group variances in both columns so the pre/post comparison shares a
scale.

Intervals are percentile bootstrap over unstratified resamples of the
full record set, so uncertainty in the compliance rate propagates into
the experimental estimator. Replicate r's resample depends only on
(master seed, r); replicates may run on a thread pool without changing
any output.
"""

from __future__ import annotations

import concurrent.futures
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data_model import Group, StudyDataset, dataset_from_columns
from .errors import EmptyGroup, EstimatorError, ShapeMismatch, TooManyFailedReplicates
from .estimators import AttEstimate, AttMethod, EstimatorSuite
from .numeric import quantile

ASMD_THRESHOLD = 0.1


@dataclass(frozen=True)
class CovariateBalance:
    name: str
    asmd_unweighted: float
    asmd_weighted: float

    @property
    def balanced(self) -> bool:
        return self.asmd_weighted < ASMD_THRESHOLD


@dataclass(frozen=True)
class BalanceReport:
    """Per-covariate ASMD before and after weighting, one row per schema
    covariate."""

    rows: tuple[CovariateBalance, ...]
    threshold: float = ASMD_THRESHOLD

    @property
    def all_balanced(self) -> bool:
        return all(r.balanced for r in self.rows)

    def to_csv(self, path: str | Path) -> None:
        """Write `covariate,asmd_unweighted,asmd_weighted,pass` rows."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("covariate,asmd_unweighted,asmd_weighted,pass\n")
            for r in self.rows:
                fh.write(f"{r.name},{r.asmd_unweighted!r},{r.asmd_weighted!r},"
                         f"{'true' if r.balanced else 'false'}\n")


@dataclass(frozen=True)
class BootstrapConfig:
    resamples: int = 1000
    level: float = 0.95
    seed: int = 0
    max_failure_fraction: float = 0.10

    def __post_init__(self):
        if self.resamples < 1:
            raise ValueError("resamples must be >= 1")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must be in (0, 1)")


def _group_var(values: np.ndarray) -> float:
    # Sample variance; a single observation carries no spread information.
    if values.size < 2:
        return 0.0
    return float(np.var(values, ddof=1))


def asmd(values_a: np.ndarray, values_b: np.ndarray,
         weights_b: np.ndarray | None = None) -> float:
    """Absolute standardized mean difference between two groups.

    |mean_a - mean_b| / sqrt((var_a + var_b) / 2), where the b-side mean is
    weighted when weights are given but both variances are always computed
    unweighted on the raw groups. 0/0 is defined as 0.
    """
    values_a = np.asarray(values_a, dtype=np.float64)
    values_b = np.asarray(values_b, dtype=np.float64)
    if values_a.size == 0 or values_b.size == 0:
        raise EmptyGroup("asmd requires two non-empty groups")
    mean_a = float(values_a.mean())
    if weights_b is None:
        mean_b = float(values_b.mean())
    else:
        weights_b = np.asarray(weights_b, dtype=np.float64)
        if weights_b.shape != values_b.shape:
            raise ShapeMismatch("weights length must match the weighted group")
        mean_b = float((values_b * weights_b).sum() / weights_b.sum())
    denom = math.sqrt((_group_var(values_a) + _group_var(values_b)) / 2.0)
    diff = abs(mean_a - mean_b)
    if denom == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / denom


def balance_report(dataset: StudyDataset, weights: np.ndarray) -> BalanceReport:
    """ASMD of every schema covariate between TE and TU, unweighted and
    with the given per-TU-user weights."""
    te = dataset.mask(Group.TREATMENT_EXPOSED)
    tu = dataset.mask(Group.TREATMENT_UNEXPOSED)
    if dataset.n_te == 0 or dataset.n_tu == 0:
        raise EmptyGroup("balance needs at least one TE and one TU record")
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (dataset.n_tu,):
        raise ShapeMismatch(
            f"expected {dataset.n_tu} TU weights, got {weights.shape}"
        )
    x_te, x_tu = dataset.x[te], dataset.x[tu]
    rows = []
    for j, name in enumerate(dataset.schema.names):
        rows.append(CovariateBalance(
            name=name,
            asmd_unweighted=asmd(x_te[:, j], x_tu[:, j]),
            asmd_weighted=asmd(x_te[:, j], x_tu[:, j], weights),
        ))
    return BalanceReport(rows=tuple(rows))


def worker_count() -> int:
    """Thread-pool width, capped by the WSC_THREADS environment variable.
    Results never depend on it."""
    raw = os.environ.get("WSC_THREADS", "")
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _replicate_rng(seed: int, r: int) -> np.random.Generator:
    # Keyed substream: replicate r depends only on (master seed, r).
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(
        entropy=seed, spawn_key=(r,))))


def _resample(dataset: StudyDataset, rng: np.random.Generator) -> StudyDataset:
    idx = rng.integers(0, len(dataset), size=len(dataset))
    return dataset_from_columns(
        dataset.z[idx], dataset.w[idx], dataset.y[idx], dataset.x[idx],
        dataset.schema, validate=False,
    )


def bootstrap_ci(dataset: StudyDataset, method: AttMethod,
                 suite: EstimatorSuite = EstimatorSuite(),
                 cfg: BootstrapConfig = BootstrapConfig()) -> AttEstimate:
    """Percentile bootstrap interval for one estimator.

    Resamples n records with replacement from the full dataset B times,
    re-runs the estimator, and takes the (1-level)/2 and 1-(1-level)/2
    quantiles of the successful replicate estimates. Replicates whose
    estimator raises a precondition error are discarded and counted; more
    than ``max_failure_fraction`` of them failing is an error. The point
    estimate always comes from the original dataset.
    """
    point = suite.run(dataset, method)

    def one(r: int) -> float:
        rng = _replicate_rng(cfg.seed, r)
        try:
            return suite.run(_resample(dataset, rng), method).point
        except EstimatorError:
            return math.nan

    workers = worker_count()
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            estimates = np.fromiter(pool.map(one, range(cfg.resamples)),
                                    dtype=np.float64, count=cfg.resamples)
    else:
        estimates = np.fromiter(map(one, range(cfg.resamples)),
                                dtype=np.float64, count=cfg.resamples)

    ok = estimates[~np.isnan(estimates)]
    n_failed = cfg.resamples - ok.size
    if n_failed > cfg.max_failure_fraction * cfg.resamples:
        raise TooManyFailedReplicates(
            f"{n_failed} of {cfg.resamples} bootstrap replicates failed"
        )
    alpha = (1.0 - cfg.level) / 2.0
    se = float(np.std(ok, ddof=1)) if ok.size > 1 else 0.0
    diagnostics = dict(point.diagnostics)
    diagnostics.update({
        "bootstrap_resamples": cfg.resamples,
        "bootstrap_failed": n_failed,
        "bootstrap_level": cfg.level,
        "bootstrap_se": se,
    })
    return AttEstimate(
        method=point.method,
        point=point.point,
        ci_low=quantile(ok, alpha),
        ci_high=quantile(ok, 1.0 - alpha),
        n_used_te=point.n_used_te,
        n_used_tu=point.n_used_tu,
        diagnostics=diagnostics,
    )
