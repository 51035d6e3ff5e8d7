"""ATT estimators: the experimental IV-ratio benchmark and the four
observational methods (difference in group means, exact matching,
regression adjustment, inverse probability of treatment weighting).

The experimental estimator uses both arms of the randomized design:
under one-sided compliance and exclusion restriction the ATT equals the
intent-to-treat effect divided by the compliance rate. The observational
estimators use only the treatment group, comparing exposed (TE) to
unexposed (TU) users, which is how a study without a randomized control
arm would have to proceed.

All estimators are pure functions of (dataset, config): shift/scale
equivariant in the outcome, invariant to record order, and safe to call
concurrently on a shared dataset.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .data_model import Group, StudyDataset
from .errors import (
    InsufficientUnexposed,
    NoCompliers,
    NoControlGroup,
    NoExposed,
    NoMatches,
    NonBinaryCovariate,
    NoTreatmentGroup,
    NoUnexposed,
)
from .numeric import fit_logistic, fit_ols, predict_prob, quantile, weighted_mean


class AttMethod(enum.Enum):
    """Estimation methods; values are the stable wire/CLI names."""

    EXPERIMENTAL = "experimental"
    DIGM = "digm"
    EXACT_MATCHING = "match"
    REGRESSION = "regression"
    IPTW = "iptw"


@dataclass(frozen=True)
class AttEstimate:
    """One method's ATT estimate with optional bootstrap interval."""

    method: AttMethod
    point: float
    ci_low: float | None = None
    ci_high: float | None = None
    n_used_te: int = 0
    n_used_tu: int = 0
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.ci_low is not None and self.ci_high is not None:
            if self.ci_low > self.ci_high:
                raise ValueError("ci_low must not exceed ci_high")


@dataclass(frozen=True)
class IptwConfig:
    """Weight-trimming quantiles and the covariates entering the propensity
    model (all schema covariates when None)."""

    trim_low_q: float = 0.01
    trim_high_q: float = 0.99
    covariates: tuple[str, ...] | None = None

    def __post_init__(self):
        if not (0.0 <= self.trim_low_q < self.trim_high_q <= 1.0):
            raise ValueError("require 0 <= trim_low_q < trim_high_q <= 1")


@dataclass(frozen=True)
class MatchingConfig:
    """Covariates for exact matching (schema matching subset when None).
    Unmatched exposed users are dropped and reported, never an error unless
    nothing matches."""

    covariates: tuple[str, ...] | None = None


def _split_treatment(dataset: StudyDataset):
    te = dataset.mask(Group.TREATMENT_EXPOSED)
    tu = dataset.mask(Group.TREATMENT_UNEXPOSED)
    return te, tu


def experimental_att(dataset: StudyDataset) -> AttEstimate:
    """IV-ratio estimate from the randomized design.

    ITT-hat = mean(y | z=1) - mean(y | z=0); ATT-hat = ITT-hat / (n_te/n_t).
    """
    if dataset.n_t == 0:
        raise NoTreatmentGroup("no treatment-group records")
    if dataset.n_c == 0:
        raise NoControlGroup("no control-group records")
    if dataset.n_te == 0:
        raise NoCompliers("no exposed users in the treatment group")
    treat = dataset.z == 1
    itt = float(dataset.y[treat].mean() - dataset.y[~treat].mean())
    compliance = dataset.n_te / dataset.n_t
    return AttEstimate(
        method=AttMethod.EXPERIMENTAL,
        point=itt / compliance,
        n_used_te=dataset.n_te,
        n_used_tu=dataset.n_tu,
        diagnostics={"itt": itt, "compliance_rate": compliance,
                     "n_t": dataset.n_t, "n_c": dataset.n_c},
    )


def digm_att(dataset: StudyDataset) -> AttEstimate:
    """Difference in group means: mean(y | TE) - mean(y | TU)."""
    te, tu = _split_treatment(dataset)
    if dataset.n_te == 0:
        raise NoExposed("no treatment-exposed records")
    if dataset.n_tu == 0:
        raise NoUnexposed("no treatment-unexposed records")
    point = float(dataset.y[te].mean() - dataset.y[tu].mean())
    return AttEstimate(
        method=AttMethod.DIGM,
        point=point,
        n_used_te=dataset.n_te,
        n_used_tu=dataset.n_tu,
    )


def _matching_columns(dataset: StudyDataset, cfg: MatchingConfig) -> tuple[tuple[str, ...], np.ndarray]:
    names = cfg.covariates if cfg.covariates is not None else dataset.schema.matching_subset
    names = tuple(names)
    if not names:
        raise NonBinaryCovariate("no matching covariates configured")
    for n in names:
        if dataset.schema.kind_of(n) != "binary":
            raise NonBinaryCovariate(f"matching covariate {n!r} is not binary")
    return names, dataset.schema.indices_of(names)


def exact_matching_att(dataset: StudyDataset,
                       cfg: MatchingConfig = MatchingConfig()) -> AttEstimate:
    """Exact matching on binary covariates.

    Each exposed user's counterfactual is the mean outcome of unexposed
    users with identical values on the matching covariates; exposed users
    with an empty match set are dropped and the matched fraction reported.
    """
    te, tu = _split_treatment(dataset)
    if dataset.n_te == 0:
        raise NoExposed("no treatment-exposed records")
    if dataset.n_tu == 0:
        raise NoUnexposed("no treatment-unexposed records")
    names, cols = _matching_columns(dataset, cfg)

    # Encode each record's matching cell as an integer bit pattern.
    bits = dataset.x[:, cols].astype(np.int64)
    cell = np.zeros(len(dataset), dtype=np.int64)
    for j in range(len(cols)):
        cell = (cell << 1) | bits[:, j]
    n_cells = 1 << len(cols)

    tu_count = np.bincount(cell[tu], minlength=n_cells)
    tu_sum = np.bincount(cell[tu], weights=dataset.y[tu], minlength=n_cells)
    te_count = np.bincount(cell[te], minlength=n_cells)

    te_cells = cell[te]
    matched = tu_count[te_cells] > 0
    n_matched = int(matched.sum())
    if n_matched == 0:
        raise NoMatches("no exposed user has an unexposed match")
    counterfactual = tu_sum[te_cells[matched]] / tu_count[te_cells[matched]]
    point = float(np.mean(dataset.y[te][matched] - counterfactual))

    cells = {}
    for c in range(n_cells):
        if te_count[c] or tu_count[c]:
            key = format(c, f"0{len(cols)}b")
            cells[key] = {"n_te": int(te_count[c]), "n_tu": int(tu_count[c])}
    matched_cells = (te_count > 0) & (tu_count > 0)
    return AttEstimate(
        method=AttMethod.EXACT_MATCHING,
        point=point,
        n_used_te=n_matched,
        n_used_tu=int(tu_count[matched_cells].sum()),
        diagnostics={
            "matched_fraction": n_matched / dataset.n_te,
            "matching_covariates": list(names),
            "cells": cells,
        },
    )


def regression_att(dataset: StudyDataset,
                   covariates: Sequence[str] | None = None) -> AttEstimate:
    """Regression adjustment: fit a linear outcome model on the unexposed
    group, predict counterfactuals for the exposed group, average the
    differences."""
    te, tu = _split_treatment(dataset)
    if dataset.n_te == 0:
        raise NoExposed("no treatment-exposed records")
    if dataset.n_tu < 2:
        raise InsufficientUnexposed(
            f"need at least 2 treatment-unexposed records, have {dataset.n_tu}"
        )
    cols = (dataset.schema.indices_of(covariates) if covariates is not None
            else np.arange(dataset.schema.k))
    x_tu = dataset.x[tu][:, cols]
    y_tu = dataset.y[tu]
    model = fit_ols(x_tu, y_tu)

    residuals = y_tu - model.predict(x_tu)
    sst = float(np.sum((y_tu - y_tu.mean()) ** 2))
    ssr = float(np.sum(residuals**2))
    r2 = 1.0 if sst == 0.0 else 1.0 - ssr / sst

    point = float(np.mean(dataset.y[te] - model.predict(dataset.x[te][:, cols])))
    return AttEstimate(
        method=AttMethod.REGRESSION,
        point=point,
        n_used_te=dataset.n_te,
        n_used_tu=dataset.n_tu,
        diagnostics={"r_squared_tu": r2, "n_covariates": int(len(cols))},
    )


def iptw_weights(dataset: StudyDataset, cfg: IptwConfig = IptwConfig()):
    """Propensity model and winsorized TU weights used by the IPTW estimator.

    Fits the exposure propensity e(x) = P(w=1 | x, z=1) by logistic
    regression on the treatment group, assigns unexposed users the odds
    weight e/(1-e), and winsorizes those weights to the configured
    quantiles of the TU weight distribution (exposed users' weights are
    identically 1 and are left out of the quantiles).

    Returns:
        (model, weights, trim_lo, trim_hi) where ``weights`` aligns with the
        TU records in dataset order.
    """
    te, tu = _split_treatment(dataset)
    if dataset.n_te == 0:
        raise NoExposed("no treatment-exposed records")
    if dataset.n_tu == 0:
        raise NoUnexposed("no treatment-unexposed records")
    cols = (dataset.schema.indices_of(cfg.covariates) if cfg.covariates is not None
            else np.arange(dataset.schema.k))
    treat = dataset.z == 1
    model = fit_logistic(dataset.x[treat][:, cols], dataset.w[treat])

    e_tu = predict_prob(model, dataset.x[tu][:, cols])
    raw = e_tu / (1.0 - e_tu)
    lo = quantile(raw, cfg.trim_low_q)
    hi = quantile(raw, cfg.trim_high_q)
    return model, np.clip(raw, lo, hi), lo, hi


def iptw_att(dataset: StudyDataset, cfg: IptwConfig = IptwConfig()) -> AttEstimate:
    """Inverse probability of treatment weighting.

    ATT-hat = mean(y | TE) - weighted_mean(y | TU, odds weights), the
    self-normalized (Hajek) form, with TU weights winsorized to the
    configured quantiles.
    """
    te, tu = _split_treatment(dataset)
    model, weights, lo, hi = iptw_weights(dataset, cfg)
    y_tu = dataset.y[tu]
    point = float(dataset.y[te].mean()) - weighted_mean(y_tu, weights)
    ess = float(weights.sum() ** 2 / np.sum(weights**2))
    return AttEstimate(
        method=AttMethod.IPTW,
        point=point,
        n_used_te=dataset.n_te,
        n_used_tu=dataset.n_tu,
        diagnostics={
            "trim_low": lo,
            "trim_high": hi,
            "ess_tu": ess,
            "propensity_fit": {
                "iterations": model.report.iterations,
                "deviance": model.report.deviance,
                "converged": model.report.converged,
                "n_clamped": model.report.n_clamped,
            },
        },
    )


@dataclass(frozen=True)
class EstimatorSuite:
    """Shared configuration for dispatching any of the five estimators."""

    iptw: IptwConfig = IptwConfig()
    matching: MatchingConfig = MatchingConfig()
    regression_covariates: tuple[str, ...] | None = None

    def run(self, dataset: StudyDataset, method: AttMethod) -> AttEstimate:
        if method is AttMethod.EXPERIMENTAL:
            return experimental_att(dataset)
        if method is AttMethod.DIGM:
            return digm_att(dataset)
        if method is AttMethod.EXACT_MATCHING:
            return exact_matching_att(dataset, self.matching)
        if method is AttMethod.REGRESSION:
            return regression_att(dataset, self.regression_covariates)
        return iptw_att(dataset, self.iptw)


def estimate(dataset: StudyDataset, method: AttMethod,
             suite: EstimatorSuite = EstimatorSuite()) -> AttEstimate:
    """Run one estimator by method tag."""
    return suite.run(dataset, method)
