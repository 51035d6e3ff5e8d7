"""Self-contained numerical routines used by the estimators.

Ordinary least squares and IRLS logistic regression, both with an
intercept, plus the quantile and weighted-mean primitives. Features are
standardized internally (zero mean, unit sd, fit-set statistics) before
solving, because the covariate schemas this library sees mix binary flags
with heavy-tailed counts; predictions are invariant to that choice.
Zero-variance columns are passed through unstandardized. The normal
equations get a tiny ridge (1e-10 * trace/k on the diagonal) only when the
Gram matrix is not positive definite, which gives a deterministic
tie-break for collinear covariates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AllOneClass,
    DegenerateDesign,
    EmptyInput,
    ShapeMismatch,
    ZeroWeightSum,
)

PROB_CLAMP = 1e-6          # predicted probabilities live in [1e-6, 1 - 1e-6]
IRLS_TOL = 1e-8            # deviance-change stopping rule
IRLS_MAX_ITER = 100
IRLS_MAX_HALVINGS = 30
RIDGE_SCALE = 1e-10


@dataclass(frozen=True)
class Standardization:
    """Per-feature shift/scale applied before solving. scale=1, shift=0 for
    zero-variance columns (passed through raw)."""

    shift: np.ndarray
    scale: np.ndarray

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (features - self.shift) / self.scale


@dataclass(frozen=True)
class LinearModel:
    """OLS fit: coefficients in standardized feature space, intercept first."""

    coefficients: np.ndarray
    standardization: Standardization

    @property
    def k(self) -> int:
        return len(self.coefficients) - 1

    def predict(self, features: np.ndarray) -> np.ndarray:
        features = _as_matrix(features, self.k)
        xs = self.standardization.apply(features)
        return self.coefficients[0] + xs @ self.coefficients[1:]

    def raw_coefficients(self) -> np.ndarray:
        """Equivalent coefficients on the unstandardized features."""
        return _destandardize(self.coefficients, self.standardization)


@dataclass(frozen=True)
class ConvergenceReport:
    iterations: int
    deviance: float
    converged: bool
    n_clamped: int
    deviance_path: tuple[float, ...]


@dataclass(frozen=True)
class LogisticModel:
    """IRLS logistic fit: coefficients in standardized space, intercept first."""

    coefficients: np.ndarray
    standardization: Standardization
    report: ConvergenceReport

    @property
    def k(self) -> int:
        return len(self.coefficients) - 1

    def linear_predictor(self, features: np.ndarray) -> np.ndarray:
        features = _as_matrix(features, self.k)
        xs = self.standardization.apply(features)
        return self.coefficients[0] + xs @ self.coefficients[1:]

    def raw_coefficients(self) -> np.ndarray:
        return _destandardize(self.coefficients, self.standardization)


def _as_matrix(features, k: int | None = None) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features.reshape(len(features), 1)
    if features.ndim != 2:
        raise ShapeMismatch(f"feature array must be 2-D, got ndim={features.ndim}")
    if k is not None and features.shape[1] != k:
        raise ShapeMismatch(f"model expects {k} features, got {features.shape[1]}")
    return features


def _standardize_fit(features: np.ndarray) -> Standardization:
    mean = features.mean(axis=0) if features.size else np.zeros(features.shape[1])
    sd = features.std(axis=0) if features.size else np.ones(features.shape[1])
    shift = np.where(sd > 0, mean, 0.0)
    scale = np.where(sd > 0, sd, 1.0)
    return Standardization(shift=shift, scale=scale)


def _destandardize(coefficients: np.ndarray, std: Standardization) -> np.ndarray:
    slopes = coefficients[1:] / std.scale
    intercept = coefficients[0] - np.sum(slopes * std.shift)
    return np.concatenate(([intercept], slopes))


def _solve_normal(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve gram @ beta = rhs, adding a tiny ridge if gram is not PD."""
    try:
        np.linalg.cholesky(gram)
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        pass
    m = gram.shape[0]
    ridged = gram + np.eye(m) * (RIDGE_SCALE * np.trace(gram) / m)
    try:
        np.linalg.cholesky(ridged)
        return np.linalg.solve(ridged, rhs)
    except np.linalg.LinAlgError:
        raise DegenerateDesign("normal equations unsolvable even with ridge") from None


def fit_ols(features: np.ndarray, targets: np.ndarray) -> LinearModel:
    """Least-squares fit with intercept via the normal equations.

    Reproduces the targets exactly (up to roundoff) whenever an exact
    linear fit exists; falls back to a ridged solve on singular designs.
    """
    features = _as_matrix(features)
    targets = np.asarray(targets, dtype=np.float64)
    if len(features) != len(targets):
        raise ShapeMismatch("features and targets differ in length")
    if len(targets) == 0:
        raise EmptyInput("at least one observation required")
    std = _standardize_fit(features)
    design = np.column_stack([np.ones(len(targets)), std.apply(features)])
    beta = _solve_normal(design.T @ design, design.T @ targets)
    return LinearModel(coefficients=beta, standardization=std)


def sigmoid(eta: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    eta = np.asarray(eta, dtype=np.float64)
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    expe = np.exp(eta[~pos])
    out[~pos] = expe / (1.0 + expe)
    return out


def _clamped_probs(design: np.ndarray, beta: np.ndarray) -> np.ndarray:
    return np.clip(sigmoid(design @ beta), PROB_CLAMP, 1.0 - PROB_CLAMP)


def _deviance(labels: np.ndarray, probs: np.ndarray) -> float:
    return float(-2.0 * np.sum(labels * np.log(probs) + (1 - labels) * np.log1p(-probs)))


def fit_logistic(features: np.ndarray, labels: np.ndarray) -> LogisticModel:
    """Bernoulli MLE with intercept via iteratively reweighted least squares.

    Stops when the deviance change drops below 1e-8 or after 100
    iterations, halving the Newton step (up to 30 times) whenever it fails
    to keep the deviance from increasing. Probabilities are clamped to
    [1e-6, 1 - 1e-6] throughout, which floors the IRLS weights; separable
    data therefore terminates with probabilities pinned at the clamp and
    ``converged=False`` in the report. Non-convergence is not an error.

    Raises:
        AllOneClass: All labels identical.
    """
    features = _as_matrix(features)
    labels = np.asarray(labels, dtype=np.float64)
    if len(features) != len(labels):
        raise ShapeMismatch("features and labels differ in length")
    if len(labels) == 0:
        raise EmptyInput("at least one observation required")
    if not np.isin(labels, (0.0, 1.0)).all():
        raise ShapeMismatch("labels must be 0 or 1")
    pbar = float(labels.mean())
    if pbar == 0.0 or pbar == 1.0:
        raise AllOneClass("labels are constant; logistic MLE undefined")

    std = _standardize_fit(features)
    design = np.column_stack([np.ones(len(labels)), std.apply(features)])
    beta = np.zeros(design.shape[1])
    beta[0] = np.log(pbar / (1.0 - pbar))

    probs = _clamped_probs(design, beta)
    deviance = _deviance(labels, probs)
    path = [deviance]
    converged = False
    iterations = 0

    for iterations in range(1, IRLS_MAX_ITER + 1):
        weights = probs * (1.0 - probs)
        gram = design.T @ (weights[:, None] * design)
        score = design.T @ (labels - probs)
        step = _solve_normal(gram, score)

        accepted = False
        for _ in range(IRLS_MAX_HALVINGS + 1):
            candidate = beta + step
            cand_probs = _clamped_probs(design, candidate)
            cand_dev = _deviance(labels, cand_probs)
            if cand_dev <= deviance:
                accepted = True
                break
            step = step / 2.0
        if not accepted:
            break

        change = deviance - cand_dev
        beta, probs, deviance = candidate, cand_probs, cand_dev
        path.append(deviance)
        if change < IRLS_TOL:
            converged = True
            break

    n_clamped = int(np.sum((probs <= PROB_CLAMP) | (probs >= 1.0 - PROB_CLAMP)))
    report = ConvergenceReport(
        iterations=iterations,
        deviance=deviance,
        converged=converged and n_clamped == 0,
        n_clamped=n_clamped,
        deviance_path=tuple(path),
    )
    return LogisticModel(coefficients=beta, standardization=std, report=report)


def predict_prob(model: LogisticModel, features: np.ndarray) -> np.ndarray:
    """Exposure probabilities, clamped to [1e-6, 1 - 1e-6]."""
    return np.clip(sigmoid(model.linear_predictor(features)),
                   PROB_CLAMP, 1.0 - PROB_CLAMP)


def log_likelihood(model: LogisticModel, features: np.ndarray,
                   labels: np.ndarray) -> float:
    """Exact Bernoulli log-likelihood at the model's coefficients (no clamp)."""
    labels = np.asarray(labels, dtype=np.float64)
    eta = model.linear_predictor(features)
    if len(eta) != len(labels):
        raise ShapeMismatch("features and labels differ in length")
    return float(np.sum(labels * eta - np.logaddexp(0.0, eta)))


def log_likelihood_gradient(model: LogisticModel, features: np.ndarray,
                            labels: np.ndarray) -> np.ndarray:
    """Gradient of the Bernoulli log-likelihood w.r.t. the model coefficients
    (standardized space, intercept first)."""
    features = _as_matrix(features, model.k)
    labels = np.asarray(labels, dtype=np.float64)
    if len(features) != len(labels):
        raise ShapeMismatch("features and labels differ in length")
    design = np.column_stack([np.ones(len(labels)), model.standardization.apply(features)])
    probs = sigmoid(design @ model.coefficients)
    return design.T @ (labels - probs)


def quantile(values: np.ndarray, q: float) -> float:
    """Linear-interpolation quantile: with sorted v[0..m-1] and position
    p = q*(m-1), returns v[floor p] + frac(p) * (v[floor p + 1] - v[floor p])."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptyInput("quantile of empty vector")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    v = np.sort(values)
    m = v.size
    p = q * (m - 1)
    lo = int(np.floor(p))
    if lo >= m - 1:
        return float(v[m - 1])
    frac = p - lo
    return float(v[lo] + frac * (v[lo + 1] - v[lo]))


def weighted_mean(values: np.ndarray, weights: np.ndarray) -> float:
    """Sum(w*y) / Sum(w) with non-negative weights."""
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if values.shape != weights.shape:
        raise ShapeMismatch("values and weights differ in length")
    if (weights < 0).any():
        raise ValueError("weights must be non-negative")
    total = weights.sum()
    if total <= 0:
        raise ZeroWeightSum("weights sum to zero")
    return float((values * weights).sum() / total)
