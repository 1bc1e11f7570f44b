"""Exact Gaussian process regression on RSRP residuals.

Fitting is a Cholesky factorization of the training Gram plus jitter;
prediction gives the posterior mean and the per-point posterior variance
(the full test covariance is never materialized).  The evidence
(log marginal likelihood) comes with analytic gradients in log
hyperparameter space, and :func:`optimize_hyperparameters` runs a bounded
multi-restart L-BFGS-B over them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .dataset import Dataset, FeatureScaler
from .kernels import Kernel, format_kernel, parse_kernel

# escalation ladder for the diagonal inflation, in units of mean Gram diagonal
JITTER_LADDER = (1e-8, 1e-6, 1e-4)

MODEL_FORMAT = "radiomap-gpr"
MODEL_VERSION = 1


class FitError(RuntimeError):
    """Cholesky factorization failed for every jitter level."""


@dataclass(frozen=True)
class PosteriorPrediction:
    """Posterior mean (dB) and clamped per-point variance (dB^2)."""

    mean: np.ndarray
    variance: np.ndarray


class GprModel:
    """Fitted GP: kernel, training set, Cholesky factor and weight vector."""

    def __init__(self, kernel: Kernel, train_features: np.ndarray, targets: np.ndarray,
                 prior_mean: float, jitter: float, cholesky_factor: np.ndarray,
                 weight_vector: np.ndarray):
        self.kernel = kernel
        self.train_features = train_features
        self.targets = targets
        self.prior_mean = prior_mean
        self.jitter = jitter
        self.cholesky_factor = cholesky_factor
        self.weight_vector = weight_vector

    @classmethod
    def fit(cls, train_features: np.ndarray, targets: np.ndarray, kernel: Kernel,
            jitter: float | None = None, prior_mean: float = 0.0) -> "GprModel":
        """Factorize K + jitter*I and solve for the weight vector.

        ``jitter=None`` starts the escalation ladder at 1e-8 of the mean Gram
        diagonal; an explicit value is tried first and escalated only on
        failure.  Raises :class:`FitError` when every level fails.
        """
        X = np.ascontiguousarray(np.asarray(train_features, dtype=float))
        y = np.asarray(targets, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError("need a nonempty (M, d) training feature matrix")
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"{X.shape[0]} features vs {y.shape[0]} targets")
        if jitter is not None and jitter < 0.0:
            raise ValueError("jitter must be >= 0")

        K = kernel.gram(X)
        mean_diag = float(np.mean(np.diag(K)))
        ladder = [level * mean_diag for level in JITTER_LADDER]
        if jitter is None:
            candidates = ladder
        else:
            candidates = [jitter] + [j for j in ladder if j > jitter]

        L = None
        used = 0.0
        for j in candidates:
            try:
                L = np.linalg.cholesky(K + j * np.eye(X.shape[0]))
                used = j
                break
            except np.linalg.LinAlgError:
                continue
        if L is None:
            raise FitError(
                f"Cholesky failed at every jitter level up to {candidates[-1]:.3e} "
                f"(mean diagonal {mean_diag:.3e}); training set is numerically singular"
            )

        resid = y - prior_mean
        alpha = cho_solve((L, True), resid, check_finite=False)
        gap = np.max(np.abs((K + used * np.eye(X.shape[0])) @ alpha - resid))
        if gap >= 1e-6 * (1.0 + np.max(np.abs(y), initial=0.0)):
            raise FitError(f"solve residual {gap:.3e} too large; Gram matrix ill-conditioned")
        return cls(kernel, X, y, prior_mean, used, L, alpha)

    @property
    def n_train(self) -> int:
        return self.train_features.shape[0]

    def predict(self, query_features: np.ndarray) -> PosteriorPrediction:
        """Posterior mean and variance of the latent residual at the queries.

        Variance excludes the white-noise term (it predicts the function, not
        a fresh noisy measurement) and is clamped at zero.
        """
        Xq = np.asarray(query_features, dtype=float)
        if Xq.ndim != 2 or Xq.shape[1] != self.train_features.shape[1]:
            raise ValueError(
                f"query dimension {Xq.shape} incompatible with training "
                f"dimension {self.train_features.shape[1]}"
            )
        Ks = self.kernel.gram(self.train_features, Xq)
        mean = self.prior_mean + Ks.T @ self.weight_vector
        V = solve_triangular(self.cholesky_factor, Ks, lower=True, check_finite=False)
        variance = self.kernel.diag(Xq, include_noise=False) - np.einsum("ij,ij->j", V, V)
        return PosteriorPrediction(mean=mean, variance=np.maximum(variance, 0.0))

    def predict_mean(self, query_features: np.ndarray) -> np.ndarray:
        """Posterior mean only; skips the triangular solve behind the variance."""
        Xq = np.asarray(query_features, dtype=float)
        if Xq.ndim != 2 or Xq.shape[1] != self.train_features.shape[1]:
            raise ValueError(
                f"query dimension {Xq.shape} incompatible with training "
                f"dimension {self.train_features.shape[1]}"
            )
        Ks = self.kernel.gram(self.train_features, Xq)
        return self.prior_mean + Ks.T @ self.weight_vector

    def log_marginal_likelihood(self) -> tuple[float, np.ndarray]:
        """Evidence and its gradient per free log hyperparameter."""
        resid = self.targets - self.prior_mean
        M = self.n_train
        value = (-0.5 * float(resid @ self.weight_vector)
                 - float(np.sum(np.log(np.diag(self.cholesky_factor))))
                 - 0.5 * M * math.log(2.0 * math.pi))
        grads = self.kernel.gradients(self.train_features)
        if not grads:
            return value, np.zeros(0)
        Kinv = cho_solve((self.cholesky_factor, True), np.eye(M), check_finite=False)
        alpha = self.weight_vector
        grad = np.array([0.5 * (alpha @ G @ alpha - np.sum(Kinv * G)) for G in grads])
        return value, grad


def optimize_hyperparameters(train_features: np.ndarray, targets: np.ndarray,
                             kernel_template: Kernel, restarts: int = 5, seed: int = 0,
                             jitter: float | None = None, prior_mean: float = 0.0,
                             max_iter: int = 200) -> Kernel:
    """Maximize the evidence over log hyperparameters with L-BFGS-B.

    The first start is the template itself; the remaining ``restarts - 1``
    starts are drawn log-uniformly within the bounds.  The returned kernel is
    never worse than the template (falls back to it if no start improves).
    Raises :class:`FitError` if every start fails to factorize.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    X = np.asarray(train_features, dtype=float)
    y = np.asarray(targets, dtype=float).ravel()
    bounds = kernel_template.theta_bounds
    if not bounds:
        return kernel_template

    BAD = 1e25

    def objective(theta):
        try:
            model = GprModel.fit(X, y, kernel_template.with_theta(theta), jitter, prior_mean)
        except FitError:
            return BAD, np.zeros(len(theta))
        value, grad = model.log_marginal_likelihood()
        if not np.isfinite(value):
            return BAD, np.zeros(len(theta))
        return -value, -grad

    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    starts = [kernel_template.theta]
    starts += [rng.uniform(lo, hi) for _ in range(restarts - 1)]

    best_theta = kernel_template.theta
    best_obj = objective(best_theta)[0]
    for start in starts:
        result = minimize(objective, start, jac=True, method="L-BFGS-B",
                          bounds=bounds, options={"maxiter": max_iter})
        if result.fun < best_obj:
            best_obj = result.fun
            best_theta = result.x
    if best_obj >= BAD:
        raise FitError("hyperparameter optimization failed: no start point factorized")
    return kernel_template.with_theta(best_theta)


def predict_rsrp_map(model: GprModel, dataset: Dataset, scaler: FeatureScaler) -> np.ndarray:
    """Recombine simulated RSRP with the predicted residual over all points."""
    features = scaler.transform(dataset.features())
    return dataset.gamma_sim + model.predict(features).mean


# ---------------------------------------------------------------------------
# model artifact


def save_model(model: GprModel, scaler: FeatureScaler, path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kernel": format_kernel(model.kernel),
        "prior_mean": model.prior_mean,
        "jitter": model.jitter,
        "train_features": model.train_features.tolist(),
        "targets": model.targets.tolist(),
        "alpha": model.weight_vector.tolist(),
        "scaler_mean": scaler.mean.tolist(),
        "scaler_std": scaler.std.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_model(path) -> tuple[GprModel, FeatureScaler]:
    """Rebuild the Cholesky factor and verify the stored weight vector."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a {MODEL_FORMAT} artifact: {path}")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported artifact version {doc.get('version')}")
    kernel = parse_kernel(doc["kernel"])
    X = np.array(doc["train_features"], dtype=float)
    y = np.array(doc["targets"], dtype=float)
    alpha = np.array(doc["alpha"], dtype=float)
    jitter = float(doc["jitter"])
    prior_mean = float(doc["prior_mean"])
    K = kernel.gram(X) + jitter * np.eye(X.shape[0])
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError as exc:
        raise FitError("stored training set no longer factorizes") from exc
    gap = np.max(np.abs(K @ alpha - (y - prior_mean)))
    if gap >= 1e-6 * (1.0 + np.max(np.abs(y), initial=0.0)):
        raise FitError(f"stored weight vector inconsistent (residual {gap:.3e})")
    model = GprModel(kernel, X, y, prior_mean, jitter, L, alpha)
    scaler = FeatureScaler(np.array(doc["scaler_mean"], dtype=float),
                           np.array(doc["scaler_std"], dtype=float))
    return model, scaler
