"""Reference interpolators: IDW, KNN, and ordinary kriging with a fitted
variogram.

All three consume the same standardized feature space and the same residual
targets as the GP scheme, so passing 3-D position features with raw RSRP
targets recovers plain direct interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.optimize import least_squares
from scipy.spatial.distance import cdist, pdist


class KnnWeighting(Enum):
    UNIFORM = "uniform"
    INVERSE_DISTANCE = "inverse_distance"


@dataclass(frozen=True)
class IdwConfig:
    power: float = 2.0
    epsilon: float = 1e-12

    def __post_init__(self):
        if self.power <= 0:
            raise ValueError("power must be positive")


@dataclass(frozen=True)
class KnnConfig:
    k: int = 5
    weighting: KnnWeighting = KnnWeighting.INVERSE_DISTANCE
    epsilon: float = 1e-12

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


class VariogramKind(Enum):
    EXPONENTIAL = "exponential"
    SPHERICAL = "spherical"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class VariogramModel:
    """Semivariance model gamma(d); also doubles as the fit configuration.

    ``range_`` is the e-folding scale for the exponential/gaussian kinds and
    the hard range for the spherical kind.  gamma(0) = 0 exactly; the nugget
    is the d -> 0+ limit.
    """

    kind: VariogramKind = VariogramKind.EXPONENTIAL
    nugget: float = 0.0
    sill: float = 1.0
    range_: float = 1.0
    bin_count: int = 15

    def __post_init__(self):
        if self.nugget < 0 or self.sill <= 0 or self.range_ <= 0:
            raise ValueError("need nugget >= 0, sill > 0, range > 0")
        if self.bin_count < 2:
            raise ValueError("bin_count must be >= 2")

    def __call__(self, d: np.ndarray) -> np.ndarray:
        return semivariance(self, d)


def semivariance(model: VariogramModel, d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if model.kind is VariogramKind.EXPONENTIAL:
        struct = 1.0 - np.exp(-d / model.range_)
    elif model.kind is VariogramKind.GAUSSIAN:
        struct = 1.0 - np.exp(-((d / model.range_) ** 2))
    else:
        r = np.minimum(d / model.range_, 1.0)
        struct = 1.5 * r - 0.5 * r ** 3
    return np.where(d > 0.0, model.nugget + model.sill * struct, 0.0)


def idw_predict(train_features: np.ndarray, train_targets: np.ndarray,
                query_features: np.ndarray, config: IdwConfig = IdwConfig()) -> np.ndarray:
    """Shepard interpolation with weights d^-p; exact at (near-)zero distance."""
    X, y, Q = _check_sets(train_features, train_targets, query_features)
    d = cdist(Q, X)
    with np.errstate(divide="ignore", over="ignore"):
        w = np.maximum(d, config.epsilon) ** (-config.power)
    pred = (w @ y) / w.sum(axis=1)
    nearest = np.argmin(d, axis=1)
    hit = d[np.arange(Q.shape[0]), nearest] <= config.epsilon
    pred[hit] = y[nearest[hit]]
    return pred


def knn_predict(train_features: np.ndarray, train_targets: np.ndarray,
                query_features: np.ndarray, config: KnnConfig = KnnConfig()) -> np.ndarray:
    """Weighted mean over the k nearest training points (stable tie order)."""
    X, y, Q = _check_sets(train_features, train_targets, query_features)
    if config.k > X.shape[0]:
        raise ValueError(f"k={config.k} exceeds {X.shape[0]} training points")
    d = cdist(Q, X)
    order = np.argsort(d, axis=1, kind="stable")[:, :config.k]
    dk = np.take_along_axis(d, order, axis=1)
    yk = y[order]
    if config.weighting is KnnWeighting.UNIFORM:
        return yk.mean(axis=1)
    w = 1.0 / np.maximum(dk, config.epsilon)
    return (w * yk).sum(axis=1) / w.sum(axis=1)


def empirical_variogram(train_features: np.ndarray, train_targets: np.ndarray,
                        bin_count: int = 15) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Binned semivariances up to half the maximum pairwise distance.

    Returns (bin centers, mean semivariance per bin, pair counts); empty bins
    are dropped.
    """
    X, y, _ = _check_sets(train_features, train_targets, train_features)
    d = pdist(X)
    dmax = float(d.max(initial=0.0))
    if dmax <= 0.0:
        raise ValueError("all training points coincide; variogram undefined")
    iy, jy = np.triu_indices(X.shape[0], k=1)
    sv = 0.5 * (y[iy] - y[jy]) ** 2
    cutoff = dmax / 2.0
    keep = d <= cutoff
    edges = np.linspace(0.0, cutoff, bin_count + 1)
    which = np.clip(np.digitize(d[keep], edges) - 1, 0, bin_count - 1)
    counts = np.bincount(which, minlength=bin_count).astype(float)
    sums = np.bincount(which, weights=sv[keep], minlength=bin_count)
    centers = 0.5 * (edges[:-1] + edges[1:])
    nonempty = counts > 0
    return centers[nonempty], sums[nonempty] / counts[nonempty], counts[nonempty]


def fit_variogram(train_features: np.ndarray, train_targets: np.ndarray,
                  config: VariogramModel = VariogramModel()) -> VariogramModel:
    """Weighted least-squares fit of (nugget, sill, range) to the empirical
    variogram; weights are per-bin pair counts.  Needs at least 10 points.
    """
    X = np.asarray(train_features, dtype=float)
    if X.shape[0] < 10:
        raise ValueError(
            f"variogram fit needs at least 10 training points, got {X.shape[0]}"
        )
    centers, gamma_hat, counts = empirical_variogram(train_features, train_targets,
                                                     config.bin_count)
    gmax = float(gamma_hat.max(initial=0.0))
    dspan = float(centers.max())
    sill_floor = max(1e-10, 1e-8 * gmax)
    lo = np.array([0.0, sill_floor, 1e-6 * dspan])
    hi = np.array([max(gmax, sill_floor) + sill_floor, max(10.0 * gmax, 1e-6), 10.0 * dspan])
    x0 = np.clip(
        np.array([0.5 * gamma_hat[0], max(gmax - 0.5 * gamma_hat[0], sill_floor), dspan / 3.0]),
        lo, hi,
    )
    sw = np.sqrt(counts)

    def residuals(p):
        model = replace(config, nugget=p[0], sill=p[1], range_=p[2])
        return sw * (semivariance(model, centers) - gamma_hat)

    result = least_squares(residuals, x0, bounds=(lo, hi))
    nugget, sill, range_ = result.x
    return replace(config, nugget=float(nugget), sill=float(sill), range_=float(range_))


def kriging_predict(train_features: np.ndarray, train_targets: np.ndarray,
                    variogram: VariogramModel,
                    query_features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ordinary kriging via the augmented semivariance system.

    Solves one LU factorization for all queries; the Lagrange row pins the
    weight sum at 1.  Returns (means, clamped kriging variances).
    """
    X, y, Q = _check_sets(train_features, train_targets, query_features)
    m = X.shape[0]
    gamma = semivariance(variogram, cdist(X, X))
    ones = np.ones(m)

    b = np.empty((m + 1, Q.shape[0]))
    b[:m] = semivariance(variogram, cdist(X, Q))
    b[m] = 1.0

    scale = max(float(np.abs(gamma).max(initial=0.0)), 1.0)
    last_err = None
    for jitter in (0.0, 1e-10, 1e-8, 1e-6):
        A = np.empty((m + 1, m + 1))
        A[:m, :m] = gamma + jitter * scale * np.eye(m)
        A[:m, m] = 1.0
        A[m, :m] = 1.0
        A[m, m] = 0.0
        try:
            solution = lu_solve(lu_factor(A), b)
        except (np.linalg.LinAlgError, ValueError) as exc:
            last_err = exc
            continue
        gap = np.max(np.abs(A @ solution - b))
        if not np.isfinite(gap) or gap > 1e-6 * scale:
            last_err = RuntimeError(f"solve residual {gap:.3e}")
            continue
        w = solution[:m]
        lam = solution[m]
        means = w.T @ y
        variances = np.einsum("ij,ij->j", w, b[:m]) + lam
        return means, np.maximum(variances, 0.0)
    raise RuntimeError(f"kriging system singular even with jitter: {last_err}")


def _check_sets(train_features, train_targets, query_features):
    X = np.asarray(train_features, dtype=float)
    y = np.asarray(train_targets, dtype=float).ravel()
    Q = np.asarray(query_features, dtype=float)
    if Q.ndim == 1:
        Q = Q.reshape(1, -1)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("need a nonempty (M, d) training feature matrix")
    if y.shape[0] != X.shape[0]:
        raise ValueError(f"{X.shape[0]} features vs {y.shape[0]} targets")
    if Q.shape[1] != X.shape[1]:
        raise ValueError(f"query dimension {Q.shape[1]} != training dimension {X.shape[1]}")
    return X, y, Q
