"""Training point selection: online max-variance, offline KMeans, random.

The online selector walks the candidate pool greedily, always measuring the
point whose posterior variance under the current GP is largest.  Rather than
refitting from scratch each round it extends the Cholesky factor by one row
per pick, which keeps the whole run at O(N * M^2); results match a from-
scratch refit to well below 1e-8.

All tie-breaks resolve to the lowest candidate index so runs are exactly
reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist

from .gpr import JITTER_LADDER, GprModel, optimize_hyperparameters
from .kernels import Kernel, format_kernel


class SelectionMethod(Enum):
    RANDOM = "random"
    ONLINE_MAP = "map"
    OFFLINE_KMEANS = "kmeans"

    @classmethod
    def parse(cls, text: str) -> "SelectionMethod":
        for method in cls:
            if text == method.value:
                return method
        raise ValueError(f"unknown selection method {text!r}")


@dataclass(frozen=True)
class SelectionPlan:
    """Ordered training indices chosen by one selection run."""

    method: SelectionMethod
    ordered_indices: tuple[int, ...]
    seed: int
    hyper_refit_period: int | None = None  # None = never
    kernel_text: str | None = None

    def __post_init__(self):
        if len(set(self.ordered_indices)) != len(self.ordered_indices):
            raise ValueError("selection plan indices must be distinct")

    def __len__(self) -> int:
        return len(self.ordered_indices)


def _validate(features: np.ndarray, m: int) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[0] < 1:
        raise ValueError("need a nonempty (N, d) candidate feature matrix")
    if not (1 <= m <= features.shape[0]):
        raise ValueError(f"m={m} out of range for {features.shape[0]} candidates")
    return features


def select_random(candidates: np.ndarray, m: int, seed: int) -> SelectionPlan:
    """Uniform sample without replacement (seeded Fisher-Yates prefix)."""
    candidates = _validate(candidates, m)
    n = candidates.shape[0]
    rng = np.random.default_rng(seed)
    idx = np.arange(n)
    for i in range(m):
        j = int(rng.integers(i, n))
        idx[i], idx[j] = idx[j], idx[i]
    return SelectionPlan(SelectionMethod.RANDOM, tuple(int(i) for i in idx[:m]), seed)


@dataclass
class KMeansState:
    """Lloyd's algorithm result on standardized features."""

    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    n_iters: int = 0
    inertia_history: list = field(default_factory=list)


def kmeans_cluster(features: np.ndarray, m: int, seed: int,
                   max_iters: int = 100, tol: float = 1e-6) -> KMeansState:
    """Lloyd iterations from farthest-point seeding.

    The first center is uniform by seed; each following center is the
    candidate farthest (min-distance) from the centers chosen so far.  Empty
    clusters are re-seeded with the point farthest from its own centroid.
    """
    X = _validate(features, m)
    n = X.shape[0]
    rng = np.random.default_rng(seed)

    first = int(rng.integers(n))
    chosen = [first]
    min_d2 = np.sum((X - X[first]) ** 2, axis=1)
    for _ in range(m - 1):
        scores = min_d2.copy()
        scores[chosen] = -np.inf  # never re-pick a seed, even among duplicates
        nxt = int(np.argmax(scores))
        chosen.append(nxt)
        min_d2 = np.minimum(min_d2, np.sum((X - X[nxt]) ** 2, axis=1))
    centroids = X[chosen].copy()

    assign = np.zeros(n, dtype=int)
    inertia_history: list[float] = []
    n_iters = 0
    for n_iters in range(1, max_iters + 1):
        d2 = cdist(X, centroids, "sqeuclidean")
        assign = np.argmin(d2, axis=1)  # ties: lowest cluster id
        # re-seed empty clusters at the currently worst-covered points
        counts = np.bincount(assign, minlength=m)
        if (counts == 0).any():
            own_d2 = d2[np.arange(n), assign].copy()
            for cid in np.flatnonzero(counts == 0):
                worst = int(np.argmax(own_d2))
                assign[worst] = cid
                own_d2[worst] = -np.inf
        new_centroids = centroids.copy()
        for cid in range(m):
            members = np.flatnonzero(assign == cid)
            if members.size:
                new_centroids[cid] = X[members].mean(axis=0)
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        inertia_history.append(float(np.sum((X - centroids[assign]) ** 2)))
        if shift < tol:
            break

    # final assignment against the final centroids keeps the nearest-centroid
    # invariant even when the loop exits on max_iters
    d2 = cdist(X, centroids, "sqeuclidean")
    assign = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(n), assign].sum())
    return KMeansState(centroids, assign, inertia, n_iters, inertia_history)


def select_offline_kmeans(candidates: np.ndarray, m: int, seed: int,
                          max_iters: int = 100, tol: float = 1e-6) -> SelectionPlan:
    """Cluster the pool into m groups and take the medoid of each, by cluster id."""
    X = _validate(candidates, m)
    state = kmeans_cluster(X, m, seed, max_iters, tol)
    picks = []
    for cid in range(m):
        members = np.flatnonzero(state.assignments == cid)
        if members.size == 0:
            # assignments can leave a cluster empty only after the final
            # reassignment; fall back to the nearest unpicked candidate
            free = np.setdiff1d(np.arange(X.shape[0]), picks, assume_unique=False)
            members = free
        d = np.linalg.norm(X[members] - state.centroids[cid], axis=1)
        picks.append(int(members[np.argmin(d)]))
    return SelectionPlan(SelectionMethod.OFFLINE_KMEANS, tuple(picks), seed)


def select_online_map(candidates: np.ndarray, m: int, kernel: Kernel, seed: int,
                      hyper_refit_period: int | None = None,
                      labels: np.ndarray | None = None,
                      jitter: float | None = None) -> SelectionPlan:
    """Greedy maximum-posterior-variance selection (sequential design).

    Starts from one uniformly random candidate, then repeatedly measures the
    candidate with the largest posterior variance under a GP conditioned on
    the points picked so far.  With ``hyper_refit_period=p`` (requires
    ``labels``) the kernel is re-optimized on the picked points at every p-th
    round; otherwise the supplied hyperparameters stay frozen and the chosen
    sequence is independent of any measured values.
    """
    X = _validate(candidates, m)
    n = X.shape[0]
    if hyper_refit_period is not None:
        if hyper_refit_period < 1:
            raise ValueError("hyper_refit_period must be a positive integer or None")
        if labels is None:
            raise ValueError("hyper_refit_period requires labels")
        labels = np.asarray(labels, dtype=float).ravel()
        if labels.shape[0] != n:
            raise ValueError(f"{labels.shape[0]} labels for {n} candidates")

    kernel_text = format_kernel(kernel)
    rng = np.random.default_rng(seed)
    first = int(rng.integers(n))

    diag_noisy = kernel.diag(X, include_noise=True)
    diag_clean = kernel.diag(X, include_noise=False)
    jitter_val = (JITTER_LADDER[0] * float(diag_noisy.mean())) if jitter is None else float(jitter)

    def fresh_state(chosen_idx):
        """Cholesky of the picked block and its solved cross-covariance rows."""
        model = GprModel.fit(X[chosen_idx], np.zeros(len(chosen_idx)), kernel, jitter_val)
        L_full = np.zeros((m, m))
        V_full = np.zeros((m, n))
        t = len(chosen_idx)
        L_full[:t, :t] = model.cholesky_factor
        V_full[:t] = solve_triangular(model.cholesky_factor, kernel.gram(X[chosen_idx], X),
                                      lower=True, check_finite=False)
        return L_full, V_full

    chosen = [first]
    mask = np.zeros(n, dtype=bool)
    mask[first] = True
    L, V = fresh_state(chosen)

    for t in range(1, m):
        if hyper_refit_period is not None and t % hyper_refit_period == 0:
            kernel = optimize_hyperparameters(X[chosen], labels[chosen], kernel,
                                              restarts=1, seed=seed, jitter=jitter_val)
            diag_noisy = kernel.diag(X, include_noise=True)
            diag_clean = kernel.diag(X, include_noise=False)
            L, V = fresh_state(chosen)

        var = diag_clean - np.einsum("ij,ij->j", V[:t], V[:t])
        var[mask] = -np.inf
        nxt = int(np.argmax(var))  # ties: lowest candidate index

        # rank-1 Cholesky extension with the new point
        c = V[:t, nxt].copy()
        d2 = diag_noisy[nxt] + jitter_val - float(c @ c)
        if d2 <= 0.0:
            chosen.append(nxt)
            mask[nxt] = True
            L, V = fresh_state(chosen)  # fall back to a full refit
            continue
        d = math.sqrt(d2)
        row = (kernel.gram(X[nxt:nxt + 1], X)[0] - c @ V[:t]) / d
        L[t, :t] = c
        L[t, t] = d
        V[t] = row
        chosen.append(nxt)
        mask[nxt] = True

    return SelectionPlan(SelectionMethod.ONLINE_MAP, tuple(chosen), seed,
                         hyper_refit_period, kernel_text)


# ---------------------------------------------------------------------------
# plan CSV


def plan_to_csv(plan: SelectionPlan) -> str:
    kernel = plan.kernel_text if plan.kernel_text else "-"
    period = "never" if plan.hyper_refit_period is None else str(plan.hyper_refit_period)
    lines = [
        f"# method={plan.method.value} seed={plan.seed} M={len(plan)} "
        f"hyper_refit_period={period} kernel={kernel}",
        "rank,candidate_index",
    ]
    lines += [f"{rank},{idx}" for rank, idx in enumerate(plan.ordered_indices)]
    return "\n".join(lines) + "\n"


def plan_from_csv(text: str) -> SelectionPlan:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ValueError("plan CSV must start with a '# method=...' comment line")
    # kernel text contains spaces, so peel it off before splitting the rest
    head, _, kernel_text = lines[0][1:].strip().partition(" kernel=")
    meta = {"kernel": kernel_text}
    for piece in head.split(" "):
        if "=" in piece:
            key, val = piece.split("=", 1)
            meta[key] = val
    if lines[1].strip() != "rank,candidate_index":
        raise ValueError("plan CSV missing 'rank,candidate_index' header")
    indices = []
    for ln in lines[2:]:
        rank_s, idx_s = ln.split(",")
        indices.append(int(idx_s))
        if int(rank_s) != len(indices) - 1:
            raise ValueError(f"plan ranks out of order near {ln!r}")
    period = meta.get("hyper_refit_period", "never")
    return SelectionPlan(
        method=SelectionMethod.parse(meta.get("method", "random")),
        ordered_indices=tuple(indices),
        seed=int(meta.get("seed", 0)),
        hyper_refit_period=None if period == "never" else int(period),
        kernel_text=None if meta["kernel"] in ("", "-") else meta["kernel"],
    )
