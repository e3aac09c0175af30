"""
Novelty scorers
Distance-to-centroid, nearest-neighbour, isolation forest, one-class SVM and
local outlier factor scores over a population of spectra
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field
from scipy.spatial.distance import cdist

from ..config import get_settings
from ..data.models import GridDataset
from ..exceptions import (
    ConvergenceError,
    DimensionError,
    InputError,
    InsufficientPointsError,
    ParameterError,
    ResourceCapError,
)

logger = logging.getLogger(__name__)


class NoveltyMethod(str, Enum):
    """Available novelty scorers"""

    DTC = "dtc"
    NN = "nn"
    IF = "if"
    OCSVM = "ocsvm"
    LOF = "lof"


PAIRWISE_METHODS = (NoveltyMethod.NN, NoveltyMethod.LOF, NoveltyMethod.OCSVM)


class NoveltyConfig(BaseModel):
    """Scorer choice and its parameters; parameters of other methods are ignored"""

    method: NoveltyMethod = Field(default=NoveltyMethod.IF, description="Scorer")
    k: int = Field(default=5, ge=1, description="Neighbour count (nn, lof)")
    n_trees: int = Field(default=100, ge=1, description="Isolation trees (if)")
    subsample: Optional[int] = Field(
        default=None, ge=2, description="Subsample size psi (if); default min(256, n)"
    )
    nu: float = Field(default=0.1, gt=0.0, le=1.0, description="Outlier fraction bound (ocsvm)")
    gamma: Optional[float] = Field(
        default=None, gt=0.0, description="RBF width (ocsvm); default 1/(d·var(X))"
    )
    tol: float = Field(default=1e-10, gt=0.0, description="KKT gap tolerance (ocsvm)")
    max_iter: int = Field(default=100000, ge=1, description="SMO iteration cap (ocsvm)")
    seed: int = Field(default=0, description="Isolation forest seed")
    normalize: bool = Field(default=True, description="Min-max scores to [0, 1]")
    whiten: bool = Field(default=False, description="Standardize columns before scoring")


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionError(f"Expected an n x d matrix, got shape {X.shape}")
    if X.shape[0] < 1:
        raise InsufficientPointsError("Cannot score an empty population")
    if not np.all(np.isfinite(X)):
        raise InputError("Novelty input contains non-finite values")
    return X


def _neighbour_distances(X: np.ndarray) -> np.ndarray:
    """Pairwise Euclidean distances with the diagonal set to +inf"""
    d = cdist(X, X)
    np.fill_diagonal(d, np.inf)
    return d


def _check_k(n: int, k: int) -> None:
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if n <= k:
        raise InsufficientPointsError(f"Need more than k={k} points, got {n}")


def min_max(scores: np.ndarray) -> np.ndarray:
    """Rescale to [0, 1]; a constant vector maps to zeros"""
    scores = np.asarray(scores, dtype=np.float64)
    lo, hi = float(np.min(scores)), float(np.max(scores))
    if not hi > lo:
        return np.zeros_like(scores)
    return (scores - lo) / (hi - lo)


def dtc_scores(X) -> np.ndarray:
    """Euclidean distance of every row to the population mean"""
    X = _as_matrix(X)
    return np.linalg.norm(X - X.mean(axis=0), axis=1)


def knn_scores(X, k: int = 5) -> np.ndarray:
    """Mean distance to the k nearest other rows"""
    X = _as_matrix(X)
    _check_k(X.shape[0], k)
    d = _neighbour_distances(X)
    nearest = np.sort(np.partition(d, k - 1, axis=1)[:, :k], axis=1)
    return nearest.mean(axis=1)


# Isolation forest


@lru_cache(maxsize=None)
def _harmonic(m: int) -> float:
    if m < 1:
        return 0.0
    return float(np.sum(1.0 / np.arange(1, m + 1, dtype=np.float64)))


def average_path_length(m: int) -> float:
    """c(m): expected unsuccessful-search depth in a BST of m items"""
    if m <= 1:
        return 0.0
    return 2.0 * _harmonic(m - 1) - 2.0 * (m - 1) / m


@dataclass
class _IsolationNode:
    size: int
    attr: Optional[int] = None
    value: float = 0.0
    left: Optional["_IsolationNode"] = None
    right: Optional["_IsolationNode"] = None


def _grow(X: np.ndarray, depth: int, limit: int, rng: np.random.Generator) -> _IsolationNode:
    node = _IsolationNode(size=X.shape[0])
    if depth >= limit or X.shape[0] <= 1:
        return node

    lo, hi = X.min(axis=0), X.max(axis=0)
    splittable = np.flatnonzero(hi > lo)
    if splittable.size == 0:
        return node

    attr = int(splittable[rng.integers(splittable.size)])
    value = float(rng.uniform(lo[attr], hi[attr]))
    if value <= lo[attr]:
        value = 0.5 * (lo[attr] + hi[attr])

    goes_left = X[:, attr] < value
    node.attr = attr
    node.value = value
    node.left = _grow(X[goes_left], depth + 1, limit, rng)
    node.right = _grow(X[~goes_left], depth + 1, limit, rng)
    return node


def _path_lengths(
    node: _IsolationNode, X: np.ndarray, rows: np.ndarray, depth: int, out: np.ndarray
) -> None:
    if node.attr is None:
        out[rows] = depth + average_path_length(node.size)
        return
    goes_left = X[rows, node.attr] < node.value
    if np.any(goes_left):
        _path_lengths(node.left, X, rows[goes_left], depth + 1, out)
    if not np.all(goes_left):
        _path_lengths(node.right, X, rows[~goes_left], depth + 1, out)


def iforest_scores(
    X,
    n_trees: int = 100,
    subsample: Optional[int] = None,
    seed: int = 0,
    threads: int = 1,
) -> np.ndarray:
    """
    Isolation forest anomaly scores 2^(-E[h(x)] / c(psi)).

    Args:
        X: n x d population, n >= 2
        n_trees: Number of isolation trees
        subsample: Rows per tree (psi); defaults to min(256, n)
        seed: Tree t draws from default_rng([seed, t])
        threads: Worker threads for tree construction

    Returns:
        Scores in (0, 1]; higher is more isolated
    """
    X = _as_matrix(X)
    n = X.shape[0]
    if n < 2:
        raise InsufficientPointsError(f"Isolation forest needs >= 2 points, got {n}")
    if n_trees < 1:
        raise ParameterError(f"n_trees must be >= 1, got {n_trees}")
    psi = min(256, n) if subsample is None else int(subsample)
    if psi < 2:
        raise ParameterError(f"Subsample size must be >= 2, got {psi}")
    if psi > n:
        raise ParameterError(f"Subsample size {psi} exceeds population {n}")

    limit = int(np.ceil(np.log2(psi)))
    all_rows = np.arange(n)

    def tree_depths(t: int) -> np.ndarray:
        rng = np.random.default_rng([seed, t])
        sample = rng.choice(n, size=psi, replace=False)
        root = _grow(X[sample], 0, limit, rng)
        depths = np.empty(n, dtype=np.float64)
        _path_lengths(root, X, all_rows, 0, depths)
        return depths

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        per_tree: List[np.ndarray] = list(pool.map(tree_depths, range(n_trees)))

    total = np.zeros(n, dtype=np.float64)
    for depths in per_tree:
        total += depths
    mean_depth = total / n_trees
    return np.power(2.0, -mean_depth / average_path_length(psi))


# One-class SVM


@dataclass
class OneClassSVMFit:
    """Dual solution of a nu-one-class SVM"""

    alpha: np.ndarray
    rho: float
    gradient: np.ndarray
    objective: float
    kkt_gap: float
    n_iter: int
    gamma: float


def default_gamma(X: np.ndarray) -> float:
    variance = float(np.var(X))
    if variance <= 0.0:
        return 1.0
    return 1.0 / (X.shape[1] * variance)


def rbf_gram(X: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-gamma * cdist(X, X, "sqeuclidean"))


def fit_one_class_svm(
    X,
    nu: float = 0.1,
    gamma: Optional[float] = None,
    tol: float = 1e-10,
    max_iter: int = 100000,
) -> OneClassSVMFit:
    """
    Solve min ½αᵀQα s.t. 0 <= α <= 1/(νn), Σα = 1 by SMO.

    The working pair is the maximal violating pair; iteration stops when the
    violation gap drops to tol.
    """
    X = _as_matrix(X)
    n = X.shape[0]
    if n < 2:
        raise InsufficientPointsError(f"One-class SVM needs >= 2 points, got {n}")
    if not 0.0 < nu <= 1.0:
        raise ParameterError(f"nu must be in (0, 1], got {nu}")
    gamma = default_gamma(X) if gamma is None else float(gamma)
    if gamma <= 0:
        raise ParameterError(f"gamma must be > 0, got {gamma}")

    Q = rbf_gram(X, gamma)
    C = 1.0 / (nu * n)
    eps = 1e-12 * C

    alpha = np.zeros(n, dtype=np.float64)
    n_full = min(n, int(np.floor(nu * n)))
    alpha[:n_full] = C
    if n_full < n:
        alpha[n_full] = max(0.0, 1.0 - n_full * C)
    G = Q @ alpha

    gap = np.inf
    iteration = 0
    for iteration in range(1, max_iter + 1):
        can_rise = alpha < C - eps
        can_fall = alpha > eps
        G_up = np.where(can_rise, G, np.inf)
        G_low = np.where(can_fall, G, -np.inf)
        i = int(np.argmin(G_up))
        j = int(np.argmax(G_low))
        gap = float(G_low[j] - G_up[i])
        if gap <= tol:
            break

        eta = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
        step = gap / max(eta, 1e-12)
        step = min(step, C - alpha[i], alpha[j])
        alpha[i] += step
        alpha[j] -= step
        G += step * (Q[:, i] - Q[:, j])
    else:
        raise ConvergenceError(
            f"One-class SVM did not converge in {max_iter} iterations", gap
        )

    free = (alpha > eps) & (alpha < C - eps)
    if np.any(free):
        rho = float(np.mean(G[free]))
    else:
        at_upper = alpha >= C - eps
        at_lower = alpha <= eps
        upper = float(np.max(G[at_upper])) if np.any(at_upper) else None
        lower = float(np.min(G[at_lower])) if np.any(at_lower) else None
        if upper is None:
            rho = lower
        elif lower is None:
            rho = upper
        else:
            rho = 0.5 * (upper + lower)

    return OneClassSVMFit(
        alpha=alpha,
        rho=rho,
        gradient=G,
        objective=0.5 * float(alpha @ G),
        kkt_gap=max(gap, 0.0),
        n_iter=iteration,
        gamma=gamma,
    )


def ocsvm_scores(
    X,
    nu: float = 0.1,
    gamma: Optional[float] = None,
    tol: float = 1e-10,
    max_iter: int = 100000,
) -> np.ndarray:
    """Negated one-class SVM decision function at the training rows"""
    fit = fit_one_class_svm(X, nu=nu, gamma=gamma, tol=tol, max_iter=max_iter)
    return fit.rho - fit.gradient


# Local outlier factor


def _k_distances(X: np.ndarray, d: np.ndarray, k: int) -> np.ndarray:
    """
    Distance to the k-th nearest neighbour per row.

    Coincident points share one position and count once; equidistant points
    at different positions count separately. With fewer than k other
    positions the farthest one is used, and a fully coincident population
    gets 0.
    """
    n = X.shape[0]
    _, first, inverse = np.unique(X, axis=0, return_index=True, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    if first.size == 1:
        return np.zeros(n)

    to_positions = d[:, first].copy()
    to_positions[np.arange(n), inverse] = np.inf
    ordered = np.sort(to_positions, axis=1)
    return ordered[:, min(k, first.size - 1) - 1]


def lof_scores(X, k: int = 5) -> np.ndarray:
    """Local outlier factor; about 1 inside clusters, larger for outliers"""
    X = _as_matrix(X)
    n = X.shape[0]
    _check_k(n, k)

    d = _neighbour_distances(X)
    kdist = _k_distances(X, d, k)
    neighbours = d <= kdist[:, None]
    counts = neighbours.sum(axis=1)

    reach = np.where(neighbours, np.maximum(kdist[None, :], d), 0.0)
    mean_reach = reach.sum(axis=1) / counts
    with np.errstate(divide="ignore"):
        lrd = 1.0 / mean_reach

    scores = np.empty(n, dtype=np.float64)
    for i in range(n):
        neighbour_lrd = lrd[neighbours[i]]
        if np.isinf(lrd[i]):
            scores[i] = 1.0 if np.all(np.isinf(neighbour_lrd)) else 0.0
        else:
            scores[i] = float(np.mean(neighbour_lrd)) / lrd[i]
    return scores


def _whiten(X: np.ndarray) -> np.ndarray:
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return (X - X.mean(axis=0)) / std


def score(X, cfg: NoveltyConfig, threads: int = 1) -> np.ndarray:
    """Score a population with the configured method"""
    X = _as_matrix(X)
    if cfg.whiten:
        X = _whiten(X)

    if cfg.method == NoveltyMethod.DTC:
        scores = dtc_scores(X)
    elif cfg.method == NoveltyMethod.NN:
        scores = knn_scores(X, cfg.k)
    elif cfg.method == NoveltyMethod.IF:
        scores = iforest_scores(
            X, n_trees=cfg.n_trees, subsample=cfg.subsample, seed=cfg.seed, threads=threads
        )
    elif cfg.method == NoveltyMethod.OCSVM:
        scores = ocsvm_scores(X, nu=cfg.nu, gamma=cfg.gamma, tol=cfg.tol, max_iter=cfg.max_iter)
    elif cfg.method == NoveltyMethod.LOF:
        scores = lof_scores(X, cfg.k)
    else:
        raise ParameterError(f"Unknown novelty method: {cfg.method}")

    return min_max(scores) if cfg.normalize else scores


def novelty_map(
    ds: GridDataset,
    cfg: NoveltyConfig,
    threads: int = 1,
    pairwise_cap: Optional[int] = None,
) -> np.ndarray:
    """
    Score every spectrum of the grid as one population.

    Args:
        ds: Dataset
        cfg: Scorer configuration
        threads: Worker threads (isolation forest)
        pairwise_cap: Largest n for n² methods; defaults to INSANE_PAIRWISE_CAP

    Returns:
        H x W score map
    """
    cap = get_settings().pairwise_cap if pairwise_cap is None else int(pairwise_cap)
    n = ds.height * ds.width
    if cfg.method in PAIRWISE_METHODS and n > cap:
        raise ResourceCapError(
            f"{cfg.method.value} needs pairwise distances over {n} spectra, "
            f"above the cap of {cap}"
        )

    logger.info(f"Scoring {n} spectra with {cfg.method.value}")
    scores = score(ds.flat_spectra(), cfg, threads=threads)
    return scores.reshape(ds.height, ds.width)
