import numpy as np
import pytest
from scipy.stats import spearmanr

from insane.analysis.novelty import (
    NoveltyConfig,
    NoveltyMethod,
    average_path_length,
    dtc_scores,
    fit_one_class_svm,
    iforest_scores,
    knn_scores,
    lof_scores,
    min_max,
    novelty_map,
    ocsvm_scores,
    rbf_gram,
    score,
)
from insane.data.models import DomainClass
from insane.data.synth import AnomalyConfig, LayoutConfig, LayoutKind, SynthConfig, generate
from insane.exceptions import (
    ConvergenceError,
    InsufficientPointsError,
    ParameterError,
    ResourceCapError,
)


def brute_knn(X, k):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        dists = sorted(
            np.sqrt(np.sum((X[i] - X[j]) ** 2)) for j in range(n) if j != i
        )
        out[i] = np.mean(dists[:k])
    return out


def brute_lof(X, k):
    """Textbook LOF; points at one position count once toward the k neighbours"""
    X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
    n = X.shape[0]

    def dist(i, j):
        return float(np.sqrt(np.sum((X[i] - X[j]) ** 2)))

    kdist, hoods = [], []
    for i in range(n):
        positions = {}
        for j in range(n):
            if j != i and tuple(X[j]) != tuple(X[i]):
                positions.setdefault(tuple(X[j]), dist(i, j))
        ranked = sorted(positions.values())
        kdist.append(ranked[min(k, len(ranked)) - 1] if ranked else 0.0)
        hoods.append([j for j in range(n) if j != i and dist(i, j) <= kdist[i]])

    lrd = []
    for i in range(n):
        mean_reach = np.mean([max(kdist[j], dist(i, j)) for j in hoods[i]])
        lrd.append(np.inf if mean_reach == 0 else 1.0 / mean_reach)

    out = []
    for i in range(n):
        around = [lrd[j] for j in hoods[i]]
        if np.isinf(lrd[i]):
            out.append(1.0 if all(np.isinf(around)) else 0.0)
        else:
            out.append(np.mean(around) / lrd[i])
    return np.array(out)


def project_capped_simplex(v, cap):
    """Euclidean projection onto {0 <= a <= cap, sum(a) = 1}"""
    lo, hi = float(v.min()) - cap, float(v.max())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.clip(v - mid, 0.0, cap).sum() > 1.0:
            lo = mid
        else:
            hi = mid
    return np.clip(v - 0.5 * (lo + hi), 0.0, cap)


def reference_ocsvm_objective(X, nu, gamma, iterations=20000):
    """Accelerated projected gradient on the one-class SVM dual"""
    Q = rbf_gram(X, gamma)
    n = X.shape[0]
    cap = 1.0 / (nu * n)
    step = 1.0 / np.linalg.eigvalsh(Q).max()
    alpha = np.full(n, 1.0 / n)
    momentum = alpha.copy()
    t = 1.0
    for _ in range(iterations):
        nxt = project_capped_simplex(momentum - step * (Q @ momentum), cap)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        momentum = nxt + ((t - 1.0) / t_next) * (nxt - alpha)
        alpha, t = nxt, t_next
    return 0.5 * float(alpha @ Q @ alpha)


def test_dtc_examples():
    """Test distance-to-centroid on small populations"""
    np.testing.assert_allclose(dtc_scores([[0.0, 0.0], [2.0, 0.0]]), [1.0, 1.0])
    np.testing.assert_allclose(dtc_scores([0.0, 0.0, 3.0]), [1.0, 1.0, 2.0])
    np.testing.assert_array_equal(dtc_scores([[4.0, 2.0]]), [0.0])


def test_knn_examples():
    """Test mean k-nearest-neighbour distance"""
    np.testing.assert_allclose(knn_scores([0.0, 1.0, 3.0], k=1), [1.0, 1.0, 2.0])
    np.testing.assert_allclose(knn_scores([0.0, 1.0, 3.0], k=2), [2.0, 1.5, 2.5])


@pytest.mark.parametrize("seed", range(50))
def test_knn_matches_brute_force(seed):
    """Test kNN scores against a loop implementation"""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(10 + seed % 55, 1 + seed % 8))

    np.testing.assert_allclose(knn_scores(X, k=5), brute_knn(X, 5), rtol=1e-12, atol=1e-12)


def test_knn_needs_more_points_than_k():
    """Test n <= k is rejected"""
    with pytest.raises(InsufficientPointsError):
        knn_scores(np.zeros((3, 2)), k=3)
    with pytest.raises(ParameterError):
        knn_scores(np.zeros((3, 2)), k=0)


def test_average_path_length():
    """Test c(m) at small sizes"""
    assert average_path_length(1) == 0.0
    assert average_path_length(2) == 1.0
    assert average_path_length(3) == pytest.approx(2.0 * 1.5 - 4.0 / 3.0)


@pytest.mark.parametrize("n_trees", [1, 7, 50])
def test_iforest_two_points_score_one_half(n_trees):
    """Test a two-point forest isolates each point at depth one"""
    scores = iforest_scores([[0.0, 0.0], [1.0, 3.0]], n_trees=n_trees, subsample=2)

    np.testing.assert_array_equal(scores, [0.5, 0.5])


def test_iforest_identical_points():
    """Test identical rows share one score"""
    scores = iforest_scores(np.ones((20, 3)), n_trees=10)

    assert np.all(scores == scores[0])


def test_iforest_is_deterministic_across_threads(rng):
    """Test seeded forests repeat exactly, whatever the worker count"""
    X = rng.normal(size=(80, 3))

    single = iforest_scores(X, n_trees=30, subsample=32, seed=4, threads=1)
    pooled = iforest_scores(X, n_trees=30, subsample=32, seed=4, threads=4)

    np.testing.assert_array_equal(single, pooled)
    assert not np.array_equal(single, iforest_scores(X, n_trees=30, subsample=32, seed=5))


def test_iforest_subsample_bounds(rng):
    """Test psi larger than the population"""
    with pytest.raises(ParameterError):
        iforest_scores(rng.normal(size=(10, 2)), subsample=11)
    with pytest.raises(InsufficientPointsError):
        iforest_scores([[1.0, 2.0]])


def test_iforest_flags_far_outlier(rng):
    """Test a distant point gets the top score for nearly every seed"""
    X = np.vstack([rng.normal(size=(100, 2)), [[25.0, 25.0]]])

    hits = sum(
        int(np.argmax(iforest_scores(X, n_trees=100, subsample=64, seed=s)) == 100)
        for s in range(10)
    )
    assert hits >= 9


@pytest.mark.slow
def test_iforest_flags_far_outlier_over_many_seeds(rng):
    """Test the outlier ranks first in at least 95 of 100 seeds"""
    X = np.vstack([rng.normal(size=(100, 2)), [[25.0, 25.0]]])

    hits = sum(
        int(np.argmax(iforest_scores(X, n_trees=100, subsample=64, seed=s)) == 100)
        for s in range(100)
    )
    assert hits >= 95


def test_ocsvm_identical_points_score_equal():
    """Test a degenerate population"""
    scores = ocsvm_scores(np.ones((6, 2)), nu=0.5)

    assert np.allclose(scores, scores[0])


def test_ocsvm_mirror_pair_scores_equal():
    """Test symmetric points are equally novel"""
    scores = ocsvm_scores([[-1.0, 0.0], [1.0, 0.0]], nu=0.5, gamma=1.0)

    assert scores[0] == pytest.approx(scores[1], abs=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_ocsvm_matches_reference_solver(seed):
    """Test SMO reaches the dual optimum found by projected gradient"""
    rng = np.random.default_rng(seed)
    n = 6 + seed % 11
    nu = (0.2, 0.5, 0.8)[seed % 3]
    X = rng.normal(size=(n, 2))

    fit = fit_one_class_svm(X, nu=nu, gamma=1.0)

    assert fit.objective == pytest.approx(reference_ocsvm_objective(X, nu, 1.0), abs=1e-6)


def test_ocsvm_solution_satisfies_kkt(rng):
    """Test box, equality and complementarity conditions"""
    X = rng.normal(size=(15, 3))
    nu = 0.3
    cap = 1.0 / (nu * 15)

    fit = fit_one_class_svm(X, nu=nu, gamma=0.5)

    tol = 1e-6
    assert fit.alpha.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(fit.alpha >= -1e-15)
    assert np.all(fit.alpha <= cap + 1e-15)
    lower = fit.alpha <= 1e-12 * cap
    upper = fit.alpha >= cap - 1e-12 * cap
    free = ~lower & ~upper
    assert np.all(fit.gradient[lower] >= fit.rho - tol)
    assert np.all(fit.gradient[upper] <= fit.rho + tol)
    assert np.all(np.abs(fit.gradient[free] - fit.rho) <= tol)


def test_ocsvm_iteration_cap(rng):
    """Test running out of iterations raises with the residual gap"""
    X = rng.normal(size=(30, 2))

    with pytest.raises(ConvergenceError) as exc_info:
        fit_one_class_svm(X, nu=0.2, gamma=1.0, max_iter=1)
    assert exc_info.value.residual > 1e-10


def test_lof_square_corners():
    """Test the corners of a square are all inliers"""
    square = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])

    np.testing.assert_allclose(lof_scores(square, k=2), np.ones(4))


def test_lof_far_point_is_outlier():
    """Test a point far from the square scores above the corners"""
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [10.0, 10.0]])

    scores = lof_scores(X, k=2)

    assert scores[4] > 1.0
    assert np.argmax(scores) == 4


@pytest.mark.parametrize("seed", range(50))
def test_lof_matches_brute_force(seed):
    """Test LOF against a loop implementation"""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(10 + seed % 55, 1 + seed % 8))

    np.testing.assert_allclose(lof_scores(X, k=5), brute_lof(X, 5), rtol=1e-9)


def test_lof_identical_points():
    """Test a fully duplicated population scores 1 everywhere"""
    np.testing.assert_array_equal(lof_scores(np.ones((5, 2)), k=2), np.ones(5))


def test_lof_equidistant_neighbours_count_separately():
    """Test two neighbours at the same distance fill two of the k slots"""
    X = [0.0, 1.0, 2.0, 3.0, 4.0, 10.0]

    expected = [1.25, 1.25, 2.0 / 3.0, 1.25, 1.25, 13.0 / 3.0]
    np.testing.assert_allclose(lof_scores(X, k=2), expected, rtol=1e-12)
    np.testing.assert_allclose(brute_lof(np.array(X), 2), expected, rtol=1e-12)


def test_lof_lattice_matches_textbook():
    """Test a tie-heavy integer lattice with a duplicate and an outlier"""
    grid = np.array([[i, j] for i in range(4) for j in range(4)], dtype=np.float64)
    X = np.vstack([grid, [[10.0, 10.0], [1.0, 1.0]]])

    scores = lof_scores(X, k=3)

    np.testing.assert_allclose(scores, brute_lof(X, 3), rtol=1e-12)
    assert scores[5] == scores[17]
    assert np.argmax(scores) == 16


@pytest.mark.parametrize("factor", [2.0, 0.5])
def test_scale_behaviour(rng, factor):
    """Test distance scores scale with the data and LOF does not change"""
    X = rng.normal(size=(30, 3))

    np.testing.assert_array_equal(dtc_scores(factor * X), factor * dtc_scores(X))
    np.testing.assert_array_equal(knn_scores(factor * X, 3), factor * knn_scores(X, 3))
    np.testing.assert_array_equal(lof_scores(factor * X, 3), lof_scores(X, 3))


def test_rigid_motion_invariance(rng):
    """Test rotation plus translation leaves scores unchanged"""
    X = rng.normal(size=(25, 2))
    angle = 0.7
    rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    moved = X @ rotation.T + np.array([3.0, -2.0])

    np.testing.assert_allclose(dtc_scores(moved), dtc_scores(X), atol=1e-9)
    np.testing.assert_allclose(knn_scores(moved, 4), knn_scores(X, 4), atol=1e-9)
    np.testing.assert_allclose(lof_scores(moved, 4), lof_scores(X, 4), atol=1e-9)
    np.testing.assert_allclose(
        ocsvm_scores(moved, nu=0.3, gamma=1.0), ocsvm_scores(X, nu=0.3, gamma=1.0), atol=1e-6
    )


def test_iforest_rigid_motion_preserves_ranking(rng):
    """Test seed-averaged forest scores keep their order under rotation plus translation"""
    X = rng.normal(size=(50, 2))
    angle = 0.7
    rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    moved = X @ rotation.T + np.array([3.0, -2.0])

    original = np.mean([iforest_scores(X, n_trees=25, seed=s) for s in range(50)], axis=0)
    rotated = np.mean([iforest_scores(moved, n_trees=25, seed=s) for s in range(50)], axis=0)

    assert spearmanr(original, rotated).correlation >= 0.9


def test_permutation_equivariance(rng):
    """Test reordering rows reorders scores"""
    X = rng.normal(size=(20, 3))
    order = rng.permutation(20)

    np.testing.assert_allclose(dtc_scores(X[order]), dtc_scores(X)[order], atol=1e-12)
    np.testing.assert_allclose(knn_scores(X[order], 3), knn_scores(X, 3)[order], atol=1e-12)
    np.testing.assert_allclose(lof_scores(X[order], 3), lof_scores(X, 3)[order], atol=1e-12)
    np.testing.assert_allclose(
        ocsvm_scores(X[order], nu=0.4, gamma=0.5),
        ocsvm_scores(X, nu=0.4, gamma=0.5)[order],
        atol=1e-6,
    )


def test_min_max():
    """Test rescaling and the constant case"""
    np.testing.assert_allclose(min_max([2.0, 4.0, 3.0]), [0.0, 1.0, 0.5])
    np.testing.assert_array_equal(min_max([7.0, 7.0]), [0.0, 0.0])


@pytest.mark.parametrize("method", list(NoveltyMethod))
def test_score_normalizes_to_unit_range(rng, method):
    """Test every method's normalized scores span [0, 1]"""
    X = rng.normal(size=(40, 3))

    scores = score(X, NoveltyConfig(method=method, n_trees=20))

    assert scores.min() == 0.0
    assert scores.max() == 1.0


def test_score_whitening_removes_column_scale(rng):
    """Test whitened DtC ignores per-column units"""
    X = rng.normal(size=(30, 2))
    stretched = X * np.array([1.0, 1000.0])
    cfg = NoveltyConfig(method=NoveltyMethod.DTC, whiten=True, normalize=False)

    np.testing.assert_allclose(score(stretched, cfg), score(X, cfg), rtol=1e-9, atol=1e-12)


def test_novelty_map_matches_population_scores(small_dataset):
    """Test the grid map is the flat score reshaped"""
    cfg = NoveltyConfig(method=NoveltyMethod.NN, k=3, normalize=False)

    grid = novelty_map(small_dataset, cfg)

    expected = brute_knn(small_dataset.flat_spectra().astype(np.float64), 3)
    np.testing.assert_allclose(grid.ravel(), expected, rtol=1e-9)


def test_novelty_map_constant_dataset(constant_dataset):
    """Test identical spectra give a constant map"""
    grid = novelty_map(constant_dataset, NoveltyConfig(method=NoveltyMethod.IF, n_trees=10))

    assert np.all(grid == grid[0, 0])


def test_novelty_map_pairwise_cap(small_dataset):
    """Test n² methods refuse large grids while DtC still runs"""
    with pytest.raises(ResourceCapError):
        novelty_map(small_dataset, NoveltyConfig(method=NoveltyMethod.LOF), pairwise_cap=100)

    grid = novelty_map(small_dataset, NoveltyConfig(method=NoveltyMethod.DTC), pairwise_cap=100)
    assert grid.shape == (24, 24)


def test_isolation_forest_finds_planted_anomaly():
    """Test anomaly pixels score above the rest of the grid"""
    cfg = SynthConfig(
        height=32,
        width=32,
        layout=LayoutConfig(kind=LayoutKind.STRIPE, n_domains=4),
        anomaly=AnomalyConfig(count=1),
    )
    ds = generate(cfg)

    grid = novelty_map(ds, NoveltyConfig(method=NoveltyMethod.IF))

    anomaly = ds.labels == DomainClass.ANOMALY
    assert grid[anomaly].mean() > grid[~anomaly].mean()
