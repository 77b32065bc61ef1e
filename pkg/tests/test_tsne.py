import mpmath
import numpy as np
import pytest

from gradcheck import max_relative_error, numeric_gradient
from notevec.errors import DegenerateRow, DuplicatePoints, NonFiniteGradient, WrongDimensionality
from notevec.tsne import (
    Projection, TsneConfig, compute_affinities, dumps_kl_history, dumps_projection, kl_divergence,
    kl_gradient, loads_projection, perplexity_search, project, squared_distances, tsne_optimize,
)

mpmath.mp.dps = 50


# -- extended-precision oracles ---------------------------------------------

def mp_conditional(dists, sigma):
    w = [mpmath.exp(-d / (2 * sigma ** 2)) for d in dists]
    z = mpmath.fsum(w)
    return [x / z for x in w]


def mp_entropy_bits(p):
    return -mpmath.fsum(x * mpmath.log(x, 2) for x in p if x > 0)


def mp_sigma(dists, target):
    """Bisection on sigma itself (not precision), entirely in mpmath."""
    dists = [mpmath.mpf(float(d)) for d in dists]
    goal = mpmath.log(target, 2)
    lo, hi = mpmath.mpf("1e-6"), mpmath.mpf("1e6")
    for _ in range(400):
        mid = mpmath.sqrt(lo * hi) if hi / lo > 4 else (lo + hi) / 2
        if mp_entropy_bits(mp_conditional(dists, mid)) < goal:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def mp_sqdist(X):
    V = len(X)
    Xm = [[mpmath.mpf(float(v)) for v in row] for row in X]
    return [[mpmath.fsum((a - b) ** 2 for a, b in zip(Xm[i], Xm[j])) for j in range(V)] for i in range(V)]


def mp_affinities(X, perplexity):
    V = len(X)
    D = mp_sqdist(X)
    cond = [[mpmath.mpf(0)] * V for _ in range(V)]
    for i in range(V):
        others = [j for j in range(V) if j != i]
        row = [D[i][j] for j in others]
        goal = mpmath.log(perplexity, 2)
        lo, hi = mpmath.mpf("1e-6"), mpmath.mpf("1e6")
        for _ in range(400):
            mid = mpmath.sqrt(lo * hi) if hi / lo > 4 else (lo + hi) / 2
            if mp_entropy_bits(mp_conditional(row, mid)) < goal:
                lo = mid
            else:
                hi = mid
        p = mp_conditional(row, (lo + hi) / 2)
        for j, pj in zip(others, p):
            cond[i][j] = pj
    return [[(cond[i][j] + cond[j][i]) / (2 * V) for j in range(V)] for i in range(V)]


def mp_kl(P, Y):
    V = len(Y)
    Ym = [[mpmath.mpf(float(v)) for v in row] for row in Y]
    num = [[0 if i == j else 1 / (1 + mpmath.fsum((a - b) ** 2 for a, b in zip(Ym[i], Ym[j])))
            for j in range(V)] for i in range(V)]
    z = mpmath.fsum(mpmath.fsum(r) for r in num)
    total = mpmath.mpf(0)
    for i in range(V):
        for j in range(V):
            p = mpmath.mpf(float(P[i][j]))
            if i != j and p > 0:
                total += p * mpmath.log(p / (num[i][j] / z))
    return total


# -- perplexity search ------------------------------------------------------

class TestPerplexitySearch:
    def test_matches_high_precision_bisection(self):
        X = np.random.default_rng(7).normal(size=(10, 5))
        dists = squared_distances(X)[0, 1:]
        sigma = perplexity_search(dists, 5.0)
        assert abs(sigma - float(mp_sigma(dists, 5))) < 1e-6

    def test_three_equidistant_points(self):
        sigma = perplexity_search([4.0, 4.0], 2.0)
        assert np.isfinite(sigma) and sigma > 0
        p = mp_conditional([mpmath.mpf(4), mpmath.mpf(4)], mpmath.mpf(sigma))
        assert float(mp_entropy_bits(p)) == pytest.approx(1.0, abs=1e-12)

    def test_two_points_rejected(self):
        with pytest.raises(ValueError):
            perplexity_search([1.0], 1.0)
        with pytest.raises(ValueError):
            perplexity_search([1.0, 2.0, 3.0], 1.5)

    def test_degenerate_row(self):
        with pytest.raises(DegenerateRow):
            perplexity_search([0.0, 0.0, 0.0], 2.0)


# -- affinities -------------------------------------------------------------

class TestAffinities:
    def test_matches_direct_formula_oracle(self):
        X = np.random.default_rng(42).normal(size=(8, 3))
        P = compute_affinities(X, 3.0).P
        oracle = np.array([[float(v) for v in row] for row in mp_affinities(X, 3)])
        assert np.max(np.abs(P - oracle)) < 1e-10

    def test_invariants_on_random_input(self):
        X = np.random.default_rng(0).normal(size=(30, 16))
        P = compute_affinities(X, 10.0).P
        assert np.array_equal(P, P.T)
        assert np.all(np.diag(P) == 0)
        assert np.all(P >= 0)
        assert abs(P.sum() - 1.0) < 1e-9

    def test_regular_simplex(self):
        X = np.eye(4)
        P = compute_affinities(X, 3.0).P
        off = P[~np.eye(4, dtype=bool)]
        np.testing.assert_allclose(off, 1 / 12, rtol=1e-14)

    def test_duplicates_named(self):
        X = np.random.default_rng(1).normal(size=(5, 3))
        X[3] = X[1]
        with pytest.raises(DuplicatePoints, match="D5 and F5"):
            compute_affinities(X, 2.0, labels=["C5", "D5", "E5", "F5", "G5"])

    def test_preconditions(self):
        with pytest.raises(ValueError):
            compute_affinities(np.eye(3), 2.0)
        with pytest.raises(ValueError):
            compute_affinities(np.eye(5), 5.0)


# -- KL and its gradient ----------------------------------------------------

def test_kl_zero_when_q_equals_p():
    Y = np.random.default_rng(3).normal(size=(6, 2))
    num = 1 / (1 + squared_distances(Y))
    np.fill_diagonal(num, 0)
    Q = num / num.sum()
    assert abs(kl_divergence(Q, Y)) < 1e-15


def test_kl_matches_extended_precision():
    rng = np.random.default_rng(11)
    P = compute_affinities(rng.normal(size=(7, 4)), 3.0).P
    Y = rng.normal(size=(7, 2))
    assert abs(kl_divergence(P, Y) - float(mp_kl(P, Y))) < 1e-10


def test_kl_non_negative():
    rng = np.random.default_rng(5)
    for _ in range(20):
        P = compute_affinities(rng.normal(size=(9, 3)), 3.0).P
        assert kl_divergence(P, rng.normal(size=(9, 2)) * rng.uniform(0.01, 10)) >= 0


@pytest.mark.parametrize("dims", [2, 3])
def test_kl_gradient_finite_differences(dims):
    rng = np.random.default_rng(dims)
    P = compute_affinities(rng.normal(size=(6, 5)), 2.5).P
    Y = rng.normal(size=(6, dims))
    numeric = numeric_gradient(lambda: kl_divergence(P, Y), Y)
    assert max_relative_error(kl_gradient(P, Y), numeric) < 1e-4


# -- optimisation -----------------------------------------------------------

def knn_purity(Y, labels, k=5):
    D = squared_distances(Y)
    np.fill_diagonal(D, np.inf)
    nn = np.argsort(D, axis=1, kind="stable")[:, :k]
    return float(np.mean(labels[nn] == labels[:, None]))


def three_clusters(seed, per=15, dim=16, separation=10.0):
    rng = np.random.default_rng(seed)
    centers = np.eye(3, dim) * separation / np.sqrt(2)  # pairwise centre distance = separation
    X = np.concatenate([c + rng.normal(size=(per, dim)) for c in centers])
    return X, np.repeat(np.arange(3), per)


class TestOptimize:
    def test_kl_improves_after_exaggeration(self):
        X, _ = three_clusters(0)
        proj = project(X, 2, TsneConfig(seed=0))
        assert len(proj.kl_history) == 1000
        assert proj.kl_history[999] < proj.kl_history[250]
        assert min(proj.kl_history) >= 0

    def test_two_tight_pairs(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=128) * 5, rng.normal(size=128) * 5
        X = np.stack([a, a + 0.01 * rng.normal(size=128), b, b + 0.01 * rng.normal(size=128)])
        Y = project(X, 2, TsneConfig(perplexity=2.0, seed=1)).Y
        d = np.sqrt(squared_distances(Y))
        intra = [d[0, 1], d[2, 3]]
        inter = [d[0, 2], d[0, 3], d[1, 2], d[1, 3]]
        assert max(intra) < min(inter)

    @pytest.mark.parametrize("seed", range(5))
    def test_cluster_recovery(self, seed):
        X, labels = three_clusters(seed)
        Y = project(X, 2, TsneConfig(seed=seed)).Y
        assert knn_purity(Y, labels) >= 0.9

    def test_seed_deterministic(self):
        X, _ = three_clusters(1)
        a = project(X, 3, TsneConfig(seed=4, n_iter=300))
        b = project(X, 3, TsneConfig(seed=4, n_iter=300))
        assert np.array_equal(a.Y, b.Y)
        assert a.kl_history == b.kl_history

    def test_wrong_dims(self):
        P = compute_affinities(np.eye(5), 2.0)
        with pytest.raises(WrongDimensionality):
            tsne_optimize(P, 4)

    def test_non_finite_gradient(self):
        P = compute_affinities(np.eye(5), 2.0).P.copy()
        P[0, 1] = np.nan
        with pytest.raises(NonFiniteGradient) as err:
            tsne_optimize(P, 2)
        assert err.value.iteration == 0


class TestExport:
    def test_projection_tsv_round_trip(self):
        proj = Projection(np.array([[0.1, -2.5, 3.0], [1e-300, 4.0, 5.5]]), ["C5", "D5"], [])
        text = dumps_projection(proj)
        assert text.splitlines()[0] == "token\ty1\ty2\ty3"
        again = loads_projection(text)
        assert np.array_equal(again.Y, proj.Y) and again.labels == proj.labels
        assert dumps_projection(again) == text

    def test_two_column_header(self):
        proj = Projection(np.zeros((1, 2)), ["3"], [])
        assert dumps_projection(proj) == "token\ty1\ty2\n3\t0.0\t0.0\n"

    def test_kl_csv(self):
        assert dumps_kl_history([1.5, 0.25]) == "iteration,kl\n0,1.5\n1,0.25\n"
