"""Exact t-SNE for small point sets (a few hundred rows at most).

Input affinities come from Gaussian conditionals whose bandwidth is found
per row by bisection on the perplexity; the map uses a Student-t kernel and
is fitted by momentum gradient descent with early exaggeration.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRow, DuplicatePoints, NonFiniteGradient, WrongDimensionality

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 15.0
    learning_rate: float = 200.0
    n_iter: int = 1000
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    initial_momentum: float = 0.5
    final_momentum: float = 0.8
    momentum_switch: int = 250
    init_std: float = 1e-4
    min_gain: float = 0.01
    seed: int = 0


@dataclass
class AffinityMatrix:
    P: np.ndarray
    perplexity: float
    sigmas: np.ndarray = field(repr=False, default=None)


@dataclass
class Projection:
    Y: np.ndarray
    labels: list
    kl_history: list

    def __post_init__(self):
        if self.Y.ndim != 2 or self.Y.shape[1] not in (2, 3):
            raise WrongDimensionality(f"projection must have 2 or 3 columns, got shape {self.Y.shape}")
        if len(self.labels) != self.Y.shape[0]:
            raise ValueError("one label per projected point required")

    @property
    def dims(self):
        return self.Y.shape[1]


def squared_distances(X):
    X = np.asarray(X, dtype=np.float64)
    sq = np.sum(X * X, axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.fill_diagonal(D, 0.0)
    return np.maximum(D, 0.0)


def _row_entropy(dists, beta):
    """Conditional probabilities for precision ``beta`` and their entropy in bits."""
    shifted = dists - dists.min()  # cancels in normalisation, avoids underflow
    w = np.exp(-shifted * beta)
    total = w.sum()
    p = w / total
    # H = log Z + beta * E[d] with Z, E[d] taken over the shifted distances
    entropy = (math.log(total) + beta * float(np.dot(p, shifted))) / LOG2
    return p, entropy


def perplexity_search(distances_row, target_perplexity, tol=1e-12, max_iter=200):
    """Gaussian bandwidth sigma whose conditional row has the target perplexity.

    ``distances_row`` holds squared distances to the other points.  The
    search bisects on the precision ``1 / (2 sigma^2)`` and stops once the
    entropy is within ``tol`` bits of ``log2(target)``.
    """
    d = np.asarray(distances_row, dtype=np.float64)
    if d.size < 2:
        raise ValueError("perplexity search needs at least 2 neighbouring distances")
    if not 2.0 <= target_perplexity <= d.size:
        raise ValueError(f"target perplexity {target_perplexity} outside [2, {d.size}]")
    if not np.any(d > 0):
        raise DegenerateRow("all distances in row are zero")
    return _search(d, math.log2(target_perplexity), tol, max_iter)[1]


def _search(d, log_target, tol, max_iter):
    spread = d.max() - d.min()
    beta = 1.0 / spread if spread > 0 else 1.0
    lo, hi = 0.0, math.inf
    p, entropy = _row_entropy(d, beta)
    for _ in range(max_iter):
        diff = entropy - log_target
        if abs(diff) < tol:
            break
        if diff > 0:  # too flat: sharpen
            lo = beta
            beta = beta * 2.0 if math.isinf(hi) else 0.5 * (beta + hi)
        else:
            hi = beta
            beta = 0.5 * (beta + lo)
        p, entropy = _row_entropy(d, beta)
    return p, math.sqrt(1.0 / (2.0 * beta))


def compute_affinities(X, perplexity=15.0, labels=None, tol=1e-12):
    """Symmetric joint probabilities ``(p_j|i + p_i|j) / 2V`` for the rows of X."""
    X = np.asarray(X, dtype=np.float64)
    V = X.shape[0]
    if V < 4:
        raise ValueError(f"need at least 4 points for t-SNE, got {V}")
    if not 2.0 <= perplexity < V:
        raise ValueError(f"perplexity {perplexity} must lie in [2, {V})")
    _reject_duplicates(X, labels)

    D = squared_distances(X)
    log_target = math.log2(perplexity)
    cond = np.zeros((V, V))
    sigmas = np.zeros(V)
    for i in range(V):
        row = np.delete(D[i], i)
        p, sigmas[i] = _search(row, log_target, tol, 200)
        cond[i, np.arange(V) != i] = p
    P = (cond + cond.T) / (2.0 * V)
    return AffinityMatrix(P, float(perplexity), sigmas)


def _reject_duplicates(X, labels):
    seen = {}
    for i, row in enumerate(X):
        key = row.tobytes()
        if key in seen:
            names = labels if labels is not None else list(range(len(X)))
            raise DuplicatePoints(
                f"identical embedding rows for tokens {names[seen[key]]} and {names[i]}"
            )
        seen[key] = i


def _student_t(Y):
    num = 1.0 / (1.0 + squared_distances(Y))
    np.fill_diagonal(num, 0.0)
    return num, num / num.sum()


def kl_divergence(P, Y):
    """KL(P || Q) over off-diagonal pairs, with 0 log 0 = 0."""
    P = P.P if isinstance(P, AffinityMatrix) else np.asarray(P, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if P.shape != (Y.shape[0], Y.shape[0]):
        raise ValueError("P and Y disagree on the number of points")
    _, Q = _student_t(Y)
    mask = P > 0
    np.fill_diagonal(mask, False)
    return float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))


def kl_gradient(P, Y):
    """Gradient of KL(P || Q) with respect to the map points Y."""
    P = P.P if isinstance(P, AffinityMatrix) else np.asarray(P, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    num, Q = _student_t(Y)
    W = (P - Q) * num
    return 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)


def tsne_optimize(P, dims=2, config=TsneConfig(), labels=None):
    """Fit a ``dims``-dimensional map to the affinities P."""
    if dims not in (2, 3):
        raise WrongDimensionality(f"t-SNE output must be 2-D or 3-D, got {dims}")
    P = P.P if isinstance(P, AffinityMatrix) else np.asarray(P, dtype=np.float64)
    V = P.shape[0]
    if labels is None:
        labels = [str(i) for i in range(V)]
    rng = np.random.default_rng(config.seed)
    Y = rng.normal(0.0, config.init_std, size=(V, dims))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    history = []
    for it in range(config.n_iter):
        exaggerate = config.early_exaggeration if it < config.exaggeration_iters else 1.0
        momentum = config.initial_momentum if it < config.momentum_switch else config.final_momentum
        grad = kl_gradient(exaggerate * P, Y)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradient(it)
        # delta-bar-delta gains: grow where the step keeps its sign
        same_sign = np.sign(grad) == np.sign(update)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, config.min_gain, out=gains)
        update = momentum * update - config.learning_rate * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
        history.append(kl_divergence(P, Y))
    return Projection(Y, list(labels), history)


def project(X, dims=2, config=TsneConfig(), labels=None):
    """Affinities plus optimisation in one call."""
    aff = compute_affinities(X, config.perplexity, labels=labels)
    return tsne_optimize(aff, dims, config, labels=labels)


def dumps_projection(projection):
    cols = [f"y{k + 1}" for k in range(projection.dims)]
    lines = ["\t".join(["token"] + cols)]
    for label, row in zip(projection.labels, projection.Y):
        lines.append("\t".join([str(label)] + [repr(float(v)) for v in row]))
    return "\n".join(lines) + "\n"


def loads_projection(text):
    lines = text.rstrip("\n").split("\n")
    header = lines[0].split("\t")
    if header[0] != "token" or len(header) not in (3, 4):
        raise ValueError("projection TSV header must be token<TAB>y1<TAB>y2[<TAB>y3]")
    labels, rows = [], []
    for line in lines[1:]:
        fields = line.split("\t")
        labels.append(fields[0])
        rows.append([float(v) for v in fields[1:]])
    return Projection(np.array(rows, dtype=np.float64).reshape(len(rows), len(header) - 1), labels, [])


def dumps_kl_history(history):
    lines = ["iteration,kl"] + [f"{i},{float(v)!r}" for i, v in enumerate(history)]
    return "\n".join(lines) + "\n"
