"""Token embeddings trained jointly with an LSTM next-token predictor.

Everything is plain numpy with hand-written backpropagation through time.
Training keeps parameters in float32; pass ``dtype=np.float64`` to
:func:`init_parameters` for gradient checking.
"""

import base64
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .corpus import VARIANTS, Vocabulary
from .errors import CheckpointError, IndexOutOfVocabulary, SequenceTooShort

GATES = ("i", "f", "o", "g")
LSTM_NAMES = ("W_i", "W_f", "W_o", "W_g", "b_i", "b_f", "b_o", "b_g", "W_y", "b_y")
PARAM_NAMES = ("embedding",) + LSTM_NAMES


@dataclass
class EmbeddingMatrix:
    rows: np.ndarray
    vocabulary: Optional[Vocabulary] = None

    @property
    def dim(self):
        return self.rows.shape[1]

    def __len__(self):
        return self.rows.shape[0]


@dataclass
class LstmParameters:
    """Gate weights act on the concatenation ``[x_t, h_{t-1}]``."""

    W_i: np.ndarray
    W_f: np.ndarray
    W_o: np.ndarray
    W_g: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray
    W_y: np.ndarray
    b_y: np.ndarray

    @property
    def hidden_size(self):
        return self.b_i.shape[0]


class ModelParams(NamedTuple):
    embedding: EmbeddingMatrix
    lstm: LstmParameters

    def arrays(self):
        """Name -> array mapping; the arrays are the live parameter storage."""
        out = {"embedding": self.embedding.rows}
        out.update((name, getattr(self.lstm, name)) for name in LSTM_NAMES)
        return out

    @property
    def dtype(self):
        return self.embedding.rows.dtype


@dataclass(frozen=True)
class TrainConfig:
    embedding_dim: int = 128
    hidden_size: int = 128
    window: int = 32
    batch_size: int = 16
    learning_rate: float = 1e-3
    epochs: int = 20
    seed: int = 0
    optimizer: str = "adam"
    clip_norm: float = 5.0

    def __post_init__(self):
        for name in ("embedding_dim", "hidden_size", "window", "batch_size", "epochs"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ValueError("learning_rate and clip_norm must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def init_parameters(vocab_size, dim=128, hidden=128, seed=0, dtype=np.float32, vocabulary=None):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, forget bias 1."""
    if vocab_size < 1 or dim < 1 or hidden < 1:
        raise ValueError("vocab_size, dim and hidden must all be >= 1")
    rng = np.random.default_rng([seed, 0])

    def uniform(shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(dtype)

    embedding = EmbeddingMatrix(uniform((vocab_size, dim), dim), vocabulary)
    gates = {f"W_{g}": uniform((hidden, dim + hidden), dim + hidden) for g in GATES}
    biases = {f"b_{g}": np.zeros(hidden, dtype=dtype) for g in GATES}
    biases["b_f"][:] = 1.0
    lstm = LstmParameters(
        **gates, **biases,
        W_y=uniform((vocab_size, hidden), hidden),
        b_y=np.zeros(vocab_size, dtype=dtype),
    )
    return ModelParams(embedding, lstm)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_indices(indices, vocab_size):
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= vocab_size):
        bad = indices[(indices < 0) | (indices >= vocab_size)][0]
        raise IndexOutOfVocabulary(f"token index {bad} outside vocabulary of size {vocab_size}")
    return indices


def _forward_batch(params, X):
    """Run the LSTM over a (B, T) index array; returns (B, T, V) logits and cache."""
    lstm = params.lstm
    E = params.embedding.rows
    H = lstm.hidden_size
    D = E.shape[1]
    B, T = X.shape
    W = np.concatenate([lstm.W_i, lstm.W_f, lstm.W_o, lstm.W_g])
    b = np.concatenate([lstm.b_i, lstm.b_f, lstm.b_o, lstm.b_g])

    h = np.zeros((B, H), dtype=E.dtype)
    c = np.zeros((B, H), dtype=E.dtype)
    zs, gates, cs, tcs, hs = [], [], [c], [], []
    for t in range(T):
        z = np.concatenate([E[X[:, t]], h], axis=1)
        a = z @ W.T + b
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H:2 * H])
        o = _sigmoid(a[:, 2 * H:3 * H])
        g = np.tanh(a[:, 3 * H:])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        zs.append(z)
        gates.append((i, f, o, g))
        cs.append(c)
        tcs.append(tc)
        hs.append(h)
    hs_arr = np.stack(hs, axis=1)  # (B, T, H)
    logits = hs_arr @ lstm.W_y.T + lstm.b_y
    cache = {"X": X, "W": W, "D": D, "z": zs, "gates": gates, "c": cs, "tc": tcs, "h": hs_arr}
    return logits, cache


def _backward_batch(params, cache, dlogits):
    """Gradients of a scalar whose logit gradient is ``dlogits`` (B, T, V)."""
    lstm = params.lstm
    X, W, D = cache["X"], cache["W"], cache["D"]
    H = lstm.hidden_size
    B, T = X.shape
    dt = params.dtype

    hs = cache["h"]
    grads = {
        "W_y": np.einsum("btv,bth->vh", dlogits, hs).astype(dt),
        "b_y": dlogits.sum(axis=(0, 1)).astype(dt),
        "embedding": np.zeros_like(params.embedding.rows),
    }
    dW = np.zeros_like(W)
    db = np.zeros(4 * H, dtype=dt)
    dh_all = dlogits @ lstm.W_y  # (B, T, H)
    dh_next = np.zeros((B, H), dtype=dt)
    dc_next = np.zeros((B, H), dtype=dt)
    for t in reversed(range(T)):
        i, f, o, g = cache["gates"][t]
        tc = cache["tc"][t]
        c_prev = cache["c"][t]
        dh = dh_all[:, t] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        da = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            do * o * (1.0 - o),
            dc * i * (1.0 - g * g),
        ], axis=1)
        dc_next = dc * f
        dW += da.T @ cache["z"][t]
        db += da.sum(axis=0)
        dz = da @ W
        np.add.at(grads["embedding"], X[:, t], dz[:, :D])
        dh_next = dz[:, D:]
    for k, gate in enumerate(GATES):
        grads[f"W_{gate}"] = dW[k * H:(k + 1) * H]
        grads[f"b_{gate}"] = db[k * H:(k + 1) * H]
    return grads


def _sum_loss_and_grads(params, inputs, targets):
    """Summed cross-entropy over a (B, T) batch and the gradient of that sum."""
    logits, cache = _forward_batch(params, inputs)
    probs = softmax(logits)
    B, T = targets.shape
    bi, ti = np.meshgrid(np.arange(B), np.arange(T), indexing="ij")
    picked = probs[bi, ti, targets]
    loss = -float(np.log(np.maximum(picked, np.finfo(probs.dtype).tiny)).astype(np.float64).sum())
    dlogits = probs
    dlogits[bi, ti, targets] -= 1.0
    return loss, _backward_batch(params, cache, dlogits)


def forward(params, sequence):
    """Logits (T, V) for an index sequence; row t scores the token after position t."""
    V = len(params.embedding)
    seq = _check_indices(sequence, V)
    if seq.ndim != 1 or seq.size < 1:
        raise SequenceTooShort("forward needs a non-empty 1-D index sequence")
    logits, cache = _forward_batch(params, seq[None, :])
    return logits[0], cache


def loss_and_gradients(params, sequence):
    """Mean next-token cross-entropy over the sequence and its gradients.

    Returns ``(loss, grads)`` with ``grads`` keyed like ``params.arrays()``.
    """
    V = len(params.embedding)
    seq = _check_indices(sequence, V)
    if seq.ndim != 1 or seq.size < 2:
        raise SequenceTooShort("need at least 2 tokens to form a prediction pair")
    n = seq.size - 1
    loss, grads = _sum_loss_and_grads(params, seq[None, :-1], seq[None, 1:])
    for k in grads:
        grads[k] /= n
    return loss / n, grads


def make_windows(sequences, window):
    """Chop sequences into spans of ``window + 1`` tokens with stride ``window``.

    Consecutive spans share one token, so each (x, next x) pair lands in
    exactly one span.  Spans shorter than 2 tokens are dropped.
    """
    out = []
    for seq in sequences:
        seq = list(seq)
        for start in range(0, max(len(seq) - 1, 0), window):
            span = seq[start:start + window + 1]
            if len(span) >= 2:
                out.append(span)
    return out


class _Adam:
    def __init__(self, arrays, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.t = 0

    def step(self, arrays, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in arrays.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            p -= (self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)).astype(p.dtype)


class _Sgd:
    def __init__(self, arrays, lr):
        self.lr = lr

    def step(self, arrays, grads):
        for k, p in arrays.items():
            p -= (self.lr * grads[k]).astype(p.dtype)


def clip_gradients(grads, max_norm):
    """Scale all gradients in place so their joint L2 norm is at most ``max_norm``."""
    norm = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def train(corpus, config=TrainConfig(), callback=None):
    """Fit embeddings and LSTM on a corpus.

    Returns ``(params, loss_history)``; ``loss_history[e]`` is the mean
    per-pair cross-entropy seen during epoch ``e`` (before each update).
    """
    V = len(corpus.vocabulary)
    windows = make_windows(corpus.sequences, config.window)
    if not windows:
        raise SequenceTooShort("corpus has no sequence with at least 2 tokens")
    params = init_parameters(V, config.embedding_dim, config.hidden_size, config.seed,
                             vocabulary=corpus.vocabulary)
    arrays = params.arrays()
    if config.optimizer == "adam":
        opt = _Adam(arrays, config.learning_rate)
    else:
        opt = _Sgd(arrays, config.learning_rate)
    rng = np.random.default_rng([config.seed, 1])

    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(windows))
        epoch_loss, epoch_pairs = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [windows[j] for j in order[start:start + config.batch_size]]
            by_len = {}
            for w in batch:
                by_len.setdefault(len(w), []).append(w)
            total, pairs, grads = 0.0, 0, None
            for length in sorted(by_len):
                block = np.asarray(by_len[length], dtype=np.int64)
                loss, g = _sum_loss_and_grads(params, block[:, :-1], block[:, 1:])
                total += loss
                pairs += block.shape[0] * (length - 1)
                if grads is None:
                    grads = g
                else:
                    for k in grads:
                        grads[k] += g[k]
            for k in grads:
                grads[k] /= pairs
            clip_gradients(grads, config.clip_norm)
            opt.step(arrays, grads)
            epoch_loss += total
            epoch_pairs += pairs
        history.append(epoch_loss / epoch_pairs)
        if callback is not None:
            callback(epoch, history[-1])
    return params, history


# -- persistence -----------------------------------------------------------

CHECKPOINT_FORMAT = "notevec-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    config: TrainConfig
    variant: str
    vocabulary: Vocabulary
    params: ModelParams


def _encode_array(arr):
    le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    return {
        "dtype": le.dtype.str,
        "shape": list(arr.shape),
        "data": base64.b64encode(np.ascontiguousarray(le).tobytes()).decode("ascii"),
    }


def _decode_array(obj):
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype=np.dtype(obj["dtype"])).reshape(obj["shape"]).astype(
        np.dtype(obj["dtype"]).newbyteorder("="))


def dumps_checkpoint(ckpt):
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "variant": ckpt.variant,
        "config": asdict(ckpt.config),
        "vocabulary": list(ckpt.vocabulary.tokens),
        "embedding_dim": int(ckpt.params.embedding.dim),
        "hidden_size": int(ckpt.params.lstm.hidden_size),
        "arrays": {k: _encode_array(v) for k, v in ckpt.params.arrays().items()},
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def loads_checkpoint(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from None
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("not a notevec checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")
    if doc["variant"] not in VARIANTS:
        raise CheckpointError(f"unknown variant {doc['variant']!r}")
    vocab = Vocabulary(doc["vocabulary"])
    arrays = {k: _decode_array(doc["arrays"][k]) for k in PARAM_NAMES}
    params = ModelParams(
        EmbeddingMatrix(arrays.pop("embedding"), vocab),
        LstmParameters(**arrays),
    )
    if params.embedding.rows.shape[0] != len(vocab):
        raise CheckpointError("embedding row count does not match vocabulary size")
    return Checkpoint(TrainConfig(**doc["config"]), doc["variant"], vocab, params)


def save_checkpoint(ckpt, path):
    Path(path).write_text(dumps_checkpoint(ckpt), encoding="utf-8")


def load_checkpoint(path):
    return loads_checkpoint(Path(path).read_text(encoding="utf-8"))


def dumps_loss_history(history):
    lines = ["epoch,loss"] + [f"{e},{float(v)!r}" for e, v in enumerate(history)]
    return "\n".join(lines) + "\n"
