"""Score-specific word embeddings.

A shallow window network learns one embedding column per vocabulary word
under two objectives at once: a ranking hinge that scores true windows at
least 1 above center-corrupted ones, and a squared-error regression of
the essay score from the same hidden activation. The blend weight
``alpha`` moves between pure context ranking (1.0) and pure score
regression (0.0).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .corpus import N_SPECIALS, Vocabulary, WindowSample, corrupt_window
from .errors import ConfigError, ModelFormatError, NumericalError

EMBEDDING_MAGIC = b"SSWE"
EMBEDDING_VERSION = 1


def htanh(x):
    """Hard tanh: clips to [-1, 1], identity inside. Element-wise."""
    return np.clip(x, -1.0, 1.0)


def htanh_grad_mask(preact):
    """1 where hard tanh is identity, 0 in the flat regions and at the kinks."""
    return (np.abs(preact) < 1.0).astype(float)


@dataclass(frozen=True)
class SSWEHyper:
    """Embedding-training hyperparameters."""

    embed_dim: int = 200
    hidden_dim: int = 100
    window_size: int = 9
    n_corruptions: int = 200
    alpha: float = 0.1
    learning_rate: float = 1e-7
    epochs: int = 1
    seed: int = 0

    def validate(self):
        if self.window_size % 2 == 0 or self.window_size < 3:
            raise ConfigError(f"window size must be odd and >= 3, got {self.window_size}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.n_corruptions < 1:
            raise ConfigError(f"n_corruptions must be >= 1, got {self.n_corruptions}")
        if self.embed_dim < 1 or self.hidden_dim < 1:
            raise ConfigError("embed_dim and hidden_dim must be positive")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")


class SSWEParams:
    """All learnable tensors of the dual-head window network.

    ``M`` holds one embedding column per vocabulary id. The hidden layer
    maps the concatenated window embedding (n*D) to H units through a
    hard tanh; two scalar heads read the same hidden activation: one
    ranks windows against corruptions, the other regresses the essay
    score.
    """

    def __init__(self, M, W_hi, b_h, W_oh2, b_o2, W_oh1, b_o1):
        self.M = M
        self.W_hi = W_hi
        self.b_h = b_h
        self.W_oh2 = W_oh2
        self.b_o2 = b_o2
        self.W_oh1 = W_oh1
        self.b_o1 = b_o1

    @classmethod
    def init(cls, vocab_size: int, hyper: SSWEHyper, rng) -> "SSWEParams":
        """Uniform [-0.05, 0.05] weights, zero biases."""
        hyper.validate()
        d, h, n = hyper.embed_dim, hyper.hidden_dim, hyper.window_size
        u = lambda *shape: rng.uniform(-0.05, 0.05, size=shape)
        return cls(
            M=u(d, vocab_size),
            W_hi=u(h, n * d),
            b_h=np.zeros(h),
            W_oh2=u(h),
            b_o2=np.zeros(1),
            W_oh1=u(h),
            b_o1=np.zeros(1),
        )

    @property
    def embed_dim(self) -> int:
        return self.M.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.M.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W_hi.shape[0]

    @property
    def window_size(self) -> int:
        return self.W_hi.shape[1] // self.M.shape[0]

    def dense_names(self):
        """Names of the non-embedding tensors, in declared order."""
        return ("W_hi", "b_h", "W_oh2", "b_o2", "W_oh1", "b_o1")

    def copy(self) -> "SSWEParams":
        return SSWEParams(*[getattr(self, n).copy()
                            for n in ("M",) + self.dense_names()])

    def allfinite(self) -> bool:
        return all(np.all(np.isfinite(getattr(self, n)))
                   for n in ("M",) + self.dense_names())


@dataclass
class SSWEGradients:
    """Gradients of the overall loss; sparse over the embedding matrix.

    ``m_cols`` maps column id -> gradient vector and contains exactly the
    columns touched by the window and its corruptions; untouched columns
    are implicitly zero.
    """

    m_cols: dict[int, np.ndarray]
    dense: dict[str, np.ndarray]
    loss_overall: float = 0.0
    loss_context: float = 0.0
    loss_score: float = 0.0


def embed_window(context, M) -> np.ndarray:
    """Concatenate the embedding columns of a window, in order."""
    ids = np.asarray(context, dtype=int)
    if ids.size and (ids.min() < 0 or ids.max() >= M.shape[1]):
        raise IndexError(f"window id out of range for vocabulary of {M.shape[1]}")
    return M[:, ids].T.reshape(-1)


def forward(params: SSWEParams, s: np.ndarray) -> tuple[float, float]:
    """Compute (context score, essay score) for one window vector.

    Both heads share the hidden activation. The essay-score head is
    returned raw; clamp only reported predictions, never the value used
    for the loss.
    """
    if s.shape != (params.W_hi.shape[1],):
        raise ValueError(f"window vector has shape {s.shape}, "
                         f"expected ({params.W_hi.shape[1]},)")
    hidden = htanh(params.W_hi @ s + params.b_h)
    f_context = float(params.W_oh2 @ hidden + params.b_o2[0])
    f_ss = float(params.W_oh1 @ hidden + params.b_o1[0])
    return f_context, f_ss


def predict_window_score(params: SSWEParams, s: np.ndarray) -> float:
    """Score-head prediction clamped to the trained [0, 1] target range."""
    _, f_ss = forward(params, s)
    return min(max(f_ss, 0.0), 1.0)


def loss_context(f_target: float, f_corrupts) -> float:
    """Mean hinge over corruptions: (1/E) sum_k max(0, 1 - f_t + f_ck)."""
    f_corrupts = np.asarray(f_corrupts, dtype=float)
    if f_corrupts.size == 0:
        raise ConfigError("loss_context needs at least one corruption score")
    return float(np.mean(np.maximum(0.0, 1.0 - f_target + f_corrupts)))


def loss_score(predictions, golds) -> float:
    """Mean squared error between predicted and gold scores."""
    predictions = np.asarray(predictions, dtype=float)
    golds = np.asarray(golds, dtype=float)
    if predictions.shape != golds.shape or predictions.size == 0:
        raise ValueError(f"shape mismatch: {predictions.shape} vs {golds.shape}")
    return float(np.mean((predictions - golds) ** 2))


def loss_overall(alpha: float, context_value: float, score_value: float) -> float:
    """Weighted blend: alpha * context + (1 - alpha) * score."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * context_value + (1.0 - alpha) * score_value


def sample_loss(params: SSWEParams, sample: WindowSample, corruptions,
                gold_score: float, alpha: float):
    """(overall, context, score) losses for one window and its corruptions."""
    s_t = embed_window(sample.context, params.M)
    f_t, f_ss = forward(params, s_t)
    f_cs = [forward(params, embed_window(ctx, params.M))[0] for ctx in corruptions]
    l_ctx = loss_context(f_t, f_cs)
    l_sc = float(np.square(np.float64(f_ss - gold_score)))
    return loss_overall(alpha, l_ctx, l_sc), l_ctx, l_sc


def backward(params: SSWEParams, sample: WindowSample, corruptions,
             gold_score: float, alpha: float = 0.1) -> SSWEGradients:
    """Exact analytic gradients of the overall loss for one sample.

    The hinge subgradient at zero margin is 0, as is the hard-tanh
    derivative at its kinks. The corrupted windows share every position
    with the target window except the center, so context-word columns
    accumulate gradient from every active corruption as well.
    """
    M = params.M
    d = params.embed_dim
    n = len(sample.context)
    c = sample.center_index
    ids = np.asarray(sample.context, dtype=int)
    corrupt_centers = np.asarray([ctx[c] for ctx in corruptions], dtype=int)
    n_corrupt = len(corrupt_centers)

    s_t = embed_window(sample.context, M)
    z_t = params.W_hi @ s_t + params.b_h
    i_t = htanh(z_t)
    f_t = float(params.W_oh2 @ i_t + params.b_o2[0])
    f_ss = float(params.W_oh1 @ i_t + params.b_o1[0])

    # Corruptions differ from the target only in the center block, so
    # their hidden pre-activations are a rank-one update of z_t.
    W_center = params.W_hi[:, c * d:(c + 1) * d]
    delta = M[:, corrupt_centers] - M[:, ids[c]][:, None]
    z_c = z_t[:, None] + W_center @ delta
    i_c = htanh(z_c)
    f_c = params.W_oh2 @ i_c + params.b_o2[0]

    margins = 1.0 - f_t + f_c
    active = margins > 0.0
    l_ctx = float(np.mean(np.maximum(0.0, margins)))
    # squared error via numpy so a diverged run overflows to inf
    l_sc = float(np.square(np.float64(f_ss - gold_score)))
    l_all = loss_overall(alpha, l_ctx, l_sc)

    df_t = -alpha * np.count_nonzero(active) / n_corrupt
    df_c = alpha * active.astype(float) / n_corrupt
    df_ss = (1.0 - alpha) * 2.0 * (f_ss - gold_score)

    dz_t = (df_t * params.W_oh2 + df_ss * params.W_oh1) * htanh_grad_mask(z_t)
    dz_c = (params.W_oh2[:, None] * df_c[None, :]) * htanh_grad_mask(z_c)
    dz_c_sum = dz_c.sum(axis=1)

    dense = {
        "W_oh2": df_t * i_t + i_c @ df_c,
        "b_o2": np.array([df_t + df_c.sum()]),
        "W_oh1": df_ss * i_t,
        "b_o1": np.array([df_ss]),
        "b_h": dz_t + dz_c_sum,
    }

    # W_hi gradient: target window plus corruptions; corruption windows
    # share s_t outside the center block.
    dW_hi = np.outer(dz_t + dz_c_sum, s_t)
    dW_hi[:, c * d:(c + 1) * d] += dz_c @ delta.T
    dense["W_hi"] = dW_hi

    ds_t = params.W_hi.T @ dz_t
    ds_shared = params.W_hi.T @ dz_c_sum
    ds_center_c = W_center.T @ dz_c

    m_cols: dict[int, np.ndarray] = {}

    def add_col(col, vec):
        acc = m_cols.get(col)
        if acc is None:
            m_cols[col] = vec.copy()
        else:
            acc += vec

    for p in range(n):
        block = slice(p * d, (p + 1) * d)
        add_col(int(ids[p]), ds_t[block])
        if p != c:
            add_col(int(ids[p]), ds_shared[block])
    for k in range(n_corrupt):
        add_col(int(corrupt_centers[k]), ds_center_c[:, k])

    # Inactive corruptions and flat hinge regions can leave a touched
    # column with an exactly zero vector; keep only true contributions.
    m_cols = {col: g for col, g in m_cols.items() if np.any(g != 0.0)}

    return SSWEGradients(m_cols=m_cols, dense=dense, loss_overall=l_all,
                         loss_context=l_ctx, loss_score=l_sc)


@dataclass
class EpochLosses:
    epoch: int
    loss_overall: float
    loss_context: float
    loss_score: float


def train_sswe(windows: list[WindowSample], vocab: Vocabulary,
               hyper: SSWEHyper) -> tuple[SSWEParams, list[EpochLosses]]:
    """Per-sample SGD over shuffled windows.

    Corruptions are redrawn at every visit from the seeded generator, so
    a fixed seed reproduces the parameter trajectory exactly.
    """
    hyper.validate()
    if not windows:
        raise ConfigError("cannot train embeddings on an empty window set")
    rng = np.random.default_rng(hyper.seed)
    params = SSWEParams.init(len(vocab), hyper, rng)
    eta = hyper.learning_rate
    history = []
    order = np.arange(len(windows))
    for epoch in range(hyper.epochs):
        rng.shuffle(order)
        tot_all = tot_ctx = tot_sc = 0.0
        for idx in order:
            sample = windows[idx]
            corruptions = corrupt_window(sample, hyper.n_corruptions, rng, vocab)
            grads = backward(params, sample, corruptions, sample.scaled_score,
                             hyper.alpha)
            tot_all += grads.loss_overall
            tot_ctx += grads.loss_context
            tot_sc += grads.loss_score
            if eta != 0.0:
                for name in params.dense_names():
                    getattr(params, name)[...] -= eta * grads.dense[name]
                for col, g in grads.m_cols.items():
                    params.M[:, col] -= eta * g
        k = len(windows)
        history.append(EpochLosses(epoch, tot_all / k, tot_ctx / k, tot_sc / k))
        if not np.isfinite(history[-1].loss_overall):
            raise NumericalError(f"non-finite embedding loss at epoch {epoch}")
    return params, history


def nearest_neighbors(params: SSWEParams, vocab: Vocabulary, word: str,
                      k: int = 10) -> list[tuple[str, float]]:
    """k most cosine-similar vocabulary words, excluding the query itself.

    Special tokens never appear among the neighbors. Descending
    similarity, ties broken by vocabulary id; zero-norm columns compare
    at similarity 0.
    """
    wid = vocab.id_of(word)
    M = params.M
    norms = np.linalg.norm(M, axis=0)
    q = M[:, wid]
    qn = norms[wid]
    with np.errstate(invalid="ignore", divide="ignore"):
        sims = np.where((norms > 0) & (qn > 0), (q @ M) / (norms * qn), 0.0)
    order = sorted((i for i in range(N_SPECIALS, M.shape[1]) if i != wid),
                   key=lambda i: (-sims[i], i))
    return [(vocab.id_to_token[i], float(sims[i])) for i in order[:k]]


def cosine_distance(params: SSWEParams, vocab: Vocabulary,
                    word_a: str, word_b: str) -> float:
    """1 - cosine similarity between two words' embedding columns."""
    a = params.M[:, vocab.id_of(word_a)]
    b = params.M[:, vocab.id_of(word_b)]
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 1.0
    return 1.0 - float(a @ b / (na * nb))


# --- persistence --------------------------------------------------------

def save_embeddings(path, params: SSWEParams, vocab: Vocabulary,
                    config_hash: str = ""):
    """Versioned binary dump: header, vocabulary, then all tensors.

    Layout: magic, version u32, vocab size u32, embed dim u32, window
    size u32, hidden dim u32, length-prefixed UTF-8 tokens, the embedding
    matrix column-major as little-endian f64, the remaining tensors in
    declared order, and a trailing length-prefixed config hash.
    """
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<5I", EMBEDDING_VERSION, params.vocab_size,
                             params.embed_dim, params.window_size,
                             params.hidden_dim))
        for token in vocab.id_to_token:
            raw = token.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(np.asfortranarray(params.M, dtype="<f8").tobytes(order="F"))
        for name in params.dense_names():
            fh.write(np.ascontiguousarray(getattr(params, name),
                                          dtype="<f8").tobytes())
        raw = config_hash.encode("utf-8")
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)


def _read_exact(fh, count, path):
    raw = fh.read(count)
    if len(raw) != count:
        raise ModelFormatError(f"truncated embedding file {path}")
    return raw


def load_embeddings(path) -> tuple[SSWEParams, Vocabulary, str]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EMBEDDING_MAGIC:
            raise ModelFormatError(
                f"{path} is not an embedding file (magic {magic!r})")
        version, v, d, n, h = struct.unpack("<5I", _read_exact(fh, 20, path))
        if version != EMBEDDING_VERSION:
            raise ModelFormatError(f"unsupported embedding format version {version}")
        tokens = []
        for _ in range(v):
            (tlen,) = struct.unpack("<I", _read_exact(fh, 4, path))
            tokens.append(_read_exact(fh, tlen, path).decode("utf-8"))
        if tokens[:N_SPECIALS] != Vocabulary([]).id_to_token:
            raise ModelFormatError(f"{path}: special tokens out of place")
        vocab = Vocabulary(tokens[N_SPECIALS:])
        M = np.frombuffer(_read_exact(fh, 8 * d * v, path),
                          dtype="<f8").reshape(d, v, order="F").copy()
        shapes = {"W_hi": (h, n * d), "b_h": (h,), "W_oh2": (h,), "b_o2": (1,),
                  "W_oh1": (h,), "b_o1": (1,)}
        tensors = {}
        for name, shape in shapes.items():
            count = int(np.prod(shape))
            tensors[name] = np.frombuffer(
                _read_exact(fh, 8 * count, path), dtype="<f8").reshape(shape).copy()
        (hlen,) = struct.unpack("<I", _read_exact(fh, 4, path))
        config_hash = _read_exact(fh, hlen, path).decode("utf-8")
    return SSWEParams(M=M, **tensors), vocab, config_hash


def export_embeddings_text(path, params: SSWEParams, vocab: Vocabulary):
    """Plain-text export: one `token v1 ... vD` line per word."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, token in enumerate(vocab.id_to_token):
            vec = " ".join(repr(float(x)) for x in params.M[:, i])
            fh.write(f"{token} {vec}\n")
