"""Skip-gram word embeddings trained with negative sampling, plus file I/O."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .textproc import PAD, Vocab

EMB_HEADER = "#hg4sm-emb v1"


@dataclass(frozen=True)
class SkipgramConfig:
    dim: int = 32
    window: int = 2
    negatives: int = 5
    epochs: int = 5
    lr: float = 0.025
    seed: int = 0
    batch_size: int = 128

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.lr > 0:
            raise ValueError("learning rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class EmbeddingTable:
    """Word vectors, one float32 row per vocab entry; row 0 (PAD) is zero."""

    vocab: Vocab
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float32)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.vocab):
            raise ValueError(
                f"embedding matrix shape {self.matrix.shape} does not match vocab size {len(self.vocab)}")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("embedding matrix has non-finite entries")
        if np.any(self.matrix[PAD] != 0):
            raise ValueError("PAD row must be zero")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def lookup(self, ids: Sequence[int]) -> np.ndarray:
        return lookup(self, ids)


def lookup(table: EmbeddingTable, ids: Sequence[int]) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.matrix.shape[0]):
        raise IndexError(f"word id out of range [0, {table.matrix.shape[0]})")
    return table.matrix[ids]


def init_embeddings(vocab_size: int, dim: int, seed: int) -> np.ndarray:
    """Uniform in [-0.5/d, 0.5/d], PAD row zeroed."""
    rng = np.random.default_rng(seed)
    m = rng.uniform(-0.5 / dim, 0.5 / dim, size=(vocab_size, dim)).astype(np.float32)
    m[PAD] = 0.0
    return m


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sgns_loss_and_grads(center: np.ndarray, context: np.ndarray, negatives: np.ndarray):
    """Negative-sampling loss for one (center, context, negatives) example.

    ``negatives`` has shape (k, d). Returns ``(loss, d_center, d_context, d_negatives)``.
    """
    pos = _sigmoid(center @ context)
    neg = _sigmoid(-(negatives @ center))
    loss = -np.log(pos) - np.sum(np.log(neg))
    g_pos = pos - 1.0
    g_neg = 1.0 - neg
    d_center = g_pos * context + g_neg @ negatives
    d_context = g_pos * center
    d_negatives = np.outer(g_neg, center)
    return float(loss), d_center, d_context, d_negatives


def _training_pairs(corpus: list[np.ndarray], window: int) -> np.ndarray:
    pairs = []
    for sent in corpus:
        n = len(sent)
        for off in range(1, window + 1):
            if off >= n:
                break
            a, b = sent[:-off], sent[off:]
            pairs.append(np.stack([a, b], axis=1))
            pairs.append(np.stack([b, a], axis=1))
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(pairs).astype(np.int64)


def train_skipgram(corpus: Iterable[Sequence[int]], vocab: Vocab, config: SkipgramConfig,
                   return_losses: bool = False):
    """Train input-side word vectors with skip-gram and negative sampling.

    Negatives are drawn from the unigram distribution raised to 0.75. Training
    is deterministic for a given ``config.seed``. With ``return_losses`` the
    per-epoch mean loss list is returned alongside the table.
    """
    vsize = len(vocab)
    sents = []
    for sent in corpus:
        arr = np.asarray(list(sent), dtype=np.int64)
        if arr.size and (arr.min() < 0 or arr.max() >= vsize):
            raise ValueError(f"word id out of range [0, {vsize})")
        sents.append(arr[arr != PAD])
    if not sents or not any(s.size for s in sents):
        raise ValueError("empty training corpus")

    rng = np.random.default_rng(config.seed)
    w_in = init_embeddings(vsize, config.dim, config.seed).astype(np.float64)
    w_out = np.zeros((vsize, config.dim))

    counts = np.bincount(np.concatenate(sents), minlength=vsize).astype(np.float64)
    counts[PAD] = 0.0
    noise = counts ** 0.75
    noise_cdf = np.cumsum(noise / noise.sum())
    noise_cdf[-1] = 1.0

    pairs = _training_pairs(sents, config.window)
    losses: list[float] = []
    total_steps = max(1, config.epochs * int(np.ceil(len(pairs) / config.batch_size)))
    step = 0
    for _ in range(config.epochs):
        if len(pairs) == 0:
            losses.append(0.0)
            continue
        order = rng.permutation(len(pairs))
        epoch_loss = 0.0
        for start in range(0, len(pairs), config.batch_size):
            batch = pairs[order[start:start + config.batch_size]]
            centers, contexts = batch[:, 0], batch[:, 1]
            negs = np.searchsorted(noise_cdf, rng.random((len(batch), config.negatives)), side="right")
            lr = config.lr * max(1e-4, 1.0 - step / total_steps)
            step += 1

            c = w_in[centers]
            o = w_out[contexts]
            n = w_out[negs]
            pos = _sigmoid(np.einsum("bd,bd->b", c, o))
            neg = _sigmoid(-np.einsum("bkd,bd->bk", n, c))
            epoch_loss += float(-np.log(pos).sum() - np.log(neg).sum())

            g_pos = (pos - 1.0)[:, None]
            g_neg = (1.0 - neg)[:, :, None]
            d_c = g_pos * o + (g_neg * n).sum(axis=1)
            d_o = g_pos * c
            d_n = g_neg * c[:, None, :]
            np.add.at(w_in, centers, -lr * d_c)
            np.add.at(w_out, contexts, -lr * d_o)
            np.add.at(w_out, negs.ravel(), -lr * d_n.reshape(-1, config.dim))
        losses.append(epoch_loss / len(pairs))

    w_in[PAD] = 0.0
    table = EmbeddingTable(vocab, w_in.astype(np.float32))
    if return_losses:
        return table, losses
    return table


def save_embeddings(table: EmbeddingTable, path) -> None:
    lines = [f"{EMB_HEADER} {len(table.vocab)} {table.dim}"]
    for tok, row in zip(table.vocab.itos, table.matrix):
        lines.append(tok + " " + " ".join("%.9g" % float(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_embeddings(path, vocab: Vocab | None = None) -> EmbeddingTable:
    """Read an embedding file; if ``vocab`` is given it must match row for row."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(EMB_HEADER):
        raise ValueError(f"{path}: missing header")
    head = lines[0].split()
    if len(head) != 4:
        raise ValueError(f"{path}:1: header must be '{EMB_HEADER} <vocab_size> <d>'")
    try:
        size, dim = int(head[2]), int(head[3])
    except ValueError:
        raise ValueError(f"{path}:1: non-integer size in header") from None
    if dim < 1 or size < 2:
        raise ValueError(f"{path}:1: invalid dimensions in header")
    if vocab is not None and len(vocab) != size:
        raise ValueError(f"{path}: vocab size {len(vocab)} does not match file ({size})")
    body = [(n, ln) for n, ln in enumerate(lines[1:], start=2) if ln.strip()]
    if len(body) != size:
        raise ValueError(f"{path}: expected {size} rows, found {len(body)}")
    tokens, rows = [], np.zeros((size, dim), dtype=np.float32)
    for r, (lineno, line) in enumerate(body):
        parts = line.split(" ")
        if len(parts) != dim + 1:
            raise ValueError(f"{path}:{lineno}: expected token and {dim} values, got {len(parts) - 1}")
        try:
            rows[r] = np.array(parts[1:], dtype=np.float32)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: malformed number") from None
        tokens.append(parts[0])
    if vocab is None:
        vocab = Vocab(tuple(tokens), (0,) * size)
    elif tuple(tokens) != vocab.itos:
        raise ValueError(f"{path}: tokens do not match the vocab order")
    return EmbeddingTable(vocab, rows)
