"""CBOW character embeddings used to initialize the model's embedding table."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import CharVocab, EncodedLine

EMB_HEADER = "seglm-emb v1"

CBOW_LR = 0.05
CBOW_MIN_LR = 0.0001
CBOW_BATCH = 16


@dataclass
class EmbeddingTable:
    matrix: np.ndarray  # (|V|, dim) float32
    dim: int
    vocab_hash: str
    counts: np.ndarray | None = None  # corpus occurrences per id, when known

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float32)
        if self.matrix.ndim != 2 or self.matrix.shape[1] != self.dim:
            raise ValueError(f"embedding matrix {self.matrix.shape} does not have {self.dim} columns")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("embedding matrix contains NaN/Inf")

    def save(self, path: str | Path) -> None:
        head = f"{EMB_HEADER}\n{self.dim}\n{self.vocab_hash}\n".encode("utf-8")
        Path(path).write_bytes(head + self.matrix.astype("<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingTable":
        data = Path(path).read_bytes()
        parts = data.split(b"\n", 3)
        if len(parts) < 4 or parts[0].decode("utf-8") != EMB_HEADER:
            raise ValueError(f"{path}: not an embedding file")
        dim = int(parts[1])
        rows = np.frombuffer(parts[3], dtype="<f4")
        if rows.size % dim:
            raise ValueError(f"{path}: payload is not a whole number of rows")
        return cls(rows.reshape(-1, dim).copy(), dim, parts[2].decode("utf-8"))


def _contexts(corpus: Sequence[EncodedLine], window: int):
    """Centers and padded context id matrix (-1 = no context)."""
    centers, ctx = [], []
    for line in corpus:
        ids = line.ids
        T = len(ids)
        if T < 2:
            continue
        for p in range(T):
            row = [ids[q] for q in range(max(0, p - window), min(T, p + window + 1)) if q != p]
            centers.append(ids[p])
            ctx.append(row + [-1] * (2 * window - len(row)))
    return np.asarray(centers, dtype=np.int64), np.asarray(ctx, dtype=np.int64).reshape(-1, 2 * window)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _context_counts(ctx: np.ndarray, V: int) -> tuple[np.ndarray, np.ndarray]:
    """(B, V) occurrence counts of each id among a row's context, and sizes."""
    rows = np.repeat(np.arange(len(ctx)), ctx.shape[1])
    flat = ctx.ravel()
    keep = flat >= 0
    C = np.zeros((len(ctx), V))
    np.add.at(C, (rows[keep], flat[keep]), 1.0)
    return C, C.sum(axis=1, keepdims=True)


def cbow_loss(w_in: np.ndarray, w_out: np.ndarray, centers: np.ndarray, ctx: np.ndarray,
              chunk: int = 8192) -> float:
    """Mean cross-entropy of predicting each center from its mean context."""
    total = 0.0
    for s in range(0, len(centers), chunk):
        C, n = _context_counts(ctx[s : s + chunk], w_in.shape[0])
        z = (C @ w_in) / n @ w_out.T
        z = z - z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        total -= logp[np.arange(len(z)), centers[s : s + chunk]].sum()
    return float(total / len(centers))


def train_cbow(corpus: Sequence[EncodedLine], vocab: CharVocab, dim: int, window: int = 5,
               epochs: int = 32, seed: int = 0, history: list | None = None,
               return_output: bool = False, lr: float = CBOW_LR, min_lr: float = CBOW_MIN_LR,
               batch_size: int = CBOW_BATCH):
    """Full-softmax CBOW over characters.

    Gradients are averaged over minibatches of ``batch_size`` positions; the
    learning rate decays linearly from ``lr`` to ``min_lr`` over all updates. If ``history`` is given, the full-corpus loss before training
    and after every epoch is appended to it.
    """
    if dim < 1 or window < 1 or epochs < 1:
        raise ValueError(f"dim, window and epochs must be >= 1 (got {dim}, {window}, {epochs})")
    if not corpus:
        raise ValueError("cannot train embeddings on an empty corpus")
    V = len(vocab)
    for line in corpus:
        if line.ids and (min(line.ids) < 0 or max(line.ids) >= V):
            raise ValueError(f"encoded ids of {line.raw!r} fall outside the vocabulary of size {V}")

    rng = np.random.default_rng(seed)
    w_in = ((rng.random((V, dim)) - 0.5) / dim).astype(np.float64)
    w_out = np.zeros((V, dim))
    counts = np.zeros(V, dtype=np.int64)
    for line in corpus:
        np.add.at(counts, np.asarray(line.ids, dtype=np.int64), 1)

    centers, ctx = _contexts(corpus, window)
    N = len(centers)
    if history is not None:
        history.append(cbow_loss(w_in, w_out, centers, ctx) if N else 0.0)
    n_batches = -(-N // batch_size)
    total = max(epochs * n_batches, 1)
    step = 0
    for _ in range(epochs):
        order = rng.permutation(N)
        for s in range(0, N, batch_size):
            rate = lr - (lr - min_lr) * step / total
            step += 1
            idx = order[s : s + batch_size]
            c = centers[idx]
            C, n = _context_counts(ctx[idx], V)
            h = (C @ w_in) / n
            p = _softmax(h @ w_out.T)
            p[np.arange(len(c)), c] -= 1.0
            g_h = (p @ w_out) / n
            w_out -= rate / len(c) * (p.T @ h)
            w_in -= rate / len(c) * (C.T @ g_h)
        if history is not None:
            history.append(cbow_loss(w_in, w_out, centers, ctx) if N else 0.0)

    table = EmbeddingTable(w_in.astype(np.float32), dim, vocab.fingerprint(), counts)
    if return_output:
        return table, w_out
    return table


def init_specials(table: EmbeddingTable, vocab: CharVocab, seed: int,
                  counts: np.ndarray | None = None) -> EmbeddingTable:
    """Resample special rows and zero-occurrence character rows from N(0, 1/d).

    Occurrence counts come from ``counts`` or the table itself; without
    either only the specials are resampled. Rows beyond the table (characters
    appended to the vocabulary later) are created.
    """
    V, d = len(vocab), table.dim
    if table.matrix.shape[0] > V:
        raise ValueError(f"table has {table.matrix.shape[0]} rows for a vocabulary of {V}")
    counts = table.counts if counts is None else np.asarray(counts)
    mat = np.zeros((V, d), dtype=np.float32)
    mat[: table.matrix.shape[0]] = table.matrix
    fresh = set(vocab.special_ids) | set(range(table.matrix.shape[0], V))
    if counts is not None:
        fresh |= {i for i in range(min(len(counts), V)) if counts[i] == 0}
        fresh |= set(range(len(counts), V))
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, 1.0 / np.sqrt(d), size=(V, d)).astype(np.float32)
    rows = sorted(fresh)
    mat[rows] = noise[rows]
    full_counts = None
    if counts is not None:
        full_counts = np.zeros(V, dtype=np.int64)
        full_counts[: min(len(counts), V)] = counts[:V]
    return EmbeddingTable(mat, d, vocab.fingerprint(), full_counts)
