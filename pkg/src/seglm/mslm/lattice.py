"""Segment lattices: forward marginalization and Viterbi decoding."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import torch


@dataclass
class EdgeLattice:
    """``edge_logp[i, l-1]`` = log-probability of the segment x[i:i+l].

    Entries with ``i + l > T`` are ``-inf`` and never read.
    """

    edge_logp: torch.Tensor  # (T, k)

    def __post_init__(self):
        if self.edge_logp.dim() != 2:
            raise ValueError(f"edge_logp must be (T, k), got {tuple(self.edge_logp.shape)}")

    @property
    def T(self) -> int:
        return self.edge_logp.shape[0]

    @property
    def k(self) -> int:
        return self.edge_logp.shape[1]

    def edge(self, i: int, length: int) -> float:
        if not (1 <= length <= self.k and i + length <= self.T):
            raise IndexError(f"no edge ({i}, {length}) in lattice T={self.T}, k={self.k}")
        return float(self.edge_logp[i, length - 1])

    def n_edges(self) -> int:
        return sum(min(self.k, self.T - i) for i in range(self.T))

    @classmethod
    def from_table(cls, table, k: int, dtype=torch.float64) -> "EdgeLattice":
        """Build from ``table[i][l-1]`` rows that may be ragged near the end."""
        T = len(table)
        out = torch.full((T, k), -math.inf, dtype=dtype)
        for i, row in enumerate(table):
            n = min(k, T - i)
            out[i, :n] = torch.as_tensor(list(row)[:n], dtype=dtype)
        return cls(out)


@dataclass(frozen=True)
class Segmentation:
    """Segment end offsets; the start 0 is implicit and the last entry is T."""

    boundaries: tuple[int, ...]

    def __post_init__(self):
        b = tuple(int(x) for x in self.boundaries)
        object.__setattr__(self, "boundaries", b)
        prev = 0
        for x in b:
            if x <= prev:
                raise ValueError(f"boundaries must be strictly increasing and positive: {b}")
            prev = x

    @property
    def T(self) -> int:
        return self.boundaries[-1] if self.boundaries else 0

    def lengths(self) -> list[int]:
        out, prev = [], 0
        for b in self.boundaries:
            out.append(b - prev)
            prev = b
        return out

    def spans(self) -> list[tuple[int, int]]:
        starts = (0,) + self.boundaries[:-1]
        return list(zip(starts, self.boundaries))

    def gaps(self) -> set[int]:
        """Interior boundaries, i.e. the gap indices in 1..T-1."""
        return set(self.boundaries[:-1])

    def apply(self, text: Sequence) -> list:
        if len(text) != self.T:
            raise ValueError(f"segmentation covers {self.T} characters, text has {len(text)}")
        return [text[a:b] for a, b in self.spans()]

    @classmethod
    def from_lengths(cls, lengths: Sequence[int]) -> "Segmentation":
        out, pos = [], 0
        for n in lengths:
            pos += n
            out.append(pos)
        return cls(tuple(out))

    @classmethod
    def from_gaps(cls, gaps, T: int) -> "Segmentation":
        return cls(tuple(sorted(set(gaps))) + (T,))

    def is_valid(self, k: int) -> bool:
        return all(1 <= n <= k for n in self.lengths())


def forward_logprob(edge_logp: torch.Tensor, lengths: Sequence[int] | torch.Tensor) -> torch.Tensor:
    """Batched log-space forward recursion.

    ``edge_logp``: (B, T, k); ``lengths``: per-line character counts. Edges
    that run past a line's end only feed alpha positions beyond that length,
    so they need not be masked as long as they are finite (or -inf and
    unused). Returns log alpha_T for every line, shape (B,).
    """
    B, T, k = edge_logp.shape
    lengths = torch.as_tensor(lengths, dtype=torch.long)
    # ending[:, t-1, l-1] = edge_logp[:, t-l, l-1]: edges that end at position t
    t_idx = torch.arange(1, T + 1).view(T, 1)
    l_idx = torch.arange(1, k + 1).view(1, k)
    starts = t_idx - l_idx
    valid = starts >= 0
    ending = edge_logp[:, starts.clamp(min=0), l_idx.expand(T, k) - 1]
    ending = ending.masked_fill(~valid, -math.inf)
    # window[:, l-1] holds log alpha_{t-l}
    pad = edge_logp.new_full((B, k - 1), -math.inf)
    window = torch.cat([edge_logp.new_zeros(B, 1), pad], dim=1)
    alphas = [window[:, 0]]
    for t in range(1, T + 1):
        a = torch.logsumexp(window + ending[:, t - 1], dim=-1)
        alphas.append(a)
        window = torch.cat([a.unsqueeze(1), window[:, : k - 1]], dim=1)
    table = torch.stack(alphas, dim=1)  # (B, T+1)
    return table.gather(1, lengths.view(B, 1)).squeeze(1)


def marginal_logprob(lattice: EdgeLattice) -> torch.Tensor:
    """log of the total probability of all segmentations of the lattice."""
    return forward_logprob(lattice.edge_logp.unsqueeze(0), [lattice.T])[0]


def viterbi(lattice: EdgeLattice) -> tuple[Segmentation, float]:
    """Best segmentation and its log-probability.

    Ties are broken toward the shortest final segment at every backtracking
    step.
    """
    E = lattice.edge_logp.detach().to(torch.float64).tolist()
    T, k = lattice.T, lattice.k
    best = [0.0] + [-math.inf] * T
    back = [0] * (T + 1)
    for t in range(1, T + 1):
        for l in range(1, min(k, t) + 1):
            s = best[t - l] + E[t - l][l - 1]
            if l == 1 or s > best[t]:  # strict: first (shortest) l wins ties
                best[t], back[t] = s, l
    ends = []
    t = T
    while t > 0:
        ends.append(t)
        t -= back[t]
    return Segmentation(tuple(reversed(ends))), best[T]


def bpc(log_marginal: float, T: int) -> float:
    """Bits per character for a natural-log marginal over ``T`` characters."""
    if T <= 0:
        raise ValueError("bpc needs at least one character")
    return -float(log_marginal) / (T * math.log(2))
