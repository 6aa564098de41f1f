"""Masked Segmental Language Model.

Encoder: a transformer whose attention obeys the segmental mask, so the
encoding at position ``q`` (``q = 0`` is ``<bos>``) never sees the ``k``
characters that segments starting right after ``q`` must predict. Keys and
values of every layer are computed from the (position-aware) input
embeddings; only the query stream is updated layer by layer. With content
keys recomputed per layer, a visible position could relay masked characters
to ``q`` from the second layer on.

Decoder: a one-layer LSTM started from an affine projection of ``h[i]`` that
spells out candidate segments ``x[i:i+l]`` followed by ``<seg-end>``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import torch
from torch import nn

from .. import backend as B
from ..corpus import CharVocab, EncodedLine, encode_line
from .lattice import EdgeLattice, Segmentation, forward_logprob, viterbi


@dataclass
class ModelConfig:
    layers: int = 4
    d: int = 256
    ff: int = 512
    heads: int = 4
    k: int = 10
    vocab_size: int = 0
    emb_dropout: float = 0.0625
    enc_dropout: float = 0.125
    dec_dropout: float = 0.0625
    # chance of withholding a whole context vector from the decoder in training
    ctx_dropout: float = 0.0
    max_len: int = 4096

    def __post_init__(self):
        if self.d % self.heads:
            raise ValueError(f"hidden size {self.d} not divisible by {self.heads} heads")
        if self.k < 1:
            raise ValueError("max segment length k must be >= 1")
        for name in ("emb_dropout", "enc_dropout", "dec_dropout", "ctx_dropout"):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {p}")

    def to_dict(self) -> dict:
        return asdict(self)


def build_segmental_mask(T_padded: int, k: int) -> torch.Tensor:
    """``mask[q, s]`` is True when query ``q`` may attend key ``s``.

    Keys in the open span ``(q, q + k]`` are hidden; the rest is visible.
    """
    q = torch.arange(T_padded).view(-1, 1)
    s = torch.arange(T_padded).view(1, -1)
    return (s <= q) | (s >= q + k + 1)


def sinusoidal_positions(n: int, d: int) -> torch.Tensor:
    pos = torch.arange(n, dtype=torch.float64).unsqueeze(1)
    div = torch.exp(torch.arange(0, d, 2, dtype=torch.float64) * (-math.log(10000.0) / d))
    pe = torch.zeros(n, d, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div)[:, : d // 2]
    return pe


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.d
        self.heads = cfg.heads
        self.ln_q = nn.LayerNorm(d)
        self.ln_mem = nn.LayerNorm(d)
        self.q = nn.Linear(d, d)
        self.kv = nn.Linear(d, 2 * d)
        self.o = nn.Linear(d, d)
        self.ln_ff = nn.LayerNorm(d)
        self.ff1 = nn.Linear(d, cfg.ff)
        self.ff2 = nn.Linear(cfg.ff, d)

    def forward(self, g, mem, allowed, p, gen, train):
        Bsz, n, d = g.shape
        hd = d // self.heads
        q = self.q(B.layer_norm(g, self.ln_q.weight, self.ln_q.bias))
        k, v = self.kv(B.layer_norm(mem, self.ln_mem.weight, self.ln_mem.bias)).chunk(2, dim=-1)
        q = q.view(Bsz, n, self.heads, hd).transpose(1, 2)
        k = k.view(Bsz, n, self.heads, hd).transpose(1, 2)
        v = v.view(Bsz, n, self.heads, hd).transpose(1, 2)
        scores = B.matmul(q, k.transpose(-1, -2)) / math.sqrt(hd)
        scores = scores.masked_fill(~allowed, -math.inf)
        att = B.matmul(B.softmax(scores, axis=-1), v)
        att = att.transpose(1, 2).reshape(Bsz, n, d)
        g = g + B.dropout(self.o(att), p, gen, train)
        x = B.layer_norm(g, self.ln_ff.weight, self.ln_ff.bias)
        g = g + B.dropout(self.ff2(torch.relu(self.ff1(x))), p, gen, train)
        return g


class MSLM(nn.Module):
    """Parameters and forward computations of the model.

    The output layer is tied to the input embedding table.
    """

    def __init__(self, cfg: ModelConfig, generator: torch.Generator | None = None):
        super().__init__()
        if cfg.vocab_size < 7:
            raise ValueError("vocab_size must cover the specials plus at least one character")
        self.cfg = cfg
        d = cfg.d
        self.embedding = nn.Parameter(torch.empty(cfg.vocab_size, d))
        self.layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.layers))
        self.ln_out = nn.LayerNorm(d)
        self.dec_init = nn.Linear(d, 2 * d)
        self.lstm = nn.LSTM(d, d, batch_first=True)
        self.dec_out = nn.Linear(d, d)
        self.out_bias = nn.Parameter(torch.zeros(cfg.vocab_size))
        self.register_buffer("pe", sinusoidal_positions(cfg.max_len + 1, d).float(), persistent=False)
        self.reset_parameters(generator)

    @torch.no_grad()
    def reset_parameters(self, generator: torch.Generator | None = None):
        d = self.cfg.d
        for name, p in self.named_parameters():
            if name == "embedding":
                p.normal_(0.0, 1.0 / math.sqrt(d), generator=generator)
            elif name.endswith("bias") or name == "out_bias" or "bias_" in name:
                p.zero_()
            elif p.dim() == 1:  # layer-norm gains
                p.fill_(1.0)
            else:
                bound = math.sqrt(6.0 / (p.shape[0] + p.shape[1]))
                p.uniform_(-bound, bound, generator=generator)

    # -- encoder ---------------------------------------------------------

    def encode(self, ids: torch.Tensor, lengths: Sequence[int] | None = None,
               generator: torch.Generator | None = None, k: int | None = None) -> torch.Tensor:
        """Context encodings ``h`` of shape (B, T+1, d).

        ``ids`` holds characters only (B, T); ``<bos>`` is prepended here.
        ``h[:, i]`` conditions segments that start at character index ``i``.
        """
        cfg = self.cfg
        k = cfg.k if k is None else k
        if ids.dim() == 1:
            ids = ids.unsqueeze(0)
        Bsz, T = ids.shape
        if T > cfg.max_len:
            raise ValueError(f"sequence of {T} characters exceeds max_len={cfg.max_len}")
        if lengths is None:
            lengths = [T] * Bsz
        lengths_t = torch.as_tensor(lengths, dtype=torch.long)
        train = self.training
        bos = torch.full((Bsz, 1), 1, dtype=torch.long)
        seq = torch.cat([bos, ids], dim=1)
        n = T + 1
        x = B.embedding_lookup(self.embedding, seq) * math.sqrt(cfg.d) + self.pe[:n].to(self.embedding.dtype)
        mem = B.dropout(x, cfg.emb_dropout, generator, train)
        key_ok = torch.arange(n).view(1, n) <= lengths_t.view(Bsz, 1)
        allowed = build_segmental_mask(n, k).view(1, 1, n, n) & key_ok.view(Bsz, 1, 1, n)
        g = mem
        for layer in self.layers:
            g = layer(g, mem, allowed, cfg.enc_dropout, generator, train)
        return B.layer_norm(g, self.ln_out.weight, self.ln_out.bias)

    # -- decoder ---------------------------------------------------------

    def _emission_mask(self) -> torch.Tensor:
        m = torch.zeros(self.cfg.vocab_size, dtype=torch.bool)
        m[[0, 1, 2, 4]] = True  # pad, bos, eos, seg-start are never emitted
        return m

    def score_edges(self, h: torch.Tensor, ids: torch.Tensor, lengths: Sequence[int] | None = None,
                    generator: torch.Generator | None = None, k: int | None = None,
                    fill: float = -math.inf) -> torch.Tensor:
        """Segment log-probabilities, shape (B, T, k).

        ``out[b, i, l-1] = sum_m log p(x[i+m]) + log p(<seg-end>)`` for the
        segment of length ``l`` starting at ``i``. Entries running past a
        line's end are set to ``fill``.
        """
        cfg = self.cfg
        k = cfg.k if k is None else k
        if ids.dim() == 1:
            ids = ids.unsqueeze(0)
        Bsz, T = ids.shape
        if h.shape[:2] != (Bsz, T + 1):
            raise ValueError(f"encodings {tuple(h.shape)} do not match ids {tuple(ids.shape)}")
        if lengths is None:
            lengths = [T] * Bsz
        lengths_t = torch.as_tensor(lengths, dtype=torch.long)
        train = self.training
        d = cfg.d

        ctx = h[:, :T]
        if train and cfg.ctx_dropout > 0:
            # unscaled: a dropped start sees an exact zero vector
            keep = torch.rand((Bsz, T, 1), generator=generator) >= cfg.ctx_dropout
            ctx = ctx * keep.to(ctx.dtype)
        ctx = B.dropout(ctx, cfg.dec_dropout, generator, train).reshape(Bsz * T, d)
        h0, c0 = self.dec_init(ctx).chunk(2, dim=-1)

        # windows[b, i, m] = x[i + m] (pad past the end)
        padded = torch.cat([ids, ids.new_zeros(Bsz, k)], dim=1)
        windows = padded.unfold(1, k, 1)[:, :T]  # (B, T, k)
        start = B.embedding_lookup(self.embedding, torch.tensor([4]))
        start = B.dropout(start.expand(Bsz * T, 1, d), cfg.dec_dropout, generator, train)
        chars = B.embedding_lookup(self.embedding, windows.reshape(Bsz * T, k))
        inputs = torch.cat([start, chars], dim=1)  # (B*T, k+1, d)
        out, _ = self.lstm(inputs, (h0.unsqueeze(0).contiguous(), c0.unsqueeze(0).contiguous()))
        logits = B.matmul(self.dec_out(out), self.embedding.t()) + self.out_bias
        logits = logits.masked_fill(self._emission_mask(), -math.inf)
        lp = B.log_softmax(logits, axis=-1).view(Bsz, T, k + 1, -1)

        targets = windows.masked_fill(windows == 0, 5)  # keep gathers finite past the end
        char_lp = lp[:, :, :k].gather(-1, targets.unsqueeze(-1)).squeeze(-1)
        end_lp = lp[:, :, 1:, 5]
        edges = torch.cumsum(char_lp, dim=-1) + end_lp

        i_idx = torch.arange(T).view(1, T, 1)
        l_idx = torch.arange(1, k + 1).view(1, 1, k)
        invalid = (i_idx + l_idx) > lengths_t.view(Bsz, 1, 1)
        return edges.masked_fill(invalid, fill)

    # -- objective -------------------------------------------------------

    def line_logprobs(self, ids: torch.Tensor, lengths: Sequence[int],
                      generator: torch.Generator | None = None) -> torch.Tensor:
        h = self.encode(ids, lengths, generator)
        edges = self.score_edges(h, ids, lengths, generator, fill=0.0)
        return forward_logprob(edges, lengths)

    def lattice(self, line: EncodedLine) -> EdgeLattice:
        ids = torch.tensor(line.ids, dtype=torch.long).unsqueeze(0)
        h = self.encode(ids)
        return EdgeLattice(self.score_edges(h, ids)[0])


def pad_batch(lines: Sequence[EncodedLine]) -> tuple[torch.Tensor, list[int]]:
    lengths = [len(line) for line in lines]
    if not lines or min(lengths) == 0:
        raise ValueError("batch must be nonempty and every line must have characters")
    T = max(lengths)
    ids = torch.zeros(len(lines), T, dtype=torch.long)
    for b, line in enumerate(lines):
        ids[b, : len(line)] = torch.tensor(line.ids, dtype=torch.long)
    return ids, lengths


def nll_loss(model: MSLM, batch: Sequence[EncodedLine], generator: torch.Generator | None = None) -> torch.Tensor:
    """Mean over lines of the negative log marginal likelihood."""
    ids, lengths = pad_batch(batch)
    return -model.line_logprobs(ids, lengths, generator).mean()


@torch.no_grad()
def corpus_logprob(model: MSLM, lines: Sequence[EncodedLine], batch_size: int = 64) -> tuple[float, int]:
    """Total log marginal (nats) and character count, inference mode."""
    was = model.training
    model.eval()
    total, chars = 0.0, 0
    order = sorted(range(len(lines)), key=lambda i: len(lines[i]))
    for s in range(0, len(order), batch_size):
        chunk = [lines[i] for i in order[s : s + batch_size]]
        ids, lengths = pad_batch(chunk)
        total += float(model.line_logprobs(ids, lengths).double().sum())
        chars += sum(lengths)
    model.train(was)
    return total, chars


def corpus_bpc(model: MSLM, lines: Sequence[EncodedLine], batch_size: int = 64) -> float:
    """Character-weighted bits per character over a corpus."""
    total, chars = corpus_logprob(model, lines, batch_size)
    if chars == 0:
        raise ValueError("bpc needs at least one character")
    return -total / (chars * math.log(2))


@torch.no_grad()
def segment_encoded(model: MSLM, lines: Sequence[EncodedLine], batch_size: int = 64) -> list[Segmentation]:
    was = model.training
    model.eval()
    out: list[Segmentation | None] = [None] * len(lines)
    order = sorted(range(len(lines)), key=lambda i: len(lines[i]))
    for s in range(0, len(order), batch_size):
        idx = order[s : s + batch_size]
        ids, lengths = pad_batch([lines[i] for i in idx])
        edges = model.score_edges(model.encode(ids, lengths), ids, lengths)
        for row, i in enumerate(idx):
            n = lengths[row]
            out[i] = viterbi(EdgeLattice(edges[row, :n]))[0]
    model.train(was)
    return out  # type: ignore[return-value]


def render(raw: str, seg: Segmentation) -> str:
    return " ".join(seg.apply(raw))


def segment_line(model: MSLM, vocab: CharVocab, line: str) -> str:
    """Strip whitespace, decode the best segmentation, re-insert single spaces."""
    enc = encode_line(vocab, line)
    return render(enc.raw, segment_encoded(model, [enc])[0])


def segment_lines(model: MSLM, vocab: CharVocab, lines: Sequence[str], batch_size: int = 64) -> list[str]:
    encoded = [encode_line(vocab, line) for line in lines]
    segs = segment_encoded(model, encoded, batch_size)
    return [render(e.raw, s) for e, s in zip(encoded, segs)]
