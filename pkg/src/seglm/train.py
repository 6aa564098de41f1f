"""Pre-training / fine-tuning loops, schedules, checkpoints and sweeps."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
import statistics
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .corpus import CharVocab, EncodedLine, RawCorpus, build_vocab, downsample, encode_corpus, extend_vocab
from .embed_init import EmbeddingTable, init_specials
from .eval import EvalReport, boundary_vector, mcc, score_segmentations, split_segments
from .mslm import MSLM, ModelConfig, corpus_bpc, nll_loss, render, segment_encoded

log = logging.getLogger(__name__)

CKPT_HEADER = b"seglm-ckpt v1\n"


class DivergenceError(RuntimeError):
    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value} at step {step}")
        self.step = step


@dataclass
class TrainConfig:
    steps: int = 16768
    warmup_steps: int = 1024
    peak_lr: float = 5e-4
    encoder_dropout: float = 0.125
    other_dropout: float = 0.0625
    batch_size: int = 32
    checkpoint_every: int = 128
    seed: int = 0
    mode: str = "pretrain"
    clip_norm: float = 1.0
    dtype: str = "float32"

    def __post_init__(self):
        if self.steps < 1 or not 0 <= self.warmup_steps <= self.steps:
            raise ValueError(f"need 0 <= warmup_steps ({self.warmup_steps}) <= steps ({self.steps})")
        for name in ("encoder_dropout", "other_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in [0, 1)")
        if self.mode not in ("pretrain", "finetune"):
            raise ValueError(f"mode must be pretrain or finetune, got {self.mode!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.batch_size < 1 or self.checkpoint_every < 1:
            raise ValueError("batch_size and checkpoint_every must be >= 1")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


def lr_at(config: TrainConfig, step: int) -> float:
    """Linear warmup to ``peak_lr`` then linear decay to 0 at ``steps``."""
    if not 0 <= step <= config.steps:
        raise ValueError(f"step {step} outside [0, {config.steps}]")
    if step <= config.warmup_steps:
        return config.peak_lr * step / config.warmup_steps if config.warmup_steps else config.peak_lr
    return config.peak_lr * (config.steps - step) / (config.steps - config.warmup_steps)


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    step: int
    model_config: ModelConfig
    params: dict[str, torch.Tensor] | None
    vocab: CharVocab
    val_bpc: float
    optimizer: dict | None = None  # {"step": int, "exp_avg": [...], "exp_avg_sq": [...]}
    provenance: dict = field(default_factory=dict)
    mcc: float | None = None

    def model(self) -> MSLM:
        if self.params is None:
            raise ValueError(f"checkpoint at step {self.step} was not retained in memory")
        m = MSLM(self.model_config)
        dtype = next(iter(self.params.values())).dtype
        m.to(dtype)
        m.load_state_dict(self.params)
        m.eval()
        return m


def _blob(data: bytes) -> bytes:
    return struct.pack("<I", len(data)) + data


def _json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False).encode("utf-8")


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    """Binary layout: header line, four length-prefixed UTF-8 blobs (metadata,
    model config, vocabulary, provenance), then raw little-endian tensors:
    parameters in ``named_parameters`` order, followed by Adam first and
    second moments in the same order when optimizer state is present."""
    if ckpt.params is None:
        raise ValueError("cannot save a checkpoint without parameters")
    names = list(ckpt.params)
    dtype = ckpt.params[names[0]].dtype
    fmt = "<f8" if dtype == torch.float64 else "<f4"
    meta = {
        "step": ckpt.step,
        "val_bpc": repr(float(ckpt.val_bpc)),
        "mcc": None if ckpt.mcc is None else repr(float(ckpt.mcc)),
        "dtype": fmt,
        "params": [[n, list(ckpt.params[n].shape)] for n in names],
        "adam_step": None if ckpt.optimizer is None else ckpt.optimizer["step"],
    }
    out = [CKPT_HEADER, _blob(_json(meta)), _blob(_json(ckpt.model_config.to_dict())),
           _blob(ckpt.vocab.to_text().encode("utf-8")), _blob(_json(ckpt.provenance))]
    tensors = [ckpt.params[n] for n in names]
    if ckpt.optimizer is not None:
        tensors += list(ckpt.optimizer["exp_avg"]) + list(ckpt.optimizer["exp_avg_sq"])
    for t in tensors:
        out.append(t.detach().cpu().numpy().astype(fmt).tobytes())
    Path(path).write_bytes(b"".join(out))


def load_checkpoint(path: str | Path) -> Checkpoint:
    data = Path(path).read_bytes()
    if not data.startswith(CKPT_HEADER):
        raise ValueError(f"{path}: not a checkpoint file")
    pos = len(CKPT_HEADER)
    blobs = []
    for _ in range(4):
        (n,) = struct.unpack_from("<I", data, pos)
        blobs.append(data[pos + 4 : pos + 4 + n])
        pos += 4 + n
    meta = json.loads(blobs[0])
    cfg = ModelConfig(**json.loads(blobs[1]))
    vocab = CharVocab.from_text(blobs[2].decode("utf-8"))
    prov = json.loads(blobs[3])
    fmt = meta["dtype"]
    itemsize = np.dtype(fmt).itemsize
    torch_dtype = torch.float64 if fmt == "<f8" else torch.float32

    def take(shape):
        nonlocal pos
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype=fmt, count=count, offset=pos).reshape(shape)
        pos += count * itemsize
        return torch.from_numpy(arr.astype(arr.dtype.newbyteorder("="))).to(torch_dtype)

    params = {name: take(shape) for name, shape in meta["params"]}
    optimizer = None
    if meta["adam_step"] is not None:
        shapes = [shape for _, shape in meta["params"]]
        optimizer = {
            "step": meta["adam_step"],
            "exp_avg": [take(s) for s in shapes],
            "exp_avg_sq": [take(s) for s in shapes],
        }
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes")
    return Checkpoint(
        step=meta["step"],
        model_config=cfg,
        params=params,
        vocab=vocab,
        val_bpc=float(meta["val_bpc"]),
        optimizer=optimizer,
        provenance=prov,
        mcc=None if meta["mcc"] is None else float(meta["mcc"]),
    )


def select_best(checkpoints: Sequence[Checkpoint]) -> Checkpoint:
    """Lowest validation bpc; the earliest step wins ties."""
    if not checkpoints:
        raise ValueError("no checkpoints to select from")
    return min(checkpoints, key=lambda c: (c.val_bpc, c.step))


# ---------------------------------------------------------------------------
# model setup


def _as_lines(data: RawCorpus | Sequence[str]) -> RawCorpus:
    return data if isinstance(data, RawCorpus) else RawCorpus(tuple(data))


def load_embeddings(model: MSLM, table: EmbeddingTable) -> None:
    """Copy a pre-trained table into the model, rescaled to the init RMS 1/sqrt(d)."""
    if table.matrix.shape != tuple(model.embedding.shape):
        raise ValueError(f"embedding table {table.matrix.shape} vs model {tuple(model.embedding.shape)}")
    mat = torch.from_numpy(table.matrix.astype(np.float64))
    rms = float(mat.pow(2).mean().sqrt())
    if rms > 0:
        mat = mat * (1.0 / math.sqrt(table.dim)) / rms
    with torch.no_grad():
        model.embedding.copy_(mat.to(model.embedding.dtype))


def fresh_model(config: TrainConfig, model_config: ModelConfig, vocab: CharVocab,
                embeddings: EmbeddingTable | None = None, generator: torch.Generator | None = None) -> MSLM:
    """The untrained model a fresh ``train_run`` starts from."""
    if generator is None:
        generator = torch.Generator().manual_seed(config.seed)
    cfg = replace(model_config, vocab_size=len(vocab), enc_dropout=config.encoder_dropout,
                  emb_dropout=config.other_dropout, dec_dropout=config.other_dropout)
    model = MSLM(cfg, generator)
    if embeddings is not None:
        if embeddings.vocab_hash != vocab.fingerprint():
            raise ValueError("embedding table was built for a different vocabulary")
        load_embeddings(model, embeddings)
    return model


def grow_vocab(model: MSLM, vocab: CharVocab, corpus: RawCorpus, seed: int) -> tuple[MSLM, CharVocab, list[int]]:
    """Extend vocabulary and embedding rows to cover ``corpus``.

    Existing rows (specials included) are kept; appended characters get
    N(0, 1/d) rows and a zero output bias.
    """
    new_vocab, new_ids = extend_vocab(vocab, corpus)
    if not new_ids:
        return model, vocab, []
    old = model.embedding.detach().cpu().numpy()
    table = init_specials(EmbeddingTable(old, model.cfg.d, vocab.fingerprint()), new_vocab, seed)
    cfg = replace(model.cfg, vocab_size=len(new_vocab))
    grown = MSLM(cfg).to(model.embedding.dtype)
    state = {k: v.clone() for k, v in model.state_dict().items()}
    emb = torch.from_numpy(table.matrix).to(model.embedding.dtype)
    emb[: old.shape[0]] = model.embedding.detach()
    state["embedding"] = emb
    bias = torch.zeros(len(new_vocab), dtype=model.out_bias.dtype)
    bias[: old.shape[0]] = model.out_bias.detach()
    state["out_bias"] = bias
    grown.load_state_dict(state)
    log.info("extended vocabulary by %d characters", len(new_ids))
    return grown, new_vocab, new_ids


# ---------------------------------------------------------------------------
# batching


def _step_generator(seed: int, step: int) -> torch.Generator:
    return torch.Generator().manual_seed(seed * 1_000_003 + step)


class Batcher:
    """Length-bucketed batches; the order for each epoch is a pure function
    of (seed, epoch), so a run can resume at any step."""

    def __init__(self, lines: Sequence[EncodedLine], batch_size: int, seed: int):
        if not lines:
            raise ValueError("no training lines")
        self.lines = list(lines)
        self.batch_size = batch_size
        self.seed = seed
        self.per_epoch = -(-len(self.lines) // batch_size)
        self._cache: tuple[int, list[list[int]]] | None = None

    def _epoch(self, epoch: int) -> list[list[int]]:
        if self._cache and self._cache[0] == epoch:
            return self._cache[1]
        rng = random.Random(f"{self.seed}:{epoch}")
        idx = list(range(len(self.lines)))
        rng.shuffle(idx)
        idx.sort(key=lambda i: len(self.lines[i]))
        batches = [idx[s : s + self.batch_size] for s in range(0, len(idx), self.batch_size)]
        rng.shuffle(batches)
        self._cache = (epoch, batches)
        return batches

    def batch(self, step: int) -> list[EncodedLine]:
        """Batch used for the 1-based update ``step``."""
        epoch, pos = divmod(step - 1, self.per_epoch)
        return [self.lines[i] for i in self._epoch(epoch)[pos]]


# ---------------------------------------------------------------------------
# training


@dataclass
class MetricRow:
    step: int
    train_bpc: float | None
    val_bpc: float
    mcc: float | None = None

    def line(self) -> str:
        tr = "" if self.train_bpc is None else f"{self.train_bpc:.6f}"
        mc = "" if self.mcc is None else f"\t{self.mcc:.6f}"
        return f"{self.step}\t{tr}\t{self.val_bpc:.6f}{mc}"


def _snapshot(model: MSLM) -> dict[str, torch.Tensor]:
    return {n: p.detach().clone() for n, p in model.named_parameters()}


def _opt_state(opt: torch.optim.Adam, model: MSLM) -> dict:
    params = list(model.parameters())
    st = [opt.state.get(p, {}) for p in params]
    step = int(st[0]["step"]) if st and "step" in st[0] else 0
    return {
        "step": step,
        "exp_avg": [s["exp_avg"].clone() if s else torch.zeros_like(p) for s, p in zip(st, params)],
        "exp_avg_sq": [s["exp_avg_sq"].clone() if s else torch.zeros_like(p) for s, p in zip(st, params)],
    }


def _restore_opt(opt: torch.optim.Adam, model: MSLM, state: dict) -> None:
    if state["step"] == 0:
        return
    for p, m, v in zip(model.parameters(), state["exp_avg"], state["exp_avg_sq"]):
        opt.state[p] = {
            "step": torch.tensor(float(state["step"]), dtype=torch.float32),
            "exp_avg": m.clone().to(p.dtype),
            "exp_avg_sq": v.clone().to(p.dtype),
        }


def gold_mcc(model: MSLM, vocab: CharVocab, gold: RawCorpus) -> float:
    enc = encode_corpus(vocab, gold, gold=True)
    if not enc:
        raise ValueError("gold corpus has no lines")
    segs = segment_encoded(model, enc)
    pred = [boundary_vector(s.apply(e.raw)) for s, e in zip(segs, enc)]
    ref = [boundary_vector(e.gold_segments()) for e in enc]
    return mcc(pred, ref)


def monitor_mcc(checkpoint: Checkpoint, gold: RawCorpus) -> float:
    """Boundary MCC of the checkpoint's Viterbi output against gold lines."""
    if not gold.lines:
        raise ValueError("monitoring MCC needs a gold-segmented validation corpus")
    return gold_mcc(checkpoint.model(), checkpoint.vocab, gold)


def score_model(model: MSLM, vocab: CharVocab, gold: RawCorpus, batch_size: int = 64) -> EvalReport:
    """Segment the whitespace-stripped gold lines and score against gold."""
    enc = encode_corpus(vocab, gold, gold=True)
    segs = segment_encoded(model, enc, batch_size)
    pred = [split_segments(render(e.raw, s)) for e, s in zip(enc, segs)]
    ref = [e.gold_segments() for e in enc]
    return score_segmentations(pred, ref)


def train_run(config: TrainConfig, init: Checkpoint | None, train: RawCorpus | Sequence[str],
              val: RawCorpus | Sequence[str], model_config: ModelConfig | None = None,
              vocab: CharVocab | None = None, embeddings: EmbeddingTable | None = None,
              gold_val: RawCorpus | None = None, resume: bool = False,
              keep_params: str = "best", out_dir: str | Path | None = None,
              metrics: list[MetricRow] | None = None,
              on_checkpoint: Callable[[Checkpoint], None] | None = None) -> list[Checkpoint]:
    """Train an MSLM and return the checkpoints taken every ``checkpoint_every`` steps.

    ``init=None`` starts a fresh model from ``model_config`` (vocabulary built
    from ``train`` unless given). With a checkpoint, ``mode="finetune"``
    restarts the step counter and optimizer; ``resume=True`` instead
    continues the same run from the checkpoint's step and optimizer state.
    """
    torch_dtype = torch.float64 if config.dtype == "float64" else torch.float32
    train, val = _as_lines(train), _as_lines(val)
    gen = torch.Generator().manual_seed(config.seed)
    start = 0
    parent = None
    if init is None:
        if model_config is None:
            raise ValueError("a fresh run needs a model_config")
        vocab = vocab or build_vocab(train)
        model = fresh_model(config, model_config, vocab, embeddings, gen).to(torch_dtype)
    else:
        parent = init.provenance.get("id")
        model = init.model().to(torch_dtype)
        vocab = init.vocab
        if resume:
            start = init.step
        else:
            model, vocab, _ = grow_vocab(model, vocab, train, config.seed)
        model.cfg = replace(model.cfg, enc_dropout=config.encoder_dropout,
                            emb_dropout=config.other_dropout, dec_dropout=config.other_dropout)
    cfg = model.cfg

    train_enc = encode_corpus(vocab, train)
    val_enc = encode_corpus(vocab, val)
    if any(vocab.unk in line.ids for line in train_enc):
        raise ValueError("training corpus contains characters outside the vocabulary")
    if not train_enc or not val_enc:
        raise ValueError("training and validation corpora must be nonempty")
    batcher = Batcher(train_enc, config.batch_size, config.seed)

    opt = torch.optim.Adam(model.parameters(), lr=0.0, betas=(0.9, 0.999), eps=1e-8)
    if resume and init is not None and init.optimizer is not None:
        _restore_opt(opt, model, init.optimizer)

    prov_base = {
        "config": asdict(config),
        "config_hash": config.digest(),
        "parent": parent,
        "train": train.provenance,
    }
    log_file = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log_file = open(out_dir / "metrics.tsv", "a" if resume else "w", encoding="utf-8")

    def emit(row: MetricRow):
        if metrics is not None:
            metrics.append(row)
        if log_file is not None:
            log_file.write(row.line() + "\n")
            log_file.flush()
        log.info("step %d  train_bpc %s  val_bpc %.4f%s", row.step, row.train_bpc, row.val_bpc,
                 "" if row.mcc is None else f"  mcc {row.mcc:.4f}")

    if start == 0:
        emit(MetricRow(0, None, corpus_bpc(model, val_enc),
                       gold_mcc(model, vocab, gold_val) if gold_val is not None else None))

    checkpoints: list[Checkpoint] = []
    nll_sum, char_sum = 0.0, 0
    clipped = 0
    model.train()
    try:
        for step in range(start + 1, config.steps + 1):
            for group in opt.param_groups:
                group["lr"] = lr_at(config, step)
            batch = batcher.batch(step)
            loss = nll_loss(model, batch, _step_generator(config.seed, step))
            value = loss.item()
            if not math.isfinite(value):
                raise DivergenceError(step, value)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            norm = torch.nn.utils.clip_grad_norm_(model.parameters(), config.clip_norm)
            if float(norm) > config.clip_norm:
                clipped += 1
            opt.step()
            nll_sum += value * len(batch)
            char_sum += sum(len(line) for line in batch)

            if step % config.checkpoint_every == 0:
                train_bpc = nll_sum / (char_sum * math.log(2))
                nll_sum, char_sum = 0.0, 0
                vb = corpus_bpc(model, val_enc)
                mc = gold_mcc(model, vocab, gold_val) if gold_val is not None else None
                model.train()
                emit(MetricRow(step, train_bpc, vb, mc))
                if clipped:
                    log.debug("gradient clipped on %d steps up to %d", clipped, step)
                prov = dict(prov_base, id=f"{config.digest()}@{step}")
                ck = Checkpoint(step, cfg, _snapshot(model), vocab, vb, _opt_state(opt, model), prov, mc)
                if out_dir is not None:
                    save_checkpoint(ck, out_dir / f"step{step:06d}.ckpt")
                if on_checkpoint is not None:
                    on_checkpoint(ck)
                checkpoints.append(ck)
                if keep_params != "all":
                    best = select_best(checkpoints)
                    for c in checkpoints[:-1]:
                        if c is not best:
                            c.params = None
                            c.optimizer = None
    finally:
        if log_file is not None:
            log_file.close()
    return checkpoints


# ---------------------------------------------------------------------------
# sweeps and size ladders


@dataclass
class SweepGrid:
    learning_rates: list[float]
    encoder_dropouts: list[float]

    def __post_init__(self):
        if not self.learning_rates or not self.encoder_dropouts:
            raise ValueError("sweep grid must be nonempty")

    def points(self) -> list[tuple[float, float]]:
        return [(lr, p) for lr in self.learning_rates for p in self.encoder_dropouts]


# grids listed in the hyperparameter appendix of the source experiments
PRETRAIN_GRID = SweepGrid([0.0005 + i * 0.0004 / 7 for i in range(8)], [0.125, 0.25])
FINETUNE_GRIDS = {
    256: SweepGrid([5e-5, 7.5e-5, 1e-4, 2.5e-4, 5e-4], [0.125, 0.25, 0.5]),
    2048: SweepGrid([1e-4, 2.5e-4, 5e-4, 7.5e-4, 1e-3], [0.125, 0.25, 0.5]),
    "full": SweepGrid([1e-4, 2.5e-4, 5e-4, 7.5e-4, 1e-3], [0.065, 0.125, 0.25]),
}


@dataclass
class SweepRow:
    lr: float
    encoder_dropout: float
    best_val_bpc: float | None
    best_step: int | None
    f1: float | None
    status: str = "ok"


@dataclass
class SweepReport:
    rows: list[SweepRow]
    winner: SweepRow | None
    best_checkpoint: Checkpoint | None = None

    def top_f1(self, n: int = 4) -> tuple[float, float, float] | None:
        """(mean, stdev, stdev/mean) of F1 over the ``n`` best rows by bpc."""
        ok = sorted((r for r in self.rows if r.status == "ok" and r.f1 is not None),
                    key=lambda r: r.best_val_bpc)[:n]
        if not ok:
            return None
        f1s = [r.f1 for r in ok]
        mean = statistics.fmean(f1s)
        sd = statistics.stdev(f1s) if len(f1s) > 1 else 0.0
        return mean, sd, (sd / mean if mean else 0.0)

    def to_tsv(self) -> str:
        out = ["lr\tencoder_dropout\tbest_val_bpc\tbest_step\tf1\tstatus"]
        for r in self.rows:
            out.append("\t".join([
                f"{r.lr:g}", f"{r.encoder_dropout:g}",
                "" if r.best_val_bpc is None else f"{r.best_val_bpc:.6f}",
                "" if r.best_step is None else str(r.best_step),
                "" if r.f1 is None else f"{r.f1:.6f}",
                r.status,
            ]))
        return "\n".join(out) + "\n"

    def summary(self) -> str:
        lines = []
        if self.winner is not None:
            lines.append(f"winner: lr={self.winner.lr:g} encoder_dropout={self.winner.encoder_dropout:g} "
                         f"val_bpc={self.winner.best_val_bpc:.4f}")
        top = self.top_f1()
        if top is not None:
            mean, sd, ratio = top
            lines.append(f"top-4 F1: {100 * mean:.1f} ± {100 * sd:.1f} ({100 * ratio:.1f}%)")
        return "\n".join(lines)


def _sweep_point(args):
    lr, p, base, init, train, val, model_config, vocab, embeddings, gold = args
    cfg = replace(base, peak_lr=lr, encoder_dropout=p)
    try:
        cks = train_run(cfg, init, train, val, model_config=model_config, vocab=vocab, embeddings=embeddings)
        best = select_best(cks)
        f1 = score_model(best.model(), best.vocab, gold).f1 if gold is not None else None
        return SweepRow(lr, p, best.val_bpc, best.step, f1), best
    except (DivergenceError, ValueError, RuntimeError) as exc:
        log.warning("sweep point lr=%g dropout=%g failed: %s", lr, p, exc)
        return SweepRow(lr, p, None, None, None, f"failed: {exc}"), None


def sweep(grid: SweepGrid, base: TrainConfig, train: RawCorpus | Sequence[str], val: RawCorpus | Sequence[str],
          init: Checkpoint | None = None, model_config: ModelConfig | None = None,
          vocab: CharVocab | None = None, embeddings: EmbeddingTable | None = None,
          gold: RawCorpus | None = None, jobs: int = 1) -> SweepReport:
    """One ``train_run`` per grid point; the winner has the lowest best bpc."""
    train, val = _as_lines(train), _as_lines(val)
    tasks = [(lr, p, base, init, train, val, model_config, vocab, embeddings, gold) for lr, p in grid.points()]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    rows = [r for r, _ in results]
    ok = [(r, c) for r, c in results if r.status == "ok"]
    if not ok:
        return SweepReport(rows, None, None)
    win_row, win_ck = min(ok, key=lambda rc: (rc[0].best_val_bpc, rows.index(rc[0])))
    return SweepReport(rows, win_row, win_ck)


def size_ladder(corpus: RawCorpus, sizes: Sequence[int], seed: int) -> list[RawCorpus]:
    """Nested downsamples: each smaller set is a subset of the next larger one."""
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError(f"sizes must be ascending: {sizes}")
    if sizes and sizes[-1] > len(corpus):
        raise ValueError(f"largest ladder size {sizes[-1]} exceeds corpus size {len(corpus)}")
    out: list[RawCorpus] = []
    current = corpus
    for n in reversed(sizes):
        current = downsample(current, n, seed)
        out.append(current)
    return out[::-1]


DEFAULT_LADDER = [256, 512, 1024, 2048, 4096, 8192, 2**14, 2**15]


def ladder_schedule(size: int, sizes: Sequence[int], base: TrainConfig) -> TrainConfig:
    """Fine-tuning schedule for one ladder size.

    The two smallest sizes train for 4096 steps with 512 warmup steps, the
    rest for 8192 with 1024; sizes up to 512 checkpoint every 64 steps,
    larger ones every 128.
    """
    small = sorted(set(sizes))[:2]
    steps, warmup = (4096, 512) if size in small else (8192, 1024)
    every = 64 if size <= 512 else 128
    return replace(base, steps=steps, warmup_steps=warmup, checkpoint_every=every, mode="finetune")


def nearest_tuned(size: int, tuned: Sequence[int]) -> int:
    """The tuned size closest to ``size`` on a log scale (smaller wins ties)."""
    if not tuned:
        raise ValueError("no tuned sizes")
    return min(sorted(tuned), key=lambda t: abs(math.log(size) - math.log(t)))
