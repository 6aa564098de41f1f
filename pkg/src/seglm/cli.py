"""Command-line entry point: ``seglm <subcommand> ...``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numeric divergence during training.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config, load_rules
from .corpus import (
    CleaningRules,
    CharVocab,
    CorpusError,
    RawCorpus,
    StatsReport,
    build_vocab,
    concat_corpora,
    corpus_stats,
    downsample,
    encode_corpus,
    preprocess,
    read_corpus,
    remove_overlap,
    strip_ws,
    write_corpus,
)
from .eval import EvalError, evaluate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4

log = logging.getLogger("seglm")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def resolve_seed(flag: int | None, cfg: ExperimentConfig | None = None) -> int:
    """``--seed``, then the config file, then ``SEGLM_SEED``, then 0."""
    if flag is not None:
        return flag
    if cfg is not None and cfg.seed is not None:
        return cfg.seed
    env = os.environ.get("SEGLM_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"SEGLM_SEED must be an integer, got {env!r}") from None
    return 0


def _need(path: str | Path | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"missing {what}")
    p = Path(path)
    if not p.exists():
        raise DataError(f"{what} {p} does not exist")
    return p


def _load_cfg(args) -> ExperimentConfig:
    return load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()


def _data(args, cfg: ExperimentConfig, name: str, required: bool = True) -> Path | None:
    value = getattr(args, name, None)
    if value is not None:
        return _need(value, f"--{name.replace('_', '-')}")
    if name in cfg.data:
        return cfg.data[name]
    if required:
        raise UsageError(f"--{name.replace('_', '-')} is required (or set it under [data] in --config)")
    return None


def _train_config(args, cfg: ExperimentConfig, seed: int, mode: str):
    from .train import TrainConfig

    tc = replace(cfg.train, seed=seed, mode=mode)
    overrides = {
        "steps": args.steps, "warmup_steps": args.warmup, "peak_lr": args.lr,
        "encoder_dropout": args.encoder_dropout, "batch_size": args.batch_size,
        "checkpoint_every": args.checkpoint_every,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    try:
        return TrainConfig(**{**tc.__dict__, **overrides})
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _model_config(args, cfg: ExperimentConfig):
    from .mslm import ModelConfig

    overrides = {"layers": args.layers, "d": args.d, "ff": args.ff, "heads": args.heads, "k": args.k,
                 "ctx_dropout": args.ctx_dropout}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    try:
        return ModelConfig(**{**cfg.model.to_dict(), **overrides})
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _read_gold(path: Path | None) -> RawCorpus | None:
    return None if path is None else read_corpus(path)


# ---------------------------------------------------------------------------
# subcommands


def cmd_preprocess(args) -> int:
    rules = load_rules(args.rules) if args.rules else CleaningRules()
    inputs = [_need(p, "input") for p in args.inputs]
    heldout = [_need(p, "--heldout") for p in args.heldout]
    if args.dry_run:
        print(f"would preprocess {len(inputs)} file(s) -> {args.out}")
        return EXIT_OK
    parts = [preprocess(read_corpus(p), rules) for p in inputs]
    corpus = parts[0] if len(parts) == 1 else concat_corpora(parts)
    for h in heldout:
        corpus = remove_overlap(corpus, read_corpus(h))
    if args.downsample is not None:
        corpus = downsample(corpus, args.downsample, resolve_seed(args.seed))
    write_corpus(corpus, args.out)
    if args.vocab_out:
        build_vocab(corpus).save(args.vocab_out)
    print(f"{len(corpus)} lines -> {args.out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    files = [_need(p, "input") for p in args.inputs]
    if args.dry_run:
        return EXIT_OK
    print("\t".join(("file",) + StatsReport.COLUMNS))
    for p in files:
        print("\t".join([p.name] + [str(v) for v in corpus_stats(read_corpus(p)).row()]))
    return EXIT_OK


def cmd_embed_init(args) -> int:
    train = _need(args.train, "--train")
    if args.dry_run:
        print(f"would train {args.dim}-d CBOW embeddings on {train}")
        return EXIT_OK
    from .embed_init import init_specials, train_cbow

    seed = resolve_seed(args.seed)
    corpus = read_corpus(train)
    vocab = CharVocab.load(args.vocab) if args.vocab else build_vocab(corpus)
    table = train_cbow(encode_corpus(vocab, corpus), vocab, args.dim, args.window, args.epochs, seed)
    table = init_specials(table, vocab, seed)
    table.save(args.out)
    if args.vocab_out:
        vocab.save(args.vocab_out)
    print(f"{len(vocab)} x {args.dim} embeddings -> {args.out}")
    return EXIT_OK


def _report_run(cks, out_dir: Path | None, gold: RawCorpus | None):
    from .train import save_checkpoint, score_model, select_best

    best = select_best(cks)
    line = f"best step {best.step}  val_bpc {best.val_bpc:.4f}"
    if gold is not None:
        rep = score_model(best.model(), best.vocab, gold)
        line += f"  F1 {rep.f1:.4f}  MCC {rep.mcc:.4f}"
    if out_dir is not None:
        save_checkpoint(best, out_dir / "best.ckpt")
    print(line)
    return best


def _train_command(args, mode: str) -> int:
    cfg = _load_cfg(args)
    seed = resolve_seed(args.seed, cfg)
    train = _data(args, cfg, "train")
    val = _data(args, cfg, "val")
    gold = _data(args, cfg, "gold_val", required=False)
    init_path = _need(args.init, "--init") if mode == "finetune" else None
    tc = _train_config(args, cfg, seed, mode)
    mc = _model_config(args, cfg) if mode == "pretrain" else None
    out_dir = Path(args.out_dir) if args.out_dir else cfg.output_dir
    if out_dir is None:
        raise UsageError("--out-dir is required (or set output_dir under [run])")
    emb_path = _need(args.embeddings, "--embeddings") if getattr(args, "embeddings", None) else None
    if args.dry_run:
        print(f"would {mode} for {tc.steps} steps (lr {tc.peak_lr:g}, seed {seed}) -> {out_dir}")
        return EXIT_OK

    from .embed_init import EmbeddingTable
    from .train import load_checkpoint, train_run

    train_c, val_c = read_corpus(train), read_corpus(val)
    init = load_checkpoint(init_path) if init_path else None
    vocab = CharVocab.load(args.vocab) if getattr(args, "vocab", None) else None
    emb = EmbeddingTable.load(emb_path) if emb_path else None
    if emb is not None and vocab is None:
        vocab = build_vocab(train_c)
    cks = train_run(tc, init, train_c, val_c, model_config=mc, vocab=vocab, embeddings=emb,
                    gold_val=_read_gold(gold), out_dir=out_dir, resume=getattr(args, "resume", False))
    _report_run(cks, out_dir, _read_gold(gold))
    return EXIT_OK


def cmd_pretrain(args) -> int:
    return _train_command(args, "pretrain")


def cmd_finetune(args) -> int:
    return _train_command(args, "finetune")


def cmd_segment(args) -> int:
    ckpt = _need(args.ckpt, "--ckpt")
    src = _need(args.input, "--in")
    if args.dry_run:
        return EXIT_OK
    from .mslm import segment_lines
    from .train import load_checkpoint

    ck = load_checkpoint(ckpt)
    model = ck.model()
    lines = Path(src).read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    keep = [i for i, line in enumerate(lines) if strip_ws(line)]
    segmented = segment_lines(model, ck.vocab, [lines[i] for i in keep])
    out = [""] * len(lines)
    for i, s in zip(keep, segmented):
        out[i] = s
    text = "".join(line + "\n" for line in out)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    pred, gold = _need(args.pred, "--pred"), _need(args.gold, "--gold")
    if args.dry_run:
        return EXIT_OK
    report = evaluate(pred, gold, macro=args.macro)
    print(report.tsv() if args.tsv else report.text())
    return EXIT_OK


def _grid(args, cfg: ExperimentConfig):
    from .train import FINETUNE_GRIDS, PRETRAIN_GRID, SweepGrid

    if args.lrs or args.dropouts:
        if not (args.lrs and args.dropouts):
            raise UsageError("--lrs and --dropouts go together")
        return SweepGrid(_floats(args.lrs), _floats(args.dropouts))
    if args.grid:
        return PRETRAIN_GRID if args.grid == "pretrain" else FINETUNE_GRIDS[_grid_key(args.grid)]
    if cfg.sweep is not None:
        return cfg.sweep
    raise UsageError("choose a grid with --grid, --lrs/--dropouts or a [sweep] section")


def _grid_key(name: str):
    return "full" if name == "full" else int(name)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"not a comma-separated list of numbers: {text!r}") from None


def cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    seed = resolve_seed(args.seed, cfg)
    train, val = _data(args, cfg, "train"), _data(args, cfg, "val")
    gold = _data(args, cfg, "gold_val", required=False)
    init_path = _need(args.init, "--init") if args.init else None
    grid = _grid(args, cfg)
    tc = _train_config(args, cfg, seed, "finetune" if init_path else "pretrain")
    mc = None if init_path else _model_config(args, cfg)
    jobs = args.jobs if args.jobs is not None else cfg.jobs
    if args.dry_run:
        print(f"would run {len(grid.points())} training runs with {jobs} job(s)")
        return EXIT_OK
    from .train import load_checkpoint, save_checkpoint, sweep

    init = load_checkpoint(init_path) if init_path else None
    report = sweep(grid, tc, read_corpus(train), read_corpus(val), init=init, model_config=mc,
                   gold=_read_gold(gold), jobs=jobs)
    tsv = report.to_tsv()
    if args.out:
        Path(args.out).write_text(tsv, encoding="utf-8")
    sys.stdout.write(tsv)
    print(report.summary())
    if report.best_checkpoint is not None and args.best_out:
        save_checkpoint(report.best_checkpoint, args.best_out)
    return EXIT_OK if report.winner is not None else EXIT_DIVERGED


def _sizes(text: str) -> list[int]:
    try:
        sizes = sorted({int(x) for x in text.split(",") if x.strip()})
    except ValueError:
        raise UsageError(f"--sizes must be comma-separated integers, got {text!r}") from None
    if not sizes or sizes[0] < 1:
        raise UsageError("--sizes must list positive integers")
    return sizes


def ladder_columns(sizes: list[int], full: int | None = None) -> list[str]:
    """Column labels of the ladder table: zero-shot, each size, then the whole file."""
    return ["0"] + [str(n) for n in sizes] + ([f"{full} (full)"] if full is not None else [])


def _model_arg(text: str) -> tuple[str, Path]:
    name, sep, path = text.partition("=")
    if not sep:
        name, path = Path(text).stem, text
    return name, _need(path, "--pretrained")


def cmd_ladder(args) -> int:
    """Fine-tune each model on nested target subsets and tabulate F1 by size."""
    train, val, gold = _need(args.train, "--train"), _need(args.val, "--val"), _need(args.gold, "--gold")
    models = [_model_arg(m) for m in args.pretrained]
    if not models and not args.baseline:
        raise UsageError("give at least one --pretrained checkpoint or --baseline")
    sizes = _sizes(args.sizes)
    seed = resolve_seed(args.seed)
    if args.dry_run:
        print(f"would fill a {len(models) + int(args.baseline)} x {len(sizes) + 1 + int(args.full)} grid")
        return EXIT_OK

    import torch

    from .mslm import MSLM, ModelConfig
    from .train import (
        FINETUNE_GRIDS, TrainConfig, ladder_schedule, load_checkpoint, nearest_tuned, score_model,
        select_best, size_ladder, sweep, train_run,
    )

    train_c, val_c, gold_c = read_corpus(train), read_corpus(val), read_corpus(gold)
    sets = size_ladder(train_c, sizes, seed)
    labels = ladder_columns(sizes, len(train_c) if args.full else None)
    columns = list(zip(labels, [None] + sets + ([train_c] if args.full else [])))
    all_sizes = sizes + ([len(train_c)] if args.full else [])
    tuned = {256: 256, 2048: 2048, len(train_c): "full"}

    base = TrainConfig(peak_lr=args.lr, encoder_dropout=args.encoder_dropout, seed=seed,
                       batch_size=args.batch_size or 32)

    def schedule(n: int) -> TrainConfig:
        tc = ladder_schedule(n, all_sizes, base)
        if args.steps is not None:
            tc = replace(tc, steps=args.steps, warmup_steps=min(tc.warmup_steps, args.steps // 4),
                         checkpoint_every=args.checkpoint_every or max(1, args.steps // 4))
        return tc

    def fit(init, corpus: RawCorpus, n: int, mc: ModelConfig | None):
        tc = schedule(n)
        if args.tune:
            key = tuned[nearest_tuned(n, list(tuned))]
            rep = sweep(FINETUNE_GRIDS[key], tc, corpus, val_c, init=init, model_config=mc)
            if rep.best_checkpoint is None:
                raise DataError(f"every sweep run failed at size {n}")
            return rep.best_checkpoint
        if init is None:
            tc = replace(tc, mode="pretrain")
        return select_best(train_run(tc, init, corpus, val_c, model_config=mc))

    rows: list[tuple[str, list[str]]] = []
    for name, path in models:
        ck = load_checkpoint(path)
        cells = []
        for label, corpus in columns:
            # size 0: zero-shot, no target training at all
            best = ck if corpus is None else fit(ck, corpus, len(corpus), None)
            cells.append(f"{100 * score_model(best.model(), best.vocab, gold_c).f1:.1f}")
            log.info("%s @ %s done", name, label)
        rows.append((name, cells))
    if args.baseline:
        ref = load_checkpoint(models[0][1]).model_config if models else ModelConfig()
        mc = replace(ref, vocab_size=0)
        cells = []
        for label, corpus in columns:
            if corpus is None:
                # untrained model over the target character inventory
                vocab = build_vocab(train_c)
                fresh = MSLM(replace(mc, vocab_size=len(vocab)), torch.Generator().manual_seed(seed))
                cells.append(f"{100 * score_model(fresh.eval(), vocab, gold_c).f1:.1f}")
                continue
            best = fit(None, corpus, len(corpus), mc)
            cells.append(f"{100 * score_model(best.model(), best.vocab, gold_c).f1:.1f}")
        rows.append(("monolingual", cells))

    header = "model\t" + "\t".join(label for label, _ in columns)
    text = header + "\n" + "".join(f"{name}\t" + "\t".join(cells) + "\n" for name, cells in rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="random seed (falls back to $SEGLM_SEED, then 0)")
    p.add_argument("--dry-run", action="store_true", help="validate arguments and inputs, then exit")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _train_flags(p: argparse.ArgumentParser, model: bool) -> None:
    p.add_argument("--config", help="experiment configuration file")
    p.add_argument("--train")
    p.add_argument("--val")
    p.add_argument("--gold-val", dest="gold_val", help="gold-segmented validation lines for MCC monitoring")
    p.add_argument("--steps", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--encoder-dropout", type=float, dest="encoder_dropout")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    if model:
        for name in ("layers", "d", "ff", "heads", "k"):
            p.add_argument(f"--{name}", type=int)
        p.add_argument("--ctx-dropout", type=float, dest="ctx_dropout",
                       help="chance of hiding a whole context vector from the decoder in training")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seglm", description="Masked segmental language model toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="clean, split, dedupe, filter and downsample corpora")
    _common(p)
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--rules", help="cleaning rules file with a [rules] section")
    p.add_argument("--heldout", action="append", default=[], help="drop lines that also occur here")
    p.add_argument("--downsample", type=int)
    p.add_argument("--vocab-out", dest="vocab_out")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("stats", help="corpus statistics table")
    _common(p)
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("embed-init", help="train CBOW character embeddings")
    _common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab", help="existing vocabulary file to embed")
    p.add_argument("--vocab-out", dest="vocab_out")
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--epochs", type=int, default=32)
    p.set_defaults(func=cmd_embed_init)

    p = sub.add_parser("pretrain", help="train a fresh model")
    _common(p)
    _train_flags(p, model=True)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--embeddings", help="CBOW table from embed-init")
    p.add_argument("--vocab", help="vocabulary matching --embeddings")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="continue training a checkpoint on new data")
    _common(p)
    _train_flags(p, model=False)
    p.add_argument("--init", required=True)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--resume", action="store_true", help="continue the same run instead of fine-tuning")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("segment", help="segment a file with a checkpoint")
    _common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("evaluate", help="score segmented output against gold")
    _common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--tsv", action="store_true")
    p.add_argument("--macro", action="store_true", help="average P and R per line")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="grid over learning rate and encoder dropout")
    _common(p)
    _train_flags(p, model=True)
    p.add_argument("--init", help="fine-tune from this checkpoint instead of training fresh models")
    p.add_argument("--grid", choices=["pretrain", "256", "2048", "full"])
    p.add_argument("--lrs")
    p.add_argument("--dropouts")
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", help="write the sweep table here")
    p.add_argument("--best-out", dest="best_out", help="save the winning checkpoint")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ladder", help="fine-tune on nested target subsets and tabulate F1")
    _common(p)
    p.add_argument("--pretrained", action="append", default=[], help="NAME=CKPT or CKPT; repeatable")
    p.add_argument("--baseline", action="store_true", help="add a randomly initialized monolingual row")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--sizes", default="256,512,1024,2048,4096,8192,16384,32768")
    p.add_argument("--full", action="store_true", help="add a column for the whole training file")
    p.add_argument("--lr", type=float, default=2.5e-4)
    p.add_argument("--encoder-dropout", type=float, dest="encoder_dropout", default=0.125)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--tune", action="store_true", help="sweep at sizes 256, 2048 and full; reuse the nearest")
    p.add_argument("--steps", type=int, help="override the per-size schedule (quick runs)")
    p.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ladder)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    from .train import DivergenceError

    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"seglm {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"seglm {args.command}: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, CorpusError, EvalError, ValueError, OSError, UnicodeDecodeError) as exc:
        print(f"seglm {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
