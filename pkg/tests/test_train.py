import math
import statistics
import string

import pytest
import torch

from seglm.corpus import RawCorpus, build_vocab, encode_corpus
from seglm.mslm import ModelConfig, corpus_bpc
from seglm.train import (
    FINETUNE_GRIDS,
    DEFAULT_LADDER,
    PRETRAIN_GRID,
    Batcher,
    Checkpoint,
    MetricRow,
    SweepGrid,
    SweepReport,
    SweepRow,
    TrainConfig,
    ladder_schedule,
    load_checkpoint,
    lr_at,
    monitor_mcc,
    nearest_tuned,
    save_checkpoint,
    select_best,
    size_ladder,
    sweep,
    train_run,
)

TINY = ModelConfig(layers=1, d=16, ff=32, heads=2, k=3, max_len=64)
TRAIN = ["ab cab", "abc ab", "cab cab", "ab ab c", "ca bc", "abcab"]
VAL = ["abcab", "cabab"]


def cfg(**kw):
    base = dict(steps=8, warmup_steps=2, peak_lr=1e-2, batch_size=2, checkpoint_every=4)
    return TrainConfig(**{**base, **kw})


# --- schedule -------------------------------------------------------------------


def test_lr_fixture_values():
    c = TrainConfig(steps=16768, warmup_steps=1024, peak_lr=1.0)
    assert lr_at(c, 0) == 0.0
    assert lr_at(c, 1024) == 1.0
    assert lr_at(c, 512) == 0.5
    assert (16768 - 8896) / 15744 == 0.5
    assert lr_at(c, 8896) == 0.5
    assert lr_at(c, 16768) == 0.0
    with pytest.raises(ValueError):
        lr_at(c, 16769)
    with pytest.raises(ValueError):
        lr_at(c, -1)


def test_lr_continuous_and_peaked():
    c = TrainConfig(steps=100, warmup_steps=10, peak_lr=3e-4)
    values = [lr_at(c, s) for s in range(101)]
    assert max(values) == values[10] == 3e-4
    assert all(abs(b - a) <= 3e-4 / 10 + 1e-18 for a, b in zip(values, values[1:]))


def test_zero_warmup():
    c = TrainConfig(steps=4, warmup_steps=0, peak_lr=1.0)
    assert [lr_at(c, s) for s in range(5)] == [1.0, 0.75, 0.5, 0.25, 0.0]


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(steps=4, warmup_steps=5)
    with pytest.raises(ValueError):
        TrainConfig(encoder_dropout=1.0)
    with pytest.raises(ValueError):
        TrainConfig(mode="other")


# --- batching -------------------------------------------------------------------


def test_batcher_covers_each_epoch_once():
    vocab = build_vocab(RawCorpus(tuple(TRAIN)))
    lines = encode_corpus(vocab, RawCorpus(tuple(TRAIN)))
    b = Batcher(lines, 4, seed=0)
    assert b.per_epoch == 2
    seen = [x.raw for s in (1, 2) for x in b.batch(s)]
    assert sorted(seen) == sorted(x.raw for x in lines)
    assert [x.raw for x in Batcher(lines, 4, 0).batch(3)] == [x.raw for x in b.batch(3)]


# --- checkpoints ----------------------------------------------------------------


def test_checkpoint_count():
    cks = train_run(cfg(steps=512, warmup_steps=8, checkpoint_every=128, peak_lr=1e-3), None,
                    TRAIN[:2], VAL, model_config=ModelConfig(layers=1, d=8, ff=8, heads=2, k=2, max_len=64))
    assert [c.step for c in cks] == [128, 256, 384, 512]


def test_select_best_rules():
    def ck(step, bpc):
        return Checkpoint(step, TINY, None, build_vocab(RawCorpus(("a",))), bpc)

    one = ck(1, 3.0)
    assert select_best([one]) is one
    cks = [ck(1, 2.0), ck(2, 1.5), ck(3, 1.7)]
    assert select_best(cks) is cks[1]
    tie = [ck(1, 1.5), ck(2, 1.5)]
    assert select_best(tie) is tie[0]
    with pytest.raises(ValueError):
        select_best([])


def test_determinism_and_roundtrip(tmp_path):
    a = train_run(cfg(), None, TRAIN, VAL, model_config=TINY, out_dir=tmp_path / "a")
    b = train_run(cfg(), None, TRAIN, VAL, model_config=TINY, out_dir=tmp_path / "b")
    for name in ("step000004.ckpt", "step000008.ckpt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a" / "metrics.tsv").read_text() == (tmp_path / "b" / "metrics.tsv").read_text()
    best = select_best(a)
    path = tmp_path / "best.ckpt"
    save_checkpoint(best, path)
    back = load_checkpoint(path)
    val = encode_corpus(back.vocab, RawCorpus(tuple(VAL)))
    assert abs(corpus_bpc(back.model(), val) - best.val_bpc) <= 1e-6
    assert back.val_bpc == best.val_bpc
    assert back.provenance["config_hash"] == cfg().digest()
    assert [c.val_bpc for c in a] == [c.val_bpc for c in b]


def test_float64_checkpoint_bytes(tmp_path):
    cks = train_run(cfg(steps=4, dtype="float64"), None, TRAIN, VAL, model_config=TINY, keep_params="all")
    save_checkpoint(cks[0], tmp_path / "c.ckpt")
    back = load_checkpoint(tmp_path / "c.ckpt")
    assert all(torch.equal(back.params[n], cks[0].params[n]) for n in cks[0].params)
    assert next(iter(back.params.values())).dtype == torch.float64


def test_resume_matches_uninterrupted_in_float64(tmp_path):
    c = cfg(dtype="float64")
    full = train_run(c, None, TRAIN, VAL, model_config=TINY, keep_params="all")
    save_checkpoint(full[0], tmp_path / "mid.ckpt")
    resumed = train_run(c, load_checkpoint(tmp_path / "mid.ckpt"), TRAIN, VAL, resume=True, keep_params="all")
    assert [x.step for x in resumed] == [8]
    for n, p in full[1].params.items():
        assert torch.equal(resumed[0].params[n], p), n
    assert resumed[0].val_bpc == full[1].val_bpc


def test_finetune_restarts_counter(tmp_path):
    pre = train_run(cfg(), None, TRAIN, VAL, model_config=TINY)
    ft = train_run(cfg(mode="finetune"), select_best(pre), ["ab abd", "dab"], ["abd"], keep_params="all")
    assert [x.step for x in ft] == [4, 8]
    assert ft[0].optimizer["step"] == 4  # moments started from scratch
    assert "d" in ft[0].vocab.chars
    assert ft[0].provenance["parent"] == select_best(pre).provenance["id"]


def test_vocab_mismatch_rejected():
    pre = train_run(cfg(steps=4), None, TRAIN, VAL, model_config=TINY)
    with pytest.raises(ValueError):
        train_run(cfg(steps=4), select_best(pre), ["abz"], VAL, resume=True)


def test_repeating_alphabet_bpc_decreases():
    line = string.ascii_lowercase
    train = [line[i:] + line[:i] for i in range(26)]
    val = [line[3:] + line[:3]]
    metrics: list[MetricRow] = []
    model = ModelConfig(layers=2, d=32, ff=64, heads=4, k=4, max_len=64)
    cks = train_run(TrainConfig(steps=512, warmup_steps=32, peak_lr=3e-3, batch_size=8, checkpoint_every=128),
                    None, train, val, model_config=model, metrics=metrics)
    assert metrics[0].step == 0
    assert cks[-1].val_bpc < metrics[0].val_bpc
    assert select_best(cks).val_bpc < metrics[0].val_bpc


def test_mcc_trace_and_monitor():
    gold = RawCorpus(("ab cab", "abc ab"))
    metrics: list[MetricRow] = []
    cks = train_run(cfg(), None, TRAIN, VAL, model_config=TINY, gold_val=gold, metrics=metrics)
    assert [m.step for m in metrics] == [0, 4, 8]
    assert all(m.mcc is not None and -1 <= m.mcc <= 1 for m in metrics)
    best = select_best(cks)
    assert monitor_mcc(best, gold) == pytest.approx(best.mcc, abs=1e-12)
    with pytest.raises(ValueError):
        monitor_mcc(best, RawCorpus(()))
    assert metrics[1].line().count("\t") == 3


# --- sweeps ---------------------------------------------------------------------


def test_shipped_grids():
    assert len(PRETRAIN_GRID.points()) == 16
    assert PRETRAIN_GRID.learning_rates[0] == 0.0005
    assert PRETRAIN_GRID.learning_rates[-1] == pytest.approx(0.0009)
    assert all(len(g.learning_rates) == 5 and len(g.encoder_dropouts) == 3 for g in FINETUNE_GRIDS.values())
    with pytest.raises(ValueError):
        SweepGrid([], [0.1])


def test_sweep_rows_and_winner():
    grid = SweepGrid([1e-2, 3e-3], [0.0, 0.25])
    rep = sweep(grid, cfg(), TRAIN, VAL, model_config=TINY, gold=RawCorpus(("ab cab",)))
    assert len(rep.rows) == 4
    assert [(r.lr, r.encoder_dropout) for r in rep.rows] == grid.points()
    assert rep.winner.best_val_bpc == min(r.best_val_bpc for r in rep.rows)
    assert rep.best_checkpoint.val_bpc == rep.winner.best_val_bpc
    tsv = rep.to_tsv().splitlines()
    assert tsv[0].split("\t") == ["lr", "encoder_dropout", "best_val_bpc", "best_step", "f1", "status"]
    assert len(tsv) == 5


def test_sweep_single_point_equals_train_run():
    rep = sweep(SweepGrid([1e-2], [0.125]), cfg(), TRAIN, VAL, model_config=TINY)
    best = select_best(train_run(cfg(encoder_dropout=0.125), None, TRAIN, VAL, model_config=TINY))
    assert (rep.winner.best_val_bpc, rep.winner.best_step) == (best.val_bpc, best.step)


def test_sweep_failed_point_recorded():
    rep = sweep(SweepGrid([1e-2], [0.0]), cfg(), TRAIN, [], model_config=TINY)
    assert rep.rows[0].status.startswith("failed") and rep.winner is None


def test_top4_mean_stdev():
    f1s = [0.5, 0.4, 0.3, 0.2, 0.9]
    rows = [SweepRow(1e-3, 0.1, bpc, 1, f) for bpc, f in zip([1.0, 1.1, 1.2, 1.3, 9.0], f1s)]
    mean, sd, ratio = SweepReport(rows, rows[0]).top_f1()
    assert mean == pytest.approx(0.35)
    assert sd == pytest.approx(statistics.stdev([0.5, 0.4, 0.3, 0.2]))
    assert ratio == pytest.approx(sd / mean)
    assert "top-4 F1: 35.0" in SweepReport(rows, rows[0]).summary()


# --- size ladder ----------------------------------------------------------------


def test_size_ladder_nesting():
    corpus = RawCorpus(tuple(f"l{i}" for i in range(1000)))
    small, big, full = size_ladder(corpus, [256, 512, 1000], seed=0)
    assert (len(small), len(big)) == (256, 512)
    assert set(small.lines) <= set(big.lines) <= set(full.lines)
    assert full.lines == corpus.lines
    with pytest.raises(ValueError):
        size_ladder(corpus, [512, 256], 0)
    with pytest.raises(ValueError):
        size_ladder(corpus, [1001], 0)


def test_default_ladder_has_nine_sets():
    full = 47_729
    sizes = DEFAULT_LADDER + [full]
    assert len(sizes) == 9
    assert DEFAULT_LADDER == [2**i for i in range(8, 16)]
    corpus = RawCorpus(tuple(str(i) for i in range(full)))
    sets = size_ladder(corpus, sizes, seed=1)
    assert [len(s) for s in sets] == sizes
    assert all(set(a.lines) <= set(b.lines) for a, b in zip(sets, sets[1:]))


def test_ladder_schedule():
    base = TrainConfig()
    sizes = DEFAULT_LADDER + [47_729]
    s256 = ladder_schedule(256, sizes, base)
    assert (s256.steps, s256.warmup_steps, s256.checkpoint_every, s256.mode) == (4096, 512, 64, "finetune")
    s512 = ladder_schedule(512, sizes, base)
    assert (s512.steps, s512.warmup_steps, s512.checkpoint_every) == (4096, 512, 64)
    s1k = ladder_schedule(1024, sizes, base)
    assert (s1k.steps, s1k.warmup_steps, s1k.checkpoint_every) == (8192, 1024, 128)


def test_nearest_tuned():
    tuned = [256, 2048, 47_729]
    assert nearest_tuned(512, tuned) == 256
    assert nearest_tuned(1024, tuned) == 2048
    assert nearest_tuned(8192, tuned) == 2048
    assert nearest_tuned(2**15, tuned) == 47_729
    assert math.isclose(math.log(2048) - math.log(1024), math.log(1024) - math.log(512))
    assert nearest_tuned(724, [512, 1024]) == 512
    with pytest.raises(ValueError):
        nearest_tuned(10, [])
