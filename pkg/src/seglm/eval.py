"""Segmentation metrics: boundary MCC and SIGHAN-style span P/R/F1."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import nfc, strip_ws


class EvalError(ValueError):
    pass


# A boundary vector has one bit per gap 1..T-1 (bit g-1 = boundary after char g).
BoundaryVector = list


def boundary_vector(segments: Sequence[str]) -> list[int]:
    T = sum(len(s) for s in segments)
    bits = [0] * max(T - 1, 0)
    pos = 0
    for s in segments[:-1]:
        pos += len(s)
        bits[pos - 1] = 1
    return bits


def segments_from_vector(chars: str, bits: Sequence[int]) -> list[str]:
    if len(bits) != max(len(chars) - 1, 0):
        raise EvalError(f"boundary vector of length {len(bits)} does not fit {len(chars)} characters")
    segs, start = [], 0
    for g, b in enumerate(bits, start=1):
        if b:
            segs.append(chars[start:g])
            start = g
    segs.append(chars[start:])
    return segs


def spans(segments: Sequence[str]) -> list[tuple[int, int]]:
    out, pos = [], 0
    for s in segments:
        out.append((pos, pos + len(s)))
        pos += len(s)
    return out


def confusion(pred: Sequence[Sequence[int]], gold: Sequence[Sequence[int]]) -> tuple[int, int, int, int]:
    if len(pred) != len(gold):
        raise EvalError(f"{len(pred)} predicted lines vs {len(gold)} gold lines")
    tp = tn = fp = fn = 0
    for n, (p, g) in enumerate(zip(pred, gold), start=1):
        if len(p) != len(g):
            raise EvalError(f"line {n}: boundary vectors of length {len(p)} and {len(g)}")
        for a, b in zip(p, g):
            if a and b:
                tp += 1
            elif a:
                fp += 1
            elif b:
                fn += 1
            else:
                tn += 1
    return tp, tn, fp, fn


def mcc(pred: Sequence[Sequence[int]], gold: Sequence[Sequence[int]]) -> float:
    """Matthews correlation pooled over every gap of every line.

    A zero factor in the denominator gives 0.
    """
    tp, tn, fp, fn = confusion(pred, gold)
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


def span_counts(pred: Sequence[Sequence[str]], gold: Sequence[Sequence[str]]) -> tuple[int, int, int]:
    """(correct, predicted, gold) segment counts; refuses mismatched text."""
    if len(pred) != len(gold):
        raise EvalError(f"{len(pred)} predicted lines vs {len(gold)} gold lines")
    correct = n_pred = n_gold = 0
    for n, (p, g) in enumerate(zip(pred, gold), start=1):
        if "".join(p) != "".join(g):
            raise EvalError(f"line {n}: character streams differ: {''.join(p)!r} vs {''.join(g)!r}")
        gold_spans = set(spans(g))
        correct += sum(1 for s in spans(p) if s in gold_spans)
        n_pred += len(p)
        n_gold += len(g)
    return correct, n_pred, n_gold


def f1_score(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def span_prf(pred: Sequence[Sequence[str]], gold: Sequence[Sequence[str]],
             macro: bool = False) -> tuple[float, float, float]:
    """Span precision/recall/F1.

    Counts are summed over the corpus before dividing (micro). With
    ``macro=True`` P and R are averaged per line instead.
    """
    if not macro:
        correct, n_pred, n_gold = span_counts(pred, gold)
        p = correct / n_pred if n_pred else 0.0
        r = correct / n_gold if n_gold else 0.0
        return p, r, f1_score(p, r)
    if len(pred) != len(gold):
        raise EvalError(f"{len(pred)} predicted lines vs {len(gold)} gold lines")
    if not pred:
        raise EvalError("nothing to score")
    ps, rs = [], []
    for p_line, g_line in zip(pred, gold):
        c, np_, ng = span_counts([p_line], [g_line])
        ps.append(c / np_ if np_ else 0.0)
        rs.append(c / ng if ng else 0.0)
    p, r = sum(ps) / len(ps), sum(rs) / len(rs)
    return p, r, f1_score(p, r)


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    mcc: float
    lines_evaluated: int
    bpc: float | None = None

    def tsv(self) -> str:
        return f"P\tR\tF1\tMCC\tlines\n{self.precision:.6f}\t{self.recall:.6f}\t{self.f1:.6f}\t{self.mcc:.6f}\t{self.lines_evaluated}"

    def text(self) -> str:
        rows = [
            f"lines evaluated : {self.lines_evaluated}",
            f"precision       : {self.precision:.4f} ({100 * self.precision:.1f}%)",
            f"recall          : {self.recall:.4f} ({100 * self.recall:.1f}%)",
            f"F1              : {self.f1:.4f} ({100 * self.f1:.1f})",
            f"MCC             : {self.mcc:.4f}",
        ]
        if self.bpc is not None:
            rows.append(f"bpc             : {self.bpc:.4f}")
        return "\n".join(rows)


def split_segments(line: str) -> list[str]:
    return nfc(line).split()


def score_segmentations(pred: Sequence[Sequence[str]], gold: Sequence[Sequence[str]],
                        bpc: float | None = None, macro: bool = False) -> EvalReport:
    if not gold:
        raise EvalError("no lines to evaluate")
    p, r, f = span_prf(pred, gold, macro=macro)
    m = mcc([boundary_vector(x) for x in pred], [boundary_vector(x) for x in gold])
    return EvalReport(p, r, f, m, len(gold), bpc)


def _read_lines(path: str | Path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def evaluate(pred_path: str | Path, gold_path: str | Path, macro: bool = False) -> EvalReport:
    """Score a segmented output file against a line-aligned gold file.

    Blank gold lines are skipped together with their predicted counterpart.
    """
    pred_lines, gold_lines = _read_lines(pred_path), _read_lines(gold_path)
    if len(pred_lines) != len(gold_lines):
        raise EvalError(f"line counts differ: {len(pred_lines)} predicted vs {len(gold_lines)} gold")
    pred, gold = [], []
    for n, (p, g) in enumerate(zip(pred_lines, gold_lines), start=1):
        if not strip_ws(g):
            continue
        if strip_ws(nfc(p)) != strip_ws(nfc(g)):
            raise EvalError(f"line {n}: predicted characters differ from gold")
        pred.append(split_segments(p))
        gold.append(split_segments(g))
    if not gold:
        raise EvalError("no lines to evaluate")
    return score_segmentations(pred, gold, macro=macro)
