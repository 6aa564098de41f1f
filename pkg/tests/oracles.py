"""Independent reference implementations used by the tests.

Nothing here imports the package's DP or metric code.
"""

from __future__ import annotations

import math
import random


def compositions(T: int, k: int):
    """Every tuple of segment lengths in [1, k] summing to T."""
    if T == 0:
        yield ()
        return
    for first in range(1, min(k, T) + 1):
        for rest in compositions(T - first, k):
            yield (first,) + rest


def path_score(table, lengths) -> float:
    pos, total = 0, 0.0
    for n in lengths:
        total += table[pos][n - 1]
        pos += n
    return total


def brute_marginal(table, T: int, k: int) -> float:
    scores = [path_score(table, c) for c in compositions(T, k)]
    m = max(scores)
    if m == -math.inf:
        return m
    return m + math.log(sum(math.exp(s - m) for s in scores))


def brute_viterbi(table, T: int, k: int) -> tuple[tuple[int, ...], float]:
    """Argmax; among exact ties the path whose lengths read right-to-left are
    lexicographically smallest (shortest final segment, then recursively)."""
    best, best_key = -math.inf, None
    for c in compositions(T, k):
        s = path_score(table, c)
        key = tuple(reversed(c))
        if s > best or (s == best and (best_key is None or key < best_key)):
            best, best_key = s, key
    return tuple(reversed(best_key)), best


def random_table(rng: random.Random, T: int, k: int, integer: bool = False):
    if integer:
        return [[float(rng.randint(-3, 0)) for _ in range(k)] for _ in range(T)]
    return [[rng.uniform(-6.0, 0.0) for _ in range(k)] for _ in range(T)]


def spans_of(segments):
    out, pos = set(), 0
    for s in segments:
        out.add((pos, pos + len(s)))
        pos += len(s)
    return out


def brute_span_f1(pred, gold) -> tuple[float, float, float]:
    """Corpus-level span P/R/F1 by set intersection."""
    correct = n_pred = n_gold = 0
    for p, g in zip(pred, gold):
        correct += len(spans_of(p) & spans_of(g))
        n_pred += len(p)
        n_gold += len(g)
    P = correct / n_pred if n_pred else 0.0
    R = correct / n_gold if n_gold else 0.0
    F = 2 * P * R / (P + R) if P + R else 0.0
    return P, R, F


def random_segmentation(rng: random.Random, text: str) -> list[str]:
    cuts = [g for g in range(1, len(text)) if rng.random() < 0.4]
    out, prev = [], 0
    for c in cuts + [len(text)]:
        out.append(text[prev:c])
        prev = c
    return out
