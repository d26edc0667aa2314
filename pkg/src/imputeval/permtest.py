"""Permutation p-values for equality of the true and imputed distributions.

For each of the ``m`` completions the true column and the imputed column are
pooled; a permutation round reshuffles every pool independently, deals the
values back into two halves and recomputes the statistic, which is then
averaged over the ``m`` pairs exactly like the observed one. The p-value is

    p = (#{rounds with averaged stat > |observed|} + 1) / (perm + 1).

Only the group labels depend on the shuffle, so each pool is sorted once
and rounds are evaluated as label vectors over the sorted values, in fixed
chunks with their own sub-seed. The result is therefore independent of the
order (or concurrency) in which chunks are evaluated.

The test presumes the pooled values are exchangeable under the null; imputed
values depend on the observed part of the true column, so this holds only
approximately.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .measures import _cm_from_gaps, _ks_from_gaps, cm_statistic, ks_statistic

__all__ = [
    "Statistic",
    "PermutationOutcome",
    "averaged_statistic",
    "permute_pair",
    "p_value_from_stats",
    "permutation_p_value",
    "permutation_tests",
]

CHUNK = 64


class Statistic(str, enum.Enum):
    KS = "ks"
    CM = "cm"


_PLAIN = {Statistic.KS: ks_statistic, Statistic.CM: cm_statistic}


@dataclass(frozen=True)
class PermutationOutcome:
    observed_stat: float
    permuted_stats: np.ndarray
    p_value: float

    @property
    def perm(self) -> int:
        return int(self.permuted_stats.size)


def _columns(completions) -> list[np.ndarray]:
    if isinstance(completions, np.ndarray) and completions.ndim == 1:
        return [completions]
    return [np.asarray(c, dtype=float).ravel() for c in completions]


def averaged_statistic(true_col, completions, stat) -> float:
    """Mean of ``stat(true_col, completion)`` over the completions."""
    cols = _columns(completions)
    if not cols:
        raise ValueError("need at least one completion")
    fn = _PLAIN[Statistic(stat)]
    return float(sum(fn(true_col, c) for c in cols) / len(cols))


def permute_pair(true_col, imputed_col, seed) -> tuple[np.ndarray, np.ndarray]:
    """Pool both columns, shuffle, and deal the first half to the pseudo-true column."""
    t = np.asarray(true_col, dtype=float).ravel()
    i = np.asarray(imputed_col, dtype=float).ravel()
    if t.size != i.size:
        raise ValueError("columns must have equal length")
    pooled = np.random.default_rng(seed).permutation(np.concatenate([t, i]))
    return pooled[: t.size], pooled[t.size :]


def p_value_from_stats(observed: float, permuted) -> float:
    """``(#{permuted > |observed|} + 1) / (perm + 1)``."""
    permuted = np.asarray(permuted, dtype=float)
    if permuted.size < 1:
        raise ValueError("need at least one permutation round")
    return (int(np.sum(permuted > abs(observed))) + 1) / (permuted.size + 1)


class _Pool:
    """One (true, imputed) pair, sorted once; statistics from label rows."""

    def __init__(self, true_col, imputed_col):
        t = np.asarray(true_col, dtype=float).ravel()
        i = np.asarray(imputed_col, dtype=float).ravel()
        if t.size == 0 or i.size == 0:
            raise ValueError("empty sample")
        self.n, self.m = t.size, i.size
        pooled = np.concatenate([t, i])
        order = np.argsort(pooled, kind="stable")
        z = pooled[order]
        last = np.flatnonzero(np.append(z[1:] != z[:-1], True))
        self.ends = last
        self.mult = np.diff(np.append(-1, last)).astype(np.int64)
        self.labels = (order < self.n).astype(np.int8)
        g = np.gcd(self.n, self.m)
        self.wx, self.wy = self.m // g, self.n // g

    def gaps(self, labels: np.ndarray) -> np.ndarray:
        cx = np.cumsum(labels, axis=-1, dtype=np.int64)[..., self.ends]
        cy = (self.ends + 1) - cx
        return cx * self.wx - cy * self.wy

    def stats(self, labels: np.ndarray, which: Sequence[Statistic]) -> dict:
        g = self.gaps(labels)
        out = {}
        for s in which:
            if s is Statistic.KS:
                out[s] = _ks_from_gaps(g, self.n, self.m)
            else:
                out[s] = _cm_from_gaps(g, self.mult, self.n, self.m)
        return out


def _chunk_seed(seed, chunk: int) -> np.random.SeedSequence:
    base = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.SeedSequence(base.entropy, spawn_key=tuple(base.spawn_key) + (chunk,))


def _chunk(pools, which, seed, chunk, perm):
    lo = chunk * CHUNK
    rounds = min(CHUNK, perm - lo)
    rng = np.random.default_rng(_chunk_seed(seed, chunk))
    sums = {s: np.zeros(rounds) for s in which}
    for pool in pools:
        labels = rng.permuted(np.tile(pool.labels, (rounds, 1)), axis=1)
        for s, v in pool.stats(labels, which).items():
            sums[s] += v
    return {s: v / len(pools) for s, v in sums.items()}


def permutation_tests(
    true_col,
    completions,
    stats: Iterable = (Statistic.KS, Statistic.CM),
    perm: int = 999,
    seed=0,
    *,
    chunks: Sequence[int] | None = None,
) -> dict[Statistic, PermutationOutcome]:
    """Permutation tests for several statistics sharing the same rounds.

    ``chunks`` optionally fixes the evaluation order of the round chunks;
    it exists so tests can check order independence.
    """
    which = [Statistic(s) for s in stats]
    if perm < 1:
        raise ValueError("perm must be >= 1")
    cols = _columns(completions)
    if not cols:
        raise ValueError("need at least one completion")
    t = np.asarray(true_col, dtype=float).ravel()
    for c in cols:
        if c.size != t.size:
            raise ValueError("true and imputed columns differ in length")
    pools = [_Pool(t, c) for c in cols]

    observed = {s: 0.0 for s in which}
    for pool in pools:
        for s, v in pool.stats(pool.labels, which).items():
            observed[s] += float(v)
    observed = {s: v / len(pools) for s, v in observed.items()}

    n_chunks = -(-perm // CHUNK)
    order = range(n_chunks) if chunks is None else chunks
    if sorted(order) != list(range(n_chunks)):
        raise ValueError("chunks must be a permutation of the chunk indices")
    permuted = {s: np.empty(perm) for s in which}
    for c in order:
        lo = c * CHUNK
        for s, v in _chunk(pools, which, seed, c, perm).items():
            permuted[s][lo : lo + v.size] = v
    return {
        s: PermutationOutcome(observed[s], permuted[s], p_value_from_stats(observed[s], permuted[s]))
        for s in which
    }


def permutation_p_value(true_col, completions, stat, perm: int = 999, seed=0) -> PermutationOutcome:
    """Permutation p-value of one statistic (``"ks"`` or ``"cm"``)."""
    stat = Statistic(stat)
    return permutation_tests(true_col, completions, (stat,), perm, seed)[stat]
