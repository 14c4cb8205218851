"""Exact and Monte-Carlo evaluation of random-coding-union expectations.

A term is described position by position. At position n an outer outcome is
drawn from a finite list; it carries the log-likelihood increment ``a_n`` of
the transmitted candidate and the law of the rival increment ``V_n``. Given
the outer sequence the ``V_n`` are independent. The quantity evaluated is

    E[ min{cap, K * P[ sum V_n + c_rival >= sum a_n + c_true - tol | outer ] } ]

Positions with the same outcome list are pooled, so the exact evaluation
walks over multinomial count vectors rather than over sequences. Rival values
of -inf never reach the threshold and are dropped from the laws.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .codes import keyed_generator

ROUND = 9


class BoundError(RuntimeError):
    """Raised when a term cannot be evaluated within the configured caps."""


@dataclass(frozen=True)
class EvalConfig:
    state_cap: int = 200_000
    allow_monte_carlo: bool = True
    force_monte_carlo: bool = False
    mc_samples: int = 100_000
    seed: tuple = (0,)
    tol: float = 1e-9
    partition_cap: int = 64
    subset_cap: int = 256

    def to_dict(self) -> dict:
        return {
            "state_cap": self.state_cap,
            "allow_monte_carlo": self.allow_monte_carlo,
            "force_monte_carlo": self.force_monte_carlo,
            "mc_samples": self.mc_samples,
            "seed": list(self.seed),
            "tol": self.tol,
            "partition_cap": self.partition_cap,
            "subset_cap": self.subset_cap,
        }


@dataclass
class TermSpec:
    """Per-position description of one union term.

    ``positions[n]`` is a list of (prob, a, law) triples where ``law`` is a
    canonical tuple of (value, prob) pairs describing V_n.
    """

    positions: list
    c_true: float
    c_rival: float
    bits: int
    label: tuple = ()

    @property
    def multiplier(self) -> float:
        return float(2 ** self.bits)


def canonical_law(pairs) -> tuple:
    """Merge equal values, drop zero mass and -inf values, sort by value."""
    acc = {}
    for v, p in pairs:
        if p <= 0 or v == -math.inf:
            continue
        acc.setdefault(float(v), []).append(float(p))
    return tuple(sorted((v, math.fsum(ps)) for v, ps in acc.items()))


def canonical_outcomes(triples) -> tuple:
    """Merge outcomes with equal (a, law); drop zero mass; sort canonically."""
    acc = {}
    for p, a, law in triples:
        if p <= 0:
            continue
        acc.setdefault((float(a), law), []).append(float(p))
    return tuple(sorted((a, law, math.fsum(ps)) for (a, law), ps in acc.items()))


@dataclass
class TermResult:
    """Outer-state probabilities and conditional rival tails of one term.

    Exact mode holds one row per merged outer state; Monte-Carlo mode holds
    one row per sample with equal weights. Any cap can be applied afterwards.
    """

    mode: str
    probs: np.ndarray = field(repr=False)
    tails: np.ndarray = field(repr=False)
    samples: int = 0


def _compositions(m: int, k: int) -> np.ndarray:
    """All nonnegative integer vectors of length k summing to m, lexicographic."""
    if k == 1:
        return np.array([[m]], dtype=np.int64)
    rows = []
    for first in range(m, -1, -1):
        rest = _compositions(m - first, k - 1)
        rows.append(np.concatenate([np.full((len(rest), 1), first, np.int64), rest], axis=1))
    return np.concatenate(rows, axis=0)


_comp_cache: dict = {}


def compositions(m: int, k: int) -> np.ndarray:
    key = (m, k)
    if key not in _comp_cache:
        _comp_cache[key] = _compositions(m, k)
    return _comp_cache[key]


def _log_multinomial(counts: np.ndarray, log_p: np.ndarray, m: int) -> np.ndarray:
    lg = np.array([math.lgamma(c + 1.0) for c in range(m + 1)])
    return lg[m] - lg[counts].sum(axis=1) + (counts * log_p[None, :]).sum(axis=1)


def _group(keys_int: np.ndarray, keys_float: np.ndarray, probs: np.ndarray, values: np.ndarray):
    """Merge rows with equal (int key row, rounded float key); sum probs."""
    rounded = np.round(keys_float, ROUND)
    table = np.concatenate([keys_int.astype(float), rounded[:, None]], axis=1)
    uniq, first, inv = np.unique(table, axis=0, return_index=True, return_inverse=True)
    inv = inv.reshape(-1)
    p = np.bincount(inv, weights=probs, minlength=len(uniq))
    return keys_int[first], values[first], p


def _binom(m: int, k: int) -> int:
    return math.comb(m + k - 1, k - 1)


class _Laws:
    def __init__(self, positions):
        laws = sorted({law for pos in positions for (_, law, _) in pos})
        self.laws = laws
        self.index = {law: i for i, law in enumerate(laws)}

    def __len__(self):
        return len(self.laws)


def _class_states(outcomes: tuple, m: int, laws: _Laws, cap: int):
    """Count states after m positions that share one outcome list."""
    k = len(outcomes)
    if _binom(m, k) > cap:
        raise BoundError(f"{_binom(m, k)} outcome compositions exceed the state cap {cap}")
    comps = compositions(m, k)
    a = np.array([o[0] for o in outcomes])
    p = np.array([o[2] for o in outcomes])
    onehot = np.zeros((k, len(laws)), np.int64)
    for r, o in enumerate(outcomes):
        onehot[r, laws.index[o[1]]] = 1
    probs = np.exp(_log_multinomial(comps, np.log(p), m))
    asum = comps @ a
    counts = comps @ onehot
    return _group(counts, asum, probs, asum)


def _combine(s1, s2, cap: int):
    c1, a1, p1 = s1
    c2, a2, p2 = s2
    if len(p1) * len(p2) > 20 * cap:
        raise BoundError(f"{len(p1) * len(p2)} state pairs exceed the state cap {cap}")
    counts = (c1[:, None, :] + c2[None, :, :]).reshape(-1, c1.shape[1])
    asum = (a1[:, None] + a2[None, :]).reshape(-1)
    probs = (p1[:, None] * p2[None, :]).reshape(-1)
    out = _group(counts, asum, probs, asum)
    if len(out[2]) > cap:
        raise BoundError(f"{len(out[2])} states exceed the state cap {cap}")
    return out


def _position_classes(positions):
    classes = {}
    for pos in positions:
        classes[pos] = classes.get(pos, 0) + 1
    return sorted(classes.items())


@lru_cache(maxsize=65536)
def _law_power(law: tuple, c: int):
    """Distribution of the sum of c i.i.d. draws of a (sub-)probability law."""
    if c == 0:
        return np.zeros(1), np.ones(1)
    if not law:
        return np.zeros(0), np.zeros(0)
    vals = np.array([v for v, _ in law])
    p = np.array([q for _, q in law])
    comps = compositions(c, len(law))
    probs = np.exp(_log_multinomial(comps, np.log(p), c))
    sums = comps @ vals
    _, v, pr = _group(np.zeros((len(sums), 0), np.int64), sums, probs, sums)
    return v, pr


@lru_cache(maxsize=65536)
def _inner_tail(laws: tuple, counts: tuple):
    """Sorted support of sum V and the tail P[sum V >= support value]."""
    vals, probs = np.zeros(1), np.ones(1)
    for law, c in zip(laws, counts):
        if c == 0:
            continue
        lv, lp = _law_power(law, c)
        if len(lv) == 0:
            return np.zeros(0), np.zeros(0)
        s = (vals[:, None] + lv[None, :]).reshape(-1)
        q = (probs[:, None] * lp[None, :]).reshape(-1)
        _, vals, probs = _group(np.zeros((len(s), 0), np.int64), s, q, s)
    order = np.argsort(vals, kind="stable")
    vals, probs = vals[order], probs[order]
    tail = np.cumsum(probs[::-1])[::-1]
    return vals, tail


def _tail_at(laws: tuple, counts: tuple, thresholds: np.ndarray) -> np.ndarray:
    vals, tail = _inner_tail(laws, counts)
    idx = np.searchsorted(vals, thresholds, side="left")
    out = np.zeros(len(thresholds))
    ok = idx < len(vals)
    out[ok] = tail[idx[ok]]
    return np.minimum(out, 1.0)


def _tails_for_states(laws: tuple, counts: np.ndarray, asum: np.ndarray, shift: float) -> np.ndarray:
    tails = np.zeros(len(asum))
    if not math.isfinite(shift):
        return tails
    rows, inv = np.unique(counts, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    for r, row in enumerate(rows):
        sel = inv == r
        tails[sel] = _tail_at(laws, tuple(int(c) for c in row), asum[sel] + shift)
    return tails


def estimate_states(positions) -> int:
    total = 1
    for pos, m in _position_classes([canonical_outcomes(pos) for pos in positions]):
        total *= _binom(m, len(pos))
    return total


def evaluate_term(spec: TermSpec, config: EvalConfig, stream: tuple = ()) -> TermResult:
    """Evaluate the outer states of a term; ``capped_mean`` applies cap and multiplier."""
    positions = [canonical_outcomes(pos) for pos in spec.positions]
    # threshold shift: sum V >= sum a + c_true - c_rival - tol
    shift = spec.c_true - spec.c_rival - config.tol
    if spec.c_rival == -math.inf:
        shift = math.inf
    laws = _Laws(positions)
    law_tuple = tuple(laws.laws)
    if not config.force_monte_carlo:
        try:
            states = None
            for pos, m in _position_classes(positions):
                cls = _class_states(pos, m, laws, config.state_cap)
                states = cls if states is None else _combine(states, cls, config.state_cap)
            counts, asum, probs = states
            tails = _tails_for_states(law_tuple, counts, asum, shift)
            return TermResult("exact", probs, tails)
        except BoundError:
            if not config.allow_monte_carlo:
                raise
    return _monte_carlo(positions, laws, law_tuple, shift, config, stream)


def _monte_carlo(positions, laws, law_tuple, shift, config: EvalConfig, stream) -> TermResult:
    rng = keyed_generator(config.seed, 7, *stream)
    s = config.mc_samples
    asum = np.zeros(s)
    counts = np.zeros((s, len(laws)), np.int64)
    for pos in positions:
        p = np.array([o[2] for o in pos])
        cdf = np.cumsum(p)
        pick = np.minimum(np.searchsorted(cdf, rng.random(s) * cdf[-1], side="right"), len(pos) - 1)
        a = np.array([o[0] for o in pos])
        lid = np.array([laws.index[o[1]] for o in pos])
        asum += a[pick]
        np.add.at(counts, (np.arange(s), lid[pick]), 1)
    tails = _tails_for_states(law_tuple, counts, asum, shift)
    return TermResult("monte-carlo", np.full(s, 1.0 / s), tails, samples=s)


def capped_mean(result: TermResult, cap: float, multiplier: float) -> tuple[float, float]:
    """(E[min{cap, K P}], standard error) for an evaluated term."""
    vals = np.minimum(cap, multiplier * result.tails)
    if result.mode == "exact":
        return math.fsum((result.probs * vals).tolist()), 0.0
    mean = math.fsum(vals.tolist()) / len(vals)
    se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return mean, se
