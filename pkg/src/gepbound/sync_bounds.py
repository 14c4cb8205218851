"""Achievable bounds on the error performance of the synchronous receiver.

Every bound is a sum of union terms (``B_i`` families, rival codewords
outscoring the transmitted one) and collision / miss-detection terms (``B_mc``
families, change-of-measure expectations that factor per symbol).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import Conditioning, _sorted_prod, given_x1_symbol_probs, mc_expectation_factor, safe_log
from .rcu import BoundError, EvalConfig, TermSpec, canonical_law, capped_mean, evaluate_term
from .regions import exact_partitions, region_slice
from .system import LN2, SyncSystem

FAMILY_CODES = {
    "B_i{}": 1, "B_i{1}": 2, "B_i{2}": 3,
    "B_mc{}": 4, "B_mc{1}": 5, "B_mc{2}": 6,
    "B_i{}^D1": 7, "B_mc{}^D1": 8, "B_mc{1}^D1": 9,
}


@dataclass(frozen=True)
class BoundTerm:
    family: str
    g: tuple
    g_tilde: tuple
    value: float
    mode: str = "exact"
    stderr: float = 0.0
    samples: int = 0
    weight: int = 1
    arms: tuple = ()
    subset: tuple | None = None

    def to_dict(self) -> dict:
        d = {
            "family": self.family,
            "g": list(self.g),
            "g_tilde": list(self.g_tilde),
            "value": self.value,
            "weight": self.weight,
            "mode": self.mode,
            "stderr": self.stderr,
            "samples": self.samples,
        }
        if self.arms:
            d["arms"] = list(self.arms)
        if self.subset is not None:
            d["subset"] = [list(ij) for ij in self.subset]
        return d


@dataclass
class BoundReport:
    kind: str
    terms: list
    total: float
    stderr: float = 0.0
    fingerprint: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def mode(self) -> str:
        return "monte-carlo" if any(t.mode != "exact" for t in self.terms) else "exact"

    def family_totals(self) -> dict:
        out = {}
        for t in self.terms:
            out.setdefault(t.family, []).append(t.weight * t.value)
        return {k: math.fsum(v) for k, v in sorted(out.items())}

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "fingerprint": self.fingerprint,
            "total": self.total,
            "stderr": self.stderr,
            "mode": self.mode,
            "family_totals": self.family_totals(),
            "terms": [t.to_dict() for t in self.terms],
            **self.extra,
        }


def assemble(kind: str, terms: list, fingerprint: str = "", **extra) -> BoundReport:
    total = math.fsum(t.weight * t.value for t in terms)
    se = math.sqrt(math.fsum((t.weight * t.stderr) ** 2 for t in terms))
    return BoundReport(kind, terms, total, se, fingerprint, dict(extra))


def id_collision_bound(k: int, id_pool: int) -> float:
    """Union bound on two of k users drawing the same ID from a pool."""
    if k < 0 or id_pool < 1:
        raise ValueError("need k >= 0 and id_pool >= 1")
    return min(1.0, k * (k - 1) / 2 / id_pool)


# ---- per-position term descriptions -------------------------------------------------

def _symbols(system: SyncSystem):
    t = system.channel.transition
    return range(t.shape[0]), range(t.shape[1]), range(t.shape[2])


def spec_joint(system: SyncSystem, g, gt, case: str) -> TermSpec:
    """Union term of the joint decoder for rival vector ``gt``.

    case "" : both users' rival codewords are fresh
    case "1": user 1 keeps the transmitted codeword, user 2 is fresh
    case "2": user 2 keeps the transmitted codeword, user 1 is fresh
    """
    t = system.channel.transition
    lw = system.channel.log_transition
    d1, d2 = system.dist(1, g[0]).probs, system.dist(2, g[1]).probs
    e1, e2 = system.dist(1, gt[0]).probs, system.dist(2, gt[1]).probs
    r1, r2, ry = _symbols(system)
    laws = {}

    def law(x1, x2, y):
        key = (x1 if case == "1" else None, x2 if case == "2" else None, y)
        if key not in laws:
            if case == "":
                pairs = ((lw[a, b, y], _sorted_prod(e1[a], e2[b])) for a in r1 for b in r2)
            elif case == "1":
                pairs = ((lw[x1, b, y], e2[b]) for b in r2)
            else:
                pairs = ((lw[a, x2, y], e1[a]) for a in r1)
            laws[key] = canonical_law(pairs)
        return laws[key]

    outcomes = []
    for a in r1:
        for b in r2:
            for y in ry:
                p = _sorted_prod(d1[a], d2[b], t[a, b, y])
                if p > 0:
                    outcomes.append((p, lw[a, b, y], law(a, b, y)))
    bits_true = system.bits(1, g[0]) + system.bits(2, g[1])
    bits_rival = system.bits(1, gt[0]) + system.bits(2, gt[1])
    fresh = {"": bits_rival, "1": system.bits(2, gt[1]), "2": system.bits(1, gt[0])}[case]
    return TermSpec([outcomes] * system.n,
                    c_true=system.log_prior(g) - bits_true * LN2,
                    c_rival=system.log_prior(gt) - bits_rival * LN2,
                    bits=fresh)


def spec_user1(system: SyncSystem, g, gt) -> TermSpec:
    """Union term of the user-1 decoder: fresh user-1 rival, user 2 averaged out."""
    c_true = safe_log(given_x1_symbol_probs(system.channel, system.dist(2, g[1])))
    c_riv = safe_log(given_x1_symbol_probs(system.channel, system.dist(2, gt[1])))
    p_true = given_x1_symbol_probs(system.channel, system.dist(2, g[1]))
    d1 = system.dist(1, g[0]).probs
    e1 = system.dist(1, gt[0]).probs
    r1, _, ry = _symbols(system)
    laws = {y: canonical_law((c_riv[a, y], e1[a]) for a in r1) for y in ry}
    outcomes = []
    for a in r1:
        for y in ry:
            p = _sorted_prod(d1[a], p_true[a, y])
            if p > 0:
                outcomes.append((p, c_true[a, y], laws[y]))
    return TermSpec([outcomes] * system.n,
                    c_true=system.log_prior(g) - system.bits(1, g[0]) * LN2,
                    c_rival=system.log_prior(gt) - system.bits(1, gt[0]) * LN2,
                    bits=system.bits(1, gt[0]))


def mc_factor_joint(system: SyncSystem, g, gt, case: str) -> float:
    """Per-symbol E[numerator / P(y | x1, x2)] for the joint decoder's mc terms."""
    d = (system.dist(1, g[0]), system.dist(2, g[1]))
    e = (system.dist(1, gt[0]), system.dist(2, gt[1]))
    num = {"": Conditioning(frozenset(), e),
           "1": Conditioning(frozenset({1}), (None, e[1])),
           "2": Conditioning(frozenset({2}), (e[0], None))}[case]
    return mc_expectation_factor(system.channel, d, num, frozenset({1, 2}))


def mc_factor_user1(system: SyncSystem, g, gt, case: str) -> float:
    """Per-symbol E[numerator / P(y | x1, g2)] for the user-1 decoder's mc terms."""
    d = (system.dist(1, g[0]), system.dist(2, g[1]))
    e = (system.dist(1, gt[0]), system.dist(2, gt[1]))
    num = Conditioning(frozenset(), e) if case == "" else Conditioning(frozenset({1}), (None, e[1]))
    return mc_expectation_factor(system.channel, d, num, frozenset({1}))


def _case(family: str) -> str:
    return family[family.index("{") + 1:family.index("}")]


class TermCache:
    """Memoizes cap-independent term evaluations across region choices."""

    def __init__(self, system: SyncSystem, config: EvalConfig):
        self.system = system
        self.config = config
        self._rcu = {}
        self._mc = {}

    def rcu(self, family: str, g, gt):
        key = (family, g, gt)
        if key not in self._rcu:
            s = self.system
            if family == "B_i{}^D1":
                spec = spec_user1(s, g, gt)
            else:
                spec = spec_joint(s, g, gt, _case(family))
            stream = (FAMILY_CODES[family], *g, *gt)
            self._rcu[key] = (spec, evaluate_term(spec, self.config, stream))
        return self._rcu[key]

    def mc(self, family: str, g, gt) -> float:
        key = (family, g, gt)
        if key not in self._mc:
            case = _case(family)
            if family.endswith("^D1"):
                self._mc[key] = mc_factor_user1(self.system, g, gt, case)
            else:
                self._mc[key] = mc_factor_joint(self.system, g, gt, case)
        return self._mc[key]


def _rcu_term(cache: TermCache, family: str, g, gt, cap: float) -> BoundTerm:
    spec, res = cache.rcu(family, g, gt)
    mean, se = capped_mean(res, cap, spec.multiplier)
    pg = cache.system.prior(g)
    return BoundTerm(family, g, gt, pg * mean, res.mode, pg * se, res.samples)


def _mc_term(cache: TermCache, family: str, g, gt, bits: int) -> BoundTerm:
    s = cache.system
    f = cache.mc(family, g, gt)
    other = s.prior(gt) * 2.0 ** bits * f ** s.n
    pg = s.prior(g)
    return BoundTerm(family, g, gt, min(pg, other), weight=2, arms=(pg, other))


def gep12_terms(cache: TermCache, regions) -> list:
    s = cache.system
    op = sorted(regions.operation)
    out = sorted(regions.outside)
    terms = []
    for g in op:
        g1, g2 = g
        cap1 = 1.0 / len(region_slice(regions, g1=g1))
        cap2 = 1.0 / len(region_slice(regions, g2=g2))
        cap0 = 1.0 / len(op)
        for gt in op:
            if gt[0] == g1:
                terms.append(_rcu_term(cache, "B_i{1}", g, gt, cap1))
        for gt in op:
            if gt[1] == g2:
                terms.append(_rcu_term(cache, "B_i{2}", g, gt, cap2))
        for gt in op:
            terms.append(_rcu_term(cache, "B_i{}", g, gt, cap0))
        for gt in out:
            if gt[0] == g1:
                terms.append(_mc_term(cache, "B_mc{1}", g, gt, s.bits(2, g2)))
        for gt in out:
            if gt[1] == g2:
                terms.append(_mc_term(cache, "B_mc{2}", g, gt, s.bits(1, g1)))
        for gt in out:
            terms.append(_mc_term(cache, "B_mc{}", g, gt, s.bits(1, g1) + s.bits(2, g2)))
    return terms


def gep1_terms(cache: TermCache, regions) -> list:
    s = cache.system
    op = sorted(regions.operation)
    terms = []
    for g in op:
        cap = 1.0 / len(op)
        for gt in op:
            terms.append(_rcu_term(cache, "B_i{}^D1", g, gt, cap))
        for gt in sorted(regions.outside):
            terms.append(_mc_term(cache, "B_mc{}^D1", g, gt, s.bits(1, g[0])))
        for gt in sorted(regions.collision):
            if gt[0] == g[0]:
                terms.append(_mc_term(cache, "B_mc{1}^D1", g, gt, 0))
    return terms


def bound_gep12(system: SyncSystem, config: EvalConfig | None = None, regions=None, cache=None,
                fingerprint: str = "") -> BoundReport:
    """Bound on the joint decoder's error performance (sum of six term families)."""
    cache = cache or TermCache(system, config or EvalConfig())
    regions = regions or system.d12_regions
    return assemble("gep12", gep12_terms(cache, regions), fingerprint, decoder="d12")


def bound_gep1(system: SyncSystem, config: EvalConfig | None = None, regions=None, cache=None,
               fingerprint: str = "") -> BoundReport:
    """Bound on the user-1 decoder's error performance (three term families)."""
    cache = cache or TermCache(system, config or EvalConfig())
    regions = regions or system.d1_regions
    return assemble("gep1", gep1_terms(cache, regions), fingerprint, decoder="d1")


def bound_total(system: SyncSystem, config: EvalConfig | None = None, fingerprint: str = "") -> BoundReport:
    """Max over exact partitions r12 + r1 of the two sub-decoder bounds."""
    config = config or EvalConfig()
    parts = exact_partitions(system.partition.operation)
    if len(parts) > config.partition_cap:
        raise BoundError(f"{len(parts)} partitions exceed the partition cap {config.partition_cap}")
    cache = TermCache(system, config)
    table = []
    best = None
    for r12, r1 in parts:
        sub = system.with_partition(r12, r1)
        b12 = bound_gep12(sub, cache=cache)
        b1 = bound_gep1(sub, cache=cache)
        total = b12.total + b1.total
        row = {"r12": [list(g) for g in sorted(r12)], "r1": [list(g) for g in sorted(r1)],
               "gep12": b12.total, "gep1": b1.total, "total": total,
               "stderr": math.hypot(b12.stderr, b1.stderr)}
        table.append(row)
        if best is None or total > best[0]["total"]:
            best = (row, b12, b1)
    row, b12, b1 = best
    configured = {"r12": sorted(list(g) for g in system.r12), "r1": sorted(list(g) for g in system.r1)}
    rep = BoundReport("synthesized", b12.terms + b1.terms, row["total"], row["stderr"], fingerprint,
                      {"decoder": "synthesized", "maximizing_partition": {"r12": row["r12"], "r1": row["r1"]},
                       "configured_partition": configured, "partitions": table})
    return rep


# ---- threshold optimality -----------------------------------------------------------

def _sequences(size: int, n: int) -> np.ndarray:
    return np.array(list(itertools.product(range(size), repeat=n)), dtype=np.int64).reshape(-1, n)


def threshold_objective(system: SyncSystem, g, gt, case: str, shifts) -> np.ndarray:
    """Exact collision + miss objective for one (operation, outside) pair.

    Evaluated at the optimal threshold moved by each log-domain shift. The
    collision part charges the transmitted ``g`` when its weighted likelihood
    fails the threshold; the miss part charges the outside ``gt`` when a
    fresh candidate of ``g`` passes it.
    """
    ch = system.channel
    n = system.n
    x1s = _sequences(ch.x1_alphabet_size, n)
    x2s = _sequences(ch.x2_alphabet_size, n)
    ys = _sequences(ch.y_alphabet_size, n)
    lw = ch.log_transition
    d1, d2 = system.dist(1, g[0]).probs, system.dist(2, g[1]).probs
    p1 = d1[x1s].prod(1)[:, None, None]
    p2 = d2[x2s].prod(1)[None, :, None]
    w = np.exp(lw[x1s[:, None, None, :], x2s[None, :, None, :], ys[None, None, :, :]].sum(-1))
    b1, b2 = system.bits(1, g[0]), system.bits(2, g[1])
    with np.errstate(divide="ignore"):
        ell = np.log(w) + system.log_prior(g) - (b1 + b2) * LN2
    tab = system.tables
    if case == "":
        q = np.exp(tab.marginal(gt)[ys].sum(-1))[None, None, :]
        weight = 2.0 ** (b1 + b2)
        gamma_lin = q
        base = system.log_prior(gt)
    elif case == "1":
        q = np.exp(tab.given_x1(gt[1])[x1s[:, None, :], ys[None, :, :]].sum(-1))[:, None, :]
        weight = 2.0 ** b2
        gamma_lin = q
        base = system.log_prior(gt) - b1 * LN2
    elif case == "2":
        q = np.exp(tab.given_x2(gt[0])[x2s[:, None, :], ys[None, :, :]].sum(-1))[None, :, :]
        weight = 2.0 ** b1
        gamma_lin = q
        base = system.log_prior(gt) - b2 * LN2
    else:
        raise ValueError(f"unknown case {case!r}")
    with np.errstate(divide="ignore"):
        gamma = base + np.log(gamma_lin)
    out = []
    for dlt in shifts:
        passed = ell > gamma + dlt
        coll = system.prior(g) * w * ~passed
        miss = system.prior(gt) * weight * q * passed
        out.append(float((p1 * p2 * (coll + miss)).sum()))
    return np.array(out)
