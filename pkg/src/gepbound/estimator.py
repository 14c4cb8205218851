"""Empirical generalized error performance: Monte Carlo, exhaustive oracle, comparison.

Estimation is stratified by coding vector. For each g the decoder is run on
trials with fresh random codebooks (or one fixed set), uniform messages and a
channel output drawn from the transition law. Errors follow the region of g:

* operation: error unless the decoder returns the true output
* margin: error if it returns a wrong output
* collision: error if it returns any output

A near-max tie that involves the true output counts as a wrong output.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .async_core import AsyncSystem, decode_dD_batch, index_set
from .channel import Channel
from .codes import ConfigError, generate_codebook, keyed_generator, message_count, random_books
from .regions import COLLISION, MARGIN, OPERATION, SubDecoderRegions
from .sync_bounds import BoundReport
from .sync_decoder import decode_d1_batch, decode_d12_batch
from .system import SyncSystem

DECODERS = ("d12", "d1", "synthesized", "dD")
WRONG = -2


class EstimateError(RuntimeError):
    """Raised for infeasible exhaustive runs and mismatched comparisons."""


@dataclass(frozen=True)
class TrialPlan:
    trials: int = 25_000
    fresh_codebooks: bool = True
    seed: tuple = (0,)
    exact_cap: int = 5_000_000
    block_size: int = 2_500

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials per coding vector must be at least 1")
        if self.block_size < 1:
            raise ConfigError("block size must be at least 1")
        object.__setattr__(self, "seed", tuple(int(s) for s in np.atleast_1d(self.seed)))

    def to_dict(self) -> dict:
        return {"trials": self.trials, "fresh_codebooks": self.fresh_codebooks, "seed": list(self.seed),
                "exact_cap": self.exact_cap, "block_size": self.block_size}


@dataclass
class StratumEstimate:
    g: tuple
    region: str
    prior: float
    trials: int
    incorrect: float
    collision: float
    miss: float
    estimate: float
    stderr: float

    def to_dict(self) -> dict:
        return {"g": list(self.g), "region": self.region, "prior": self.prior, "trials": self.trials,
                "incorrect": self.incorrect, "collision": self.collision, "miss": self.miss,
                "estimate": self.estimate, "stderr": self.stderr}


@dataclass
class GepEstimate:
    decoder: str
    mode: str
    per_g: list
    total: float
    stderr: float
    fingerprint: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"decoder": self.decoder, "mode": self.mode, "total": self.total, "stderr": self.stderr,
                "fingerprint": self.fingerprint, "per_g": [s.to_dict() for s in self.per_g],
                "extra": self.extra}


def _combine_strata(decoder, mode, strata, fingerprint, extra) -> GepEstimate:
    total = math.fsum(s.prior * s.estimate for s in strata)
    var = math.fsum((s.prior * s.stderr) ** 2 for s in strata)
    return GepEstimate(decoder, mode, strata, total, math.sqrt(var), fingerprint, extra)


# ---- decoder targets -----------------------------------------------------------------

class _Target:
    """What one decoder needs: codebook keys, message keys, inputs and decisions."""

    name: str
    regions: SubDecoderRegions
    channel: Channel

    def strata(self) -> list[tuple]:
        return [g for g in sorted(self.regions.space) if self.prior(g) > 0]


class _SyncTarget(_Target):
    def __init__(self, system: SyncSystem, decoder: str):
        self.system = system
        self.name = decoder
        self.channel = system.channel
        self.regions = {"d12": system.d12_regions, "d1": system.d1_regions,
                        "synthesized": system.partition.as_regions()}[decoder]
        self.length = system.n

    def prior(self, g):
        return self.system.prior(g)

    def book_specs(self, g):
        s = self.system
        return [((u, k), s.ensemble(u)[k]) for u in (1, 2) for k in range(len(s.ensemble(u)))]

    def message_specs(self, g):
        return [(1, self.system.messages(1, g[0])), (2, self.system.messages(2, g[1]))]

    def fixed_books(self, seed):
        s = self.system
        return {(u, k): generate_codebook(s.ensemble(u), k, s.n, seed, (9,)).words[None]
                for u in (1, 2) for k in range(len(s.ensemble(u)))}

    def inputs(self, g, books, msgs):
        rows = np.arange(len(msgs[1]))
        x1 = _pick(books[(1, g[0])], rows, msgs[1])
        x2 = _pick(books[(2, g[1])], rows, msgs[2])
        return x1, x2

    def truth(self, g, msgs):
        b = len(msgs[1])
        g1 = np.full(b, g[0])
        if self.name == "d12":
            return np.stack([g1, np.full(b, g[1]), msgs[1], msgs[2]], axis=1)
        return np.stack([g1, msgs[1]], axis=1)

    def decide(self, books, y, truth):
        s = self.system
        if self.name == "d12":
            dec = decode_d12_batch(s, self.regions, books, y)
            return _project(dec, [0, 1, 2, 3])
        if self.name == "d1":
            dec = decode_d1_batch(s, self.regions, books, y)
            return _project(dec, [0, 2])
        a = _project(decode_d12_batch(s, s.d12_regions, books, y), [0, 2])
        b = _project(decode_d1_batch(s, s.d1_regions, books, y), [0, 2])
        return _synthesize(a, b, truth)


class _AsyncTarget(_Target):
    def __init__(self, system: AsyncSystem, dset, regions: SubDecoderRegions):
        self.system = system
        self.name = "dD"
        self.channel = system.channel
        self.dset = index_set(dset, system.layout)
        self.regions = system.check_regions(regions)
        self.length = system.layout.total_len

    def prior(self, g):
        return self.system.prior(g)

    def book_specs(self, g):
        s = self.system
        return [((i, j, k), s.ensemble(i)[k]) for i, j in s.layout.packets for k in range(len(s.ensemble(i)))]

    def message_specs(self, g):
        s = self.system
        return [(ij, s.messages(ij, s.code_of(g, ij))) for ij in s.layout.packets]

    def fixed_books(self, seed):
        s = self.system
        return {(i, j, k): generate_codebook(s.ensemble(i), k, s.n, seed, (9, j)).words[None]
                for i, j in s.layout.packets for k in range(len(s.ensemble(i)))}

    def inputs(self, g, books, msgs):
        s = self.system
        lay = s.layout
        b = len(next(iter(msgs.values())))
        rows = np.arange(b)
        out = []
        for u in (1, 2):
            idle = s.channel.idle1 if u == 1 else s.channel.idle2
            x = np.full((b, lay.total_len), 0 if idle is None else idle, dtype=np.int64)
            for j in range(1, lay.l + 1):
                st = lay.start((u, j))
                x[:, st:st + lay.n] = _pick(books[(u, j, s.code_of(g, (u, j)))], rows, msgs[(u, j)])
            out.append(x)
        return tuple(out)

    def truth(self, g, msgs):
        s = self.system
        b = len(next(iter(msgs.values())))
        cols = [np.full(b, s.code_of(g, ij)) for ij in self.dset] + [msgs[ij] for ij in self.dset]
        return np.stack(cols, axis=1)

    def decide(self, books, y, truth):
        dec = decode_dD_batch(self.system, self.dset, self.regions, books, y)
        lay = self.system.layout
        n_u = len(lay.packets)
        cols = [lay.index(ij) for ij in self.dset] + list(range(n_u, n_u + len(self.dset)))
        return _project(dec, cols)


def _pick(words, rows, msg):
    w = np.asarray(words)
    if w.shape[0] == 1:
        return w[0][msg]
    return w[rows, msg]


def _project(dec, cols):
    """(decoded, output, tie) with ties judged on the given output columns only."""
    b = len(dec.decoded)
    if len(dec.cand) == 0:
        return dec.decoded, np.full((b, len(cols)), -1), np.zeros(b, bool)
    proj = dec.cand[:, cols]
    chosen = proj[np.maximum(dec.choice, 0)]
    differs = (proj[None, :, :] != chosen[:, None, :]).any(-1)
    tie = (dec.near & differs).any(axis=1) & dec.decoded
    out = np.where(dec.decoded[:, None], chosen, -1)
    return dec.decoded, out, tie


def _synthesize(a, b, truth):
    """Combine two sub-decoders on (g1, w1); a tied true output is taken as wrong."""
    outs = []
    for dec, out, tie in (a, b):
        bad = tie & (out == truth).all(1)
        outs.append((dec, np.where(bad[:, None], WRONG, out)))
    (da, oa), (db, ob) = outs
    same = (oa == ob).all(1)
    decoded = (da & db & same) | (da ^ db)
    out = np.where(da[:, None], oa, ob)
    return decoded, np.where(decoded[:, None], out, -1), np.zeros(len(decoded), bool)


def _errors(region: str, decoded, out, tie, truth):
    correct = decoded & (out == truth).all(1) & ~tie
    if region == OPERATION:
        return decoded & ~correct, ~decoded, np.zeros_like(decoded)
    if region == MARGIN:
        return decoded & ~correct, np.zeros_like(decoded), np.zeros_like(decoded)
    return np.zeros_like(decoded), np.zeros_like(decoded), decoded


def _draw_outputs(channel: Channel, rng, x1, x2) -> np.ndarray:
    cdf = np.cumsum(channel.transition, axis=2)
    c = cdf[x1, x2]
    u = rng.random(x1.shape)[..., None] * c[..., -1:]
    y = (u >= c).sum(-1)
    return np.minimum(y, channel.y_alphabet_size - 1).astype(np.int64)


def _target(system, decoder: str, dset=None, regions=None) -> _Target:
    if decoder not in DECODERS:
        raise ConfigError(f"unknown decoder {decoder!r}; expected one of {', '.join(DECODERS)}")
    if decoder == "dD":
        if not isinstance(system, AsyncSystem) or dset is None or regions is None:
            raise ConfigError("decoder dD needs an asynchronous system, a set D and its regions")
        return _AsyncTarget(system, dset, regions)
    if not isinstance(system, SyncSystem):
        raise ConfigError(f"decoder {decoder} needs a synchronous system")
    return _SyncTarget(system, decoder)


# ---- Monte Carlo ---------------------------------------------------------------------

def simulate_gep(system, decoder: str, plan: TrialPlan | None = None, dset=None, regions=None,
                 fingerprint: str = "") -> GepEstimate:
    """Stratified Monte-Carlo estimate of a decoder's GEP.

    Trials are generated in blocks; block b of stratum g uses the stream
    (seed, g, b), so results do not depend on how blocks are scheduled.
    """
    plan = plan or TrialPlan()
    tgt = _target(system, decoder, dset, regions)
    fixed = None if plan.fresh_codebooks else tgt.fixed_books(plan.seed)
    strata = []
    for g in tgt.strata():
        region = tgt.regions.region_of(g)
        counts = np.zeros(3, np.int64)
        for blk, start in enumerate(range(0, plan.trials, plan.block_size)):
            b = min(plan.block_size, plan.trials - start)
            rng = keyed_generator(plan.seed, 5, *g, blk)
            if fixed is None:
                books = {key: random_books(rng, code, tgt.system.n, b) for key, code in tgt.book_specs(g)}
            else:
                books = fixed
            msgs = {key: rng.integers(0, m, b) for key, m in tgt.message_specs(g)}
            x1, x2 = tgt.inputs(g, books, msgs)
            y = _draw_outputs(tgt.channel, rng, x1, x2)
            truth = tgt.truth(g, msgs)
            decoded, out, tie = tgt.decide(books, y, truth)
            ev = _errors(region, decoded, out, tie, truth)
            counts += np.array([int(e.sum()) for e in ev])
        t = plan.trials
        p = counts.sum() / t
        se = math.sqrt(p * (1 - p) / t)
        strata.append(StratumEstimate(g, region, tgt.prior(g), t, int(counts[0]), int(counts[1]),
                                      int(counts[2]), float(p), se))
    return _combine_strata(decoder, "monte-carlo", strata, fingerprint, {"plan": plan.to_dict()})


# ---- exhaustive oracle ---------------------------------------------------------------

def _all_books(code, n):
    """Every codebook of one code with its probability."""
    m = message_count(code, n)
    probs = code.input_dist.probs
    a = len(probs)
    support = [s for s in range(a) if probs[s] > 0]
    books = np.array(list(itertools.product(support, repeat=m * n)), dtype=np.int64).reshape(-1, m, n)
    p = np.prod(probs[books], axis=(1, 2))
    return books, p


def exhaustive_gep(system, decoder: str, dset=None, regions=None, cap: int = 5_000_000,
                   fingerprint: str = "", chunk: int = 200_000) -> GepEstimate:
    """Exact GEP by enumerating codebooks, messages and output sequences."""
    tgt = _target(system, decoder, dset, regions)
    ch = tgt.channel
    n = tgt.system.n
    ys = np.array(list(itertools.product(range(ch.y_alphabet_size), repeat=tgt.length)), dtype=np.int64)
    strata = []
    total_states = 0
    for g in tgt.strata():
        region = tgt.regions.region_of(g)
        specs = tgt.book_specs(g)
        allb = [_all_books(code, n) for _, code in specs]
        mspecs = tgt.message_specs(g)
        mcombos = np.array(list(itertools.product(*(range(m) for _, m in mspecs))), dtype=np.int64)
        nbooks = int(np.prod([len(p) for _, p in allb]))
        states = nbooks * len(mcombos) * len(ys)
        total_states += states
        if total_states > cap:
            raise EstimateError(f"exhaustive enumeration needs {total_states} states, cap is {cap}")
        inner = len(mcombos) * len(ys)
        step = max(1, chunk // inner)
        acc = np.zeros(3)
        mass = []
        for lo in range(0, nbooks, step):
            flat = np.arange(lo, min(nbooks, lo + step))
            idx = np.unravel_index(flat, [len(p) for _, p in allb])
            pb = np.ones(len(flat))
            books = {}
            for (key, _), (bk, p), ix in zip(specs, allb, idx):
                books[key] = np.repeat(bk[ix], inner, axis=0)
                pb = pb * p[ix]
            reps = len(flat)
            mi = np.tile(np.repeat(np.arange(len(mcombos)), len(ys)), reps)
            yi = np.tile(np.arange(len(ys)), reps * len(mcombos))
            msgs = {key: mcombos[mi, c] for c, (key, _) in enumerate(mspecs)}
            y = ys[yi]
            x1, x2 = tgt.inputs(g, books, msgs)
            py = np.prod(ch.transition[x1, x2, y], axis=1)
            w = np.repeat(pb, inner) * py / len(mcombos)
            truth = tgt.truth(g, msgs)
            decoded, out, tie = tgt.decide(books, y, truth)
            ev = _errors(region, decoded, out, tie, truth)
            acc += np.array([math.fsum(w[e].tolist()) for e in ev])
            mass.append(math.fsum(w.tolist()))
        if abs(math.fsum(mass) - 1.0) > 1e-9:
            raise EstimateError("enumerated probability mass does not sum to 1")
        p = float(min(1.0, max(0.0, acc.sum())))
        strata.append(StratumEstimate(g, region, tgt.prior(g), states, float(acc[0]), float(acc[1]),
                                      float(acc[2]), p, 0.0))
    return _combine_strata(decoder, "exact", strata, fingerprint, {"states": total_states})


# ---- comparison ----------------------------------------------------------------------

@dataclass
class Verdict:
    passed: bool
    estimate: float
    stderr: float
    bound: float
    slack: float
    margin: float
    decoder: str = ""
    kind: str = ""
    fingerprint: str = ""

    @property
    def label(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def to_dict(self) -> dict:
        return {"verdict": self.label, "estimate": self.estimate, "stderr": self.stderr, "bound": self.bound,
                "slack": self.slack, "margin": self.margin, "decoder": self.decoder, "kind": self.kind,
                "fingerprint": self.fingerprint}


def compare(estimate: GepEstimate, bound: BoundReport, sigma_slack: float = 3.0) -> Verdict:
    """PASS iff estimate <= bound + sigma_slack * stderr."""
    if sigma_slack < 0:
        raise ConfigError("sigma slack must be nonnegative")
    if estimate.fingerprint != bound.fingerprint:
        raise EstimateError(f"fingerprint mismatch: estimate {estimate.fingerprint!r}, bound {bound.fingerprint!r}")
    limit = bound.total + sigma_slack * estimate.stderr
    return Verdict(estimate.total <= limit, estimate.total, estimate.stderr, bound.total, sigma_slack,
                   bound.total - estimate.total, estimate.decoder, bound.kind, bound.fingerprint)
