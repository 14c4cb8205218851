"""Frame-asynchronous two-user model, the subset decoder D_D and its bound.

User 1 sends L codewords back to back starting at position 0; user 2 starts
``t2`` positions later. Outside its own window a user transmits the idle
symbol. Packets are indexed (i, j) with i the user and j = 1..L, and a coding
vector assigns a code index to every packet, in the order
(1,1), ..., (1,L), (2,1), ..., (2,L).

Each channel position carries its own context: which packet of each user is
active there and at which codeword offset. Likelihoods pin the symbols of
packets in D and average the other active packets over their codes.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .channel import (Channel, ChannelError, Conditioning, SymbolDistribution, _sorted_prod,
                      conditioned_output_prob, mc_expectation_factor, safe_log)
from .codes import CodeEnsemble, ConfigError, message_count, rate_exponent
from .rcu import BoundError, EvalConfig, TermSpec, canonical_law, capped_mean, evaluate_term
from .regions import PRIOR_TOL, RegionError, SubDecoderRegions, coding_space, slice_matching
from .sync_bounds import BoundTerm, BoundReport, assemble
from .sync_decoder import NEG_INF, TIE_TOL, DecodeOutcome, DECODED
from .system import LN2


@dataclass(frozen=True)
class AsyncLayout:
    n: int
    l: int
    t2: int

    def __post_init__(self):
        if self.n < 1 or self.l < 1:
            raise ConfigError("layout needs n >= 1 and l >= 1")
        if not 0 <= self.t2 <= self.n:
            raise ConfigError(f"offset t2={self.t2} must lie in [0, n={self.n}]")

    @property
    def total_len(self) -> int:
        return self.n * self.l + self.t2

    @property
    def packets(self) -> list[tuple[int, int]]:
        """All packet indices in canonical order."""
        return [(i, j) for i in (1, 2) for j in range(1, self.l + 1)]

    def index(self, ij) -> int:
        i, j = ij
        return (i - 1) * self.l + (j - 1)

    def start(self, ij) -> int:
        i, j = ij
        return (j - 1) * self.n + (self.t2 if i == 2 else 0)

    def active(self, user: int, p: int):
        """Packet of ``user`` covering position p, or None while idling."""
        q = p - (self.t2 if user == 2 else 0)
        if 0 <= q < self.n * self.l:
            return (user, q // self.n + 1)
        return None

    def segments(self) -> list[tuple[int, int, tuple | None, tuple | None]]:
        """Maximal runs of positions with the same active packets."""
        out = []
        for p in range(self.total_len):
            ctx = (self.active(1, p), self.active(2, p))
            if out and out[-1][2:] == ctx and out[-1][1] == p:
                s, _, a, b = out[-1]
                out[-1] = (s, p + 1, a, b)
            else:
                out.append((p, p + 1) + ctx)
        return out


def index_set(members, layout: AsyncLayout) -> tuple:
    """Validated, canonically ordered tuple of packet indices."""
    ms = sorted({(int(i), int(j)) for i, j in members})
    for ij in ms:
        if ij not in layout.packets:
            raise ConfigError(f"packet {list(ij)} is not in U for L={layout.l}")
    return tuple(ms)


@dataclass(frozen=True, eq=False)
class AsyncSystem:
    channel: Channel
    ensemble1: CodeEnsemble
    ensemble2: CodeEnsemble
    layout: AsyncLayout
    priors: dict | None = None

    def __post_init__(self):
        self.channel.check()
        lay = self.layout
        if self.ensemble1.alphabet_size != self.channel.x1_alphabet_size:
            raise ConfigError("user-1 codes do not match the channel's x1 alphabet")
        if self.ensemble2.alphabet_size != self.channel.x2_alphabet_size:
            raise ConfigError("user-2 codes do not match the channel's x2 alphabet")
        if lay.t2 > 0 and (self.channel.idle1 is None or self.channel.idle2 is None):
            raise ConfigError("a nonzero offset needs idle symbols for both users")
        self.ensemble1.check_idle(self.channel.idle1)
        self.ensemble2.check_idle(self.channel.idle2)
        for ens in (self.ensemble1, self.ensemble2):
            for code in ens.codes:
                rate_exponent(code, lay.n)
        space = self.space
        if self.priors is None:
            pri = {g: 1.0 / len(space) for g in space}
        else:
            pri = {tuple(int(x) for x in g): float(p) for g, p in self.priors.items()}
            unknown = set(pri) - set(space)
            if unknown:
                raise RegionError(f"priors name unknown coding vectors {sorted(unknown)[:3]}")
            pri = {g: pri.get(g, 0.0) for g in space}
        if any(p < 0 for p in pri.values()) or abs(math.fsum(pri.values()) - 1.0) > PRIOR_TOL:
            raise RegionError("async priors must be nonnegative and sum to 1")
        object.__setattr__(self, "priors", pri)

    @property
    def n(self) -> int:
        return self.layout.n

    @cached_property
    def space(self) -> list[tuple]:
        sizes = [len(self.ensemble(i)) for i, _ in self.layout.packets]
        return coding_space(*sizes)

    def ensemble(self, user: int) -> CodeEnsemble:
        return self.ensemble1 if user == 1 else self.ensemble2

    def code_of(self, gv, ij) -> int:
        return gv[self.layout.index(ij)]

    def dist(self, ij, k: int) -> SymbolDistribution:
        return self.ensemble(ij[0])[k].input_dist

    def bits(self, ij, k: int) -> int:
        return rate_exponent(self.ensemble(ij[0])[k], self.n)

    def messages(self, ij, k: int) -> int:
        return message_count(self.ensemble(ij[0])[k], self.n)

    def bits_of(self, gv, packets) -> int:
        return sum(self.bits(ij, self.code_of(gv, ij)) for ij in packets)

    def prior(self, gv) -> float:
        return self.priors[tuple(gv)]

    def log_prior(self, gv) -> float:
        return float(safe_log(self.prior(gv)))

    def idle_dist(self, user: int) -> SymbolDistribution:
        idle = self.channel.idle1 if user == 1 else self.channel.idle2
        size = self.channel.x1_alphabet_size if user == 1 else self.channel.x2_alphabet_size
        return SymbolDistribution.point_mass(idle, size)

    def position_dists(self, gv, p: int) -> tuple:
        """Input distribution of each user at position p under coding vector gv."""
        out = []
        for u in (1, 2):
            ij = self.layout.active(u, p)
            out.append(self.idle_dist(u) if ij is None else self.dist(ij, self.code_of(gv, ij)))
        return tuple(out)

    def check_regions(self, regions: SubDecoderRegions) -> SubDecoderRegions:
        return regions.check_cover(self.space)

    @cached_property
    def _tables(self) -> dict:
        return {}

    def table(self, pinned: frozenset, dists: tuple) -> np.ndarray:
        """log P(y | pinned users' symbols) with the others drawn from ``dists``.

        Axes: one per pinned user (user 1 first), then y.
        """
        d = tuple(None if u in pinned else dists[u - 1] for u in (1, 2))
        key = (pinned, d)
        tabs = self._tables
        if key not in tabs:
            ch = self.channel
            r = [range(ch.x1_alphabet_size), range(ch.x2_alphabet_size)]
            shape = [len(r[u - 1]) for u in (1, 2) if u in pinned] + [ch.y_alphabet_size]
            t = np.zeros(shape)
            for xs in itertools.product(*(r[u - 1] for u in (1, 2) if u in pinned)):
                pins = dict(zip([u for u in (1, 2) if u in pinned], xs))
                for y in range(ch.y_alphabet_size):
                    t[xs + (y,)] = conditioned_output_prob(ch, pins, d, y)
            tabs[key] = safe_log(t)
        return tabs[key]


# ---- sequences and likelihoods ----------------------------------------------------

def async_input_sequences(system: AsyncSystem, codebooks, messages: dict, coding) -> tuple:
    """Full-length input sequences of both users.

    ``codebooks`` maps (i, j, code) to an (M, N) array (or Codebook);
    ``messages`` maps (i, j) to a message index.
    """
    lay = system.layout
    out = []
    for u in (1, 2):
        idle = system.channel.idle1 if u == 1 else system.channel.idle2
        seq = np.full(lay.total_len, -1 if idle is None else idle, dtype=np.int64)
        for j in range(1, lay.l + 1):
            ij = (u, j)
            k = system.code_of(coding, ij)
            words = np.asarray(getattr(codebooks[(u, j, k)], "words", codebooks[(u, j, k)]))
            w = messages[ij]
            if not 0 <= w < len(words):
                raise ChannelError(f"message {w} out of range for packet {list(ij)}")
            s = lay.start(ij)
            seq[s:s + lay.n] = words[w]
        out.append(seq)
    return tuple(out)


def _batch(words) -> np.ndarray:
    w = np.asarray(getattr(words, "words", words), dtype=np.int64)
    return w[None] if w.ndim == 2 else w


def partial_loglik(system: AsyncSystem, gv, pins: tuple, axes: tuple, books, y) -> np.ndarray:
    """Sum over positions of log P(y_p | pinned symbols) under coding vector gv.

    ``pins`` are the packets whose codewords are pinned, ``axes`` the packets
    that index the candidate grid (pins must be a subset). Returns an array
    of shape (B, M_axis...) with size-1 axes for unpinned grid packets.
    """
    lay = system.layout
    y = np.asarray(y, dtype=np.int64)
    batch = y.shape[0]
    nd = len(axes)
    total = np.zeros((batch,) + (1,) * nd)
    for s0, s1, a1, a2 in lay.segments():
        act = {1: a1, 2: a2}
        pinned = frozenset(u for u in (1, 2) if act[u] is not None and act[u] in pins)
        dists = system.position_dists(gv, s0)
        table = system.table(pinned, dists)
        idx = []
        for u in (1, 2):
            if u not in pinned:
                continue
            ij = act[u]
            words = _batch(books[ij + (system.code_of(gv, ij),)])
            off = s0 - lay.start(ij)
            sym = words[:, :, off:off + (s1 - s0)]
            shape = [sym.shape[0]] + [1] * nd + [s1 - s0]
            shape[1 + axes.index(ij)] = sym.shape[1]
            idx.append(sym.reshape(shape))
        yy = y[:, s0:s1].reshape([batch] + [1] * nd + [s1 - s0])
        total = total + table[tuple(idx) + (yy,)].sum(-1)
    return total


def async_weighted_likelihood(system: AsyncSystem, coding, dset, decoded_words: dict, y_seq) -> float:
    """log P(y | x_D, g_{U minus D}) + log P(g_U) - N sum_D r log 2 for one candidate.

    ``decoded_words`` maps each packet of D to its codeword.
    """
    lay = system.layout
    dset = index_set(dset, lay)
    if set(decoded_words) != set(dset):
        raise ChannelError("decoded words must cover exactly the packets of D")
    y = np.asarray(y_seq, dtype=np.int64).reshape(1, -1)
    if y.shape[1] != lay.total_len:
        raise ChannelError(f"received sequence has length {y.shape[1]}, expected {lay.total_len}")
    books = {ij + (system.code_of(coding, ij),): np.asarray(w).reshape(1, 1, -1) for ij, w in decoded_words.items()}
    ll = partial_loglik(system, coding, dset, dset, books, y)
    return float(ll.reshape(-1)[0] + system.log_prior(coding) - system.bits_of(coding, dset) * LN2)


# ---- the subset decoder -------------------------------------------------------------

@dataclass
class AsyncDecision:
    decoded: np.ndarray
    choice: np.ndarray
    cand: np.ndarray
    key: np.ndarray
    near: np.ndarray
    tie: np.ndarray
    dset: tuple
    n_codes: int

    def coding(self) -> np.ndarray:
        return np.where(self.decoded[:, None], self.cand[np.maximum(self.choice, 0), :self.n_codes], -1)

    def messages(self) -> np.ndarray:
        return np.where(self.decoded[:, None], self.cand[np.maximum(self.choice, 0), self.n_codes:], -1)


def subsets(dset: tuple) -> list[tuple]:
    return [c for r in range(len(dset) + 1) for c in itertools.combinations(dset, r)]


def decode_dD_batch(system: AsyncSystem, dset, regions: SubDecoderRegions, books, y,
                    thresholds: bool = True) -> AsyncDecision:
    """Subset decoder over a batch; ``books`` maps (i, j, code) to (B or 1, M, N) arrays."""
    lay = system.layout
    dset = index_set(dset, lay)
    y = np.asarray(y, dtype=np.int64)
    batch = y.shape[0]
    nU = len(lay.packets)
    subs = subsets(dset)
    if len(subs) > 4096:
        raise BoundError("too many subsets of D")
    thr_cache = {}

    def threshold(gt, sset):
        key = (gt, sset)
        if key not in thr_cache:
            base = system.log_prior(gt) - system.bits_of(gt, sset) * LN2
            thr_cache[key] = base + partial_loglik(system, gt, sset, dset, books, y)
        return thr_cache[key]

    scores, cand = [], []
    for gv in sorted(regions.operation):
        sizes = [system.messages(ij, system.code_of(gv, ij)) for ij in dset]
        ell = partial_loglik(system, gv, dset, dset, books, y)
        ell = ell + (system.log_prior(gv) - system.bits_of(gv, dset) * LN2)
        ell = np.broadcast_to(ell, (batch,) + tuple(sizes))
        ok = np.ones(ell.shape, bool)
        if thresholds:
            for sset in subs:
                outs = regions.collision if len(sset) == len(dset) else regions.outside
                fixed = {lay.index(ij): system.code_of(gv, ij) for ij in sset}
                for gt in sorted(slice_matching(outs, fixed)):
                    ok &= ell > threshold(gt, sset) + TIE_TOL
        c = int(np.prod(sizes))
        scores.append(np.where(ok, ell, NEG_INF).reshape(batch, c))
        ws = np.array(list(itertools.product(*(range(m) for m in sizes))), dtype=np.int64).reshape(c, len(dset))
        cand.append(np.concatenate([np.tile(np.array(gv, np.int64), (c, 1)), ws], axis=1))
    if not scores:
        empty = np.zeros((batch, 0), bool)
        return AsyncDecision(np.zeros(batch, bool), np.full(batch, -1), np.zeros((0, nU + len(dset)), np.int64),
                             np.zeros(0, np.int64), empty, np.zeros(batch, bool), dset, nU)
    s = np.concatenate(scores, axis=1)
    cand = np.concatenate(cand, axis=0)
    out_cols = [lay.index(ij) for ij in dset] + list(range(nU, nU + len(dset)))
    _, key = np.unique(cand[:, out_cols], axis=0, return_inverse=True)
    key = key.reshape(-1)
    best = s.max(axis=1)
    decoded = best > NEG_INF
    near = (s >= best[:, None] - TIE_TOL) & decoded[:, None]
    choice = np.where(decoded, np.argmax(near, axis=1), -1)
    tie = (near & (key[None, :] != key[np.maximum(choice, 0)][:, None])).any(axis=1)
    return AsyncDecision(decoded, choice, cand, key, near, tie, dset, nU)


def decode_dD(system: AsyncSystem, dset, regions: SubDecoderRegions, codebooks, y_seq) -> DecodeOutcome:
    """Decode one received frame; the outcome detail carries (w_D, g_D) per packet."""
    lay = system.layout
    y = np.asarray(y_seq, dtype=np.int64).reshape(1, -1)
    if y.shape[1] != lay.total_len:
        raise ChannelError(f"received sequence has length {y.shape[1]}, expected {lay.total_len}")
    books = {k: _batch(v) for k, v in codebooks.items()}
    dec = decode_dD_batch(system, dset, regions, books, y)
    if not dec.decoded[0]:
        return DecodeOutcome.collision(tie=False)
    gv = tuple(int(v) for v in dec.coding()[0])
    ws = [int(v) for v in dec.messages()[0]]
    packets = {ij: (w, gv[lay.index(ij)]) for ij, w in zip(dec.dset, ws)}
    first = packets.get((1, 1))
    detail = {"packets": packets, "coding": gv, "tie": bool(dec.tie[0])}
    return DecodeOutcome(DECODED, first[0] if first else None, first[1] if first else None, detail)


# ---- Union bound for D_D ------------------------------------------------------------

def _position_context(system: AsyncSystem, dset, sset, p: int):
    lay = system.layout
    act = {u: lay.active(u, p) for u in (1, 2)}
    pin_d = tuple(u for u in (1, 2) if act[u] is not None and act[u] in dset)
    pin_s = tuple(u for u in pin_d if act[u] in sset)
    return pin_d, pin_s


def spec_subset(system: AsyncSystem, dset, sset, g, gt) -> TermSpec:
    """Union term: rivals keep the S codewords and draw fresh codewords on D minus S."""
    ch = system.channel
    ranges = {1: range(ch.x1_alphabet_size), 2: range(ch.x2_alphabet_size)}
    positions = []
    memo = {}
    for p in range(system.layout.total_len):
        pin_d, pin_s = _position_context(system, dset, sset, p)
        d = system.position_dists(g, p)
        e = system.position_dists(gt, p)
        key = (pin_d, pin_s, d, e)
        if key not in memo:
            fresh = tuple(u for u in pin_d if u not in pin_s)
            laws = {}
            outcomes = []
            for xs in itertools.product(*(ranges[u] for u in pin_d)):
                x = dict(zip(pin_d, xs))
                pd = [d[u - 1].probs[x[u]] for u in pin_d]
                if any(v == 0 for v in pd):
                    continue
                for y in range(ch.y_alphabet_size):
                    cond = conditioned_output_prob(ch, x, d, y)
                    prob = _sorted_prod(*pd, cond)
                    if prob <= 0:
                        continue
                    lkey = (tuple(x[u] for u in pin_s), y)
                    if lkey not in laws:
                        pairs = []
                        for xt in itertools.product(*(ranges[u] for u in fresh)):
                            z = {u: x[u] for u in pin_s}
                            z.update(zip(fresh, xt))
                            q = _sorted_prod(*[e[u - 1].probs[z[u]] for u in fresh])
                            pairs.append((float(safe_log(conditioned_output_prob(ch, z, e, y))), q))
                        laws[lkey] = canonical_law(pairs)
                    outcomes.append((prob, float(safe_log(cond)), laws[lkey]))
            memo[key] = outcomes
        positions.append(memo[key])
    fresh_packets = [ij for ij in dset if ij not in sset]
    return TermSpec(positions,
                    c_true=system.log_prior(g) - system.bits_of(g, dset) * LN2,
                    c_rival=system.log_prior(gt) - system.bits_of(gt, dset) * LN2,
                    bits=system.bits_of(gt, fresh_packets))


def mc_factor_subset(system: AsyncSystem, dset, sset, g, gt) -> float:
    """E[P_gt(Y | X_S) / P(Y | X_D, g rest)] as a product of per-position factors."""
    classes = {}
    for p in range(system.layout.total_len):
        pin_d, pin_s = _position_context(system, dset, sset, p)
        d = system.position_dists(g, p)
        e = system.position_dists(gt, p)
        key = (pin_d, pin_s, d, e)
        classes[key] = classes.get(key, 0) + 1
    out = 1.0
    for (pin_d, pin_s, d, e), m in classes.items():
        num = Conditioning(frozenset(pin_s), tuple(None if u in pin_s else e[u - 1] for u in (1, 2)))
        f = mc_expectation_factor(system.channel, d, num, frozenset(pin_d))
        out *= f ** m
    return out


def _subset_stream(system: AsyncSystem, sset) -> int:
    return sum(1 << system.layout.index(ij) for ij in sset)


def bound_gepD(system: AsyncSystem, dset, regions: SubDecoderRegions, config: EvalConfig | None = None,
               fingerprint: str = "") -> BoundReport:
    """Bound on the subset decoder's error performance.

    Sums, for each g in the operation region and each proper subset S of D,
    the union terms against operation vectors agreeing with g on S and twice
    the collision / miss terms against outside vectors agreeing on S; then
    twice the S = D terms against collision vectors agreeing on D.
    """
    config = config or EvalConfig()
    lay = system.layout
    dset = index_set(dset, lay)
    subs = subsets(dset)
    if len(subs) > config.subset_cap:
        raise BoundError(f"{len(subs)} subsets exceed the subset cap {config.subset_cap}")
    op = sorted(regions.operation)
    outside = regions.outside
    terms = []
    for g in op:
        for sset in subs[:-1]:
            fixed = {lay.index(ij): system.code_of(g, ij) for ij in sset}
            same = sorted(slice_matching(regions.operation, fixed))
            cap = 1.0 / len(same)
            for gt in same:
                spec = spec_subset(system, dset, sset, g, gt)
                stream = (11, _subset_stream(system, sset), *g, *gt)
                res = evaluate_term(spec, config, stream)
                mean, se = capped_mean(res, cap, spec.multiplier)
                pg = system.prior(g)
                terms.append(BoundTerm("B_iS", g, gt, pg * mean, res.mode, pg * se, res.samples, 1, (), sset))
            rest = [ij for ij in dset if ij not in sset]
            for gt in sorted(slice_matching(outside, fixed)):
                terms.append(_mc(system, dset, sset, g, gt, system.bits_of(g, rest), "B_mcS"))
        fixed = {lay.index(ij): system.code_of(g, ij) for ij in dset}
        for gt in sorted(slice_matching(regions.collision, fixed)):
            terms.append(_mc(system, dset, dset, g, gt, 0, "B_mcD"))
    return assemble("dD", terms, fingerprint, decoder="dD", d=[list(ij) for ij in dset])


def _mc(system, dset, sset, g, gt, bits, family) -> BoundTerm:
    f = mc_factor_subset(system, dset, sset, g, gt)
    other = system.prior(gt) * 2.0 ** bits * f
    pg = system.prior(g)
    return BoundTerm(family, g, gt, min(pg, other), weight=2, arms=(pg, other), subset=sset)


# ---- threshold optimality -----------------------------------------------------------

def subset_threshold_objective(system: AsyncSystem, dset, sset, g, gt, shifts) -> np.ndarray:
    """Exact collision + miss objective of one (g, gt, S) triple at shifted thresholds.

    Enumerates every codeword sequence of the D packets and every output
    sequence, so only tiny layouts are feasible.
    """
    lay = system.layout
    dset = index_set(dset, lay)
    sset = index_set(sset, lay)
    ch = system.channel
    seqs = {}
    for ij in dset:
        a = ch.x1_alphabet_size if ij[0] == 1 else ch.x2_alphabet_size
        seqs[ij] = np.array(list(itertools.product(range(a), repeat=lay.n)), dtype=np.int64)
    ys = np.array(list(itertools.product(range(ch.y_alphabet_size), repeat=lay.total_len)), dtype=np.int64)
    combos = list(itertools.product(*(range(len(seqs[ij])) for ij in dset)))
    books_true, books_alt = {}, {}
    for k, ij in enumerate(dset):
        words = np.stack([seqs[ij][c[k]] for c in combos])[None]
        books_true[ij + (system.code_of(g, ij),)] = words
        books_alt[ij + (system.code_of(gt, ij),)] = words
    px = np.ones(len(combos))
    for k, ij in enumerate(dset):
        probs = system.dist(ij, system.code_of(g, ij)).probs
        px = px * np.array([probs[seqs[ij][c[k]]].prod() for c in combos])
    # rows: output sequences; columns: enumerated D codeword combinations
    ones = (len(combos),)
    true_ll = _flat_ll(system, g, dset, dset, books_true, ys, ones)
    alt_ll = _flat_ll(system, gt, sset, dset, books_alt, ys, ones)
    rest = [ij for ij in dset if ij not in sset]
    ell = true_ll + system.log_prior(g) - system.bits_of(g, dset) * LN2
    gamma = alt_ll + system.log_prior(gt) - system.bits_of(g, sset) * LN2
    w_true = np.exp(true_ll)
    w_alt = np.exp(alt_ll)
    weight = 2.0 ** system.bits_of(g, rest)
    out = []
    for dlt in shifts:
        passed = ell > gamma + dlt
        val = px[None, :] * (system.prior(g) * w_true * ~passed + system.prior(gt) * weight * w_alt * passed)
        out.append(float(val.sum()))
    return np.array(out)


def _flat_ll(system, gv, pins, axes, books, ys, shape):
    # books hold one "codeword" per enumerated combination along the message axis
    lay = system.layout
    total = np.zeros((len(ys), shape[0]))
    for s0, s1, a1, a2 in lay.segments():
        act = {1: a1, 2: a2}
        pinned = [u for u in (1, 2) if act[u] is not None and act[u] in pins]
        table = system.table(frozenset(pinned), system.position_dists(gv, s0))
        idx = []
        for u in pinned:
            ij = act[u]
            words = books[ij + (system.code_of(gv, ij),)][0]
            off = s0 - lay.start(ij)
            idx.append(words[None, :, off:off + (s1 - s0)])
        yy = ys[:, None, s0:s1]
        total = total + table[tuple(idx) + (yy,)].sum(-1)
    return total


# ---- combining several subset decoders ------------------------------------------------

AGREEMENT_RULES = ("unanimous", "first")


def combine_decisions(outputs, rule: str = "unanimous"):
    """Receiver output from several subset decoders, judged on shared target indices.

    ``outputs`` is a list of (decoded, out) pairs with ``out`` of shape
    (B, k): each decoder's output projected onto the same target columns
    (for instance the user-1 packets' codes and messages). Under
    ``unanimous`` a trial decodes when at least one decoder decodes and all
    decoding ones agree; this is the two-decoder synthesis rule. Under
    ``first`` the first decoder that decodes wins.
    """
    if rule not in AGREEMENT_RULES:
        raise ConfigError(f"unknown agreement rule {rule!r}; expected one of {', '.join(AGREEMENT_RULES)}")
    if not outputs:
        raise ConfigError("need at least one decoder output")
    dec = np.stack([np.asarray(d, bool) for d, _ in outputs])
    out = np.stack([np.asarray(o) for _, o in outputs])
    anyd = dec.any(axis=0)
    first = np.argmax(dec, axis=0)
    pick = out[first, np.arange(out.shape[1])]
    if rule == "first":
        decoded = anyd
    else:
        agree = ((out == pick[None]).all(-1) | ~dec).all(axis=0)
        decoded = anyd & agree
    return decoded, np.where(decoded[:, None], pick, -1)
