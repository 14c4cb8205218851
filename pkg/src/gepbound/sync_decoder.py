"""Joint (D12) and user-1 (D1) sub-decoders and the receiver synthesis rule.

Both decoders score every candidate in their operation region with a weighted
likelihood, keep the candidates that strictly beat every optimal threshold of
the outside region, and return the best survivor. The batch functions work on
B independent trials at once; codebooks are passed as arrays of shape
(B, M, N) or (1, M, N) keyed by (user, code index).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import NEG_INF, ChannelError
from .system import LN2, SyncSystem

TIE_TOL = 1e-9

DECODED = "decoded"
COLLISION = "collision"


@dataclass(frozen=True)
class CandidateScore:
    w1: int
    w2: int | None
    g: tuple
    log_weighted_likelihood: float


@dataclass(frozen=True)
class DecodeOutcome:
    kind: str
    w1: int | None = None
    g1: int | None = None
    detail: dict = field(default_factory=dict)

    @property
    def decoded(self) -> bool:
        return self.kind == DECODED

    @classmethod
    def collision(cls, **detail) -> "DecodeOutcome":
        return cls(COLLISION, None, None, detail)


@dataclass
class BatchDecision:
    """Decisions for a batch of trials.

    ``cand`` lists the candidates as rows (g1, g2, w1, w2) with w2 = -1 for
    D1. ``near`` marks admitted candidates within the tie tolerance of the
    best score; ``key`` identifies the output each candidate stands for.
    """

    decoded: np.ndarray
    choice: np.ndarray
    cand: np.ndarray
    key: np.ndarray
    near: np.ndarray
    tie: np.ndarray
    admitted: np.ndarray | None = None

    def field(self, col: int) -> np.ndarray:
        if len(self.cand) == 0:
            return np.full(self.decoded.shape, -1)
        out = self.cand[np.maximum(self.choice, 0), col]
        return np.where(self.decoded, out, -1)

    @property
    def g1(self):
        return self.field(0)

    @property
    def g2(self):
        return self.field(1)

    @property
    def w1(self):
        return self.field(2)

    @property
    def w2(self):
        return self.field(3)


def _as_batch(words) -> np.ndarray:
    w = np.asarray(getattr(words, "words", words), dtype=np.int64)
    return w[None] if w.ndim == 2 else w


def _select(scores: list, cand: list, keys: list, batch: int) -> BatchDecision:
    if not scores:
        empty = np.zeros((batch, 0), bool)
        return BatchDecision(np.zeros(batch, bool), np.full(batch, -1), np.zeros((0, 4), np.int64),
                             np.zeros(0, np.int64), empty, np.zeros(batch, bool))
    s = np.concatenate(scores, axis=1)
    cand = np.concatenate(cand, axis=0)
    key = np.concatenate(keys)
    best = s.max(axis=1)
    decoded = best > NEG_INF
    near = (s >= best[:, None] - TIE_TOL) & decoded[:, None]
    choice = np.where(decoded, np.argmax(near, axis=1), -1)
    chosen_key = key[np.maximum(choice, 0)]
    tie = (near & (key[None, :] != chosen_key[:, None])).any(axis=1)
    return BatchDecision(decoded, choice, cand, key, near, tie, s > NEG_INF)


def _loglik_grid(log_w, x1, x2, y):
    """Sum_n log W[x1, x2, y] for every codeword pair, shape (B, M1, M2)."""
    return log_w[x1[:, :, None, :], x2[:, None, :, :], y[:, None, None, :]].sum(-1)


def _cond_sum(table, x, y):
    """Sum_n table[x_n, y_n] for every codeword, shape (B, M)."""
    return table[x, y[:, None, :]].sum(-1)


def decode_d12_batch(system: SyncSystem, regions, books, y, thresholds: bool = True) -> BatchDecision:
    """Joint decoder over a batch. ``thresholds=False`` gives plain weighted-ML decoding."""
    y = np.asarray(y, dtype=np.int64)
    batch = y.shape[0]
    log_w = system.channel.log_transition
    tab = system.tables
    outside = sorted(regions.outside) if thresholds else []
    marg = {gt: system.log_prior(gt) + tab.marginal(gt)[y].sum(-1) for gt in outside}
    scores, cand, keys = [], [], []
    for g in sorted(regions.operation):
        g1, g2 = g
        x1 = _as_batch(books[1, g1])
        x2 = _as_batch(books[2, g2])
        m1, m2 = x1.shape[1], x2.shape[1]
        ell = _loglik_grid(log_w, x1, x2, y)
        ell = ell + (system.log_prior(g) - (system.bits(1, g1) + system.bits(2, g2)) * LN2)
        ok = np.ones(ell.shape, bool)
        for gt in outside:
            ok &= ell > marg[gt][:, None, None] + TIE_TOL
            if gt[0] == g1:
                t1 = system.log_prior(gt) - system.bits(1, g1) * LN2 + _cond_sum(tab.given_x1(gt[1]), x1, y)
                ok &= ell > t1[:, :, None] + TIE_TOL
            if gt[1] == g2:
                t2 = system.log_prior(gt) - system.bits(2, g2) * LN2 + _cond_sum(tab.given_x2(gt[0]), x2, y)
                ok &= ell > t2[:, None, :] + TIE_TOL
        scores.append(np.where(ok, ell, NEG_INF).reshape(batch, m1 * m2))
        w1, w2 = np.meshgrid(np.arange(m1), np.arange(m2), indexing="ij")
        c = np.stack([np.full(m1 * m2, g1), np.full(m1 * m2, g2), w1.ravel(), w2.ravel()], axis=1)
        cand.append(c)
    if cand:
        allc = np.concatenate(cand)
        keys = [np.arange(len(allc))]
    return _select(scores, cand, keys, batch)


def decode_d1_batch(system: SyncSystem, regions, books, y, thresholds: bool = True) -> BatchDecision:
    """User-1 decoder over a batch; user 2 is averaged out under the candidate's code."""
    y = np.asarray(y, dtype=np.int64)
    batch = y.shape[0]
    tab = system.tables
    outside = sorted(regions.outside) if thresholds else []
    collision = sorted(regions.collision) if thresholds else []
    marg = {gt: system.log_prior(gt) + tab.marginal(gt)[y].sum(-1) for gt in outside}
    m1_max = max((system.messages(1, k) for k in range(len(system.ensemble1))), default=1)
    scores, cand, keys = [], [], []
    for g in sorted(regions.operation):
        g1, g2 = g
        x1 = _as_batch(books[1, g1])
        m1 = x1.shape[1]
        rate = system.bits(1, g1) * LN2
        ell = _cond_sum(tab.given_x1(g2), x1, y) + (system.log_prior(g) - rate)
        ok = np.ones(ell.shape, bool)
        for gt in outside:
            ok &= ell > marg[gt][:, None] + TIE_TOL
        for gt in collision:
            if gt[0] == g1:
                t1 = system.log_prior(gt) - rate + _cond_sum(tab.given_x1(gt[1]), x1, y)
                ok &= ell > t1 + TIE_TOL
        scores.append(np.where(ok, ell, NEG_INF))
        w1 = np.arange(m1)
        cand.append(np.stack([np.full(m1, g1), np.full(m1, g2), w1, np.full(m1, -1)], axis=1))
        keys.append(g1 * m1_max + w1)
    return _select(scores, cand, keys, batch)


def synthesize_batch(d12: BatchDecision, d1: BatchDecision):
    """Combine the two sub-decoders on (w1, g1); returns (decoded, w1, g1)."""
    a, b = d12.decoded, d1.decoded
    same = (d12.w1 == d1.w1) & (d12.g1 == d1.g1)
    decoded = (a & b & same) | (a ^ b)
    w1 = np.where(a, d12.w1, d1.w1)
    g1 = np.where(a, d12.g1, d1.g1)
    return decoded, np.where(decoded, w1, -1), np.where(decoded, g1, -1)


def _books_from(codebooks) -> dict:
    return {k: _as_batch(v) for k, v in codebooks.items()}


def _check_y(system: SyncSystem, y_seq) -> np.ndarray:
    y = np.asarray(y_seq, dtype=np.int64).reshape(1, -1)
    if y.shape[1] != system.n:
        raise ChannelError(f"received sequence has length {y.shape[1]}, expected {system.n}")
    if y.min() < 0 or y.max() >= system.channel.y_alphabet_size:
        raise ChannelError("received sequence has a symbol outside the output alphabet")
    return y


def _outcome(dec: BatchDecision, joint: bool) -> DecodeOutcome:
    tie = bool(dec.tie[0])
    if not dec.decoded[0]:
        return DecodeOutcome.collision(tie=False)
    g = (int(dec.g1[0]), int(dec.g2[0]))
    detail = {"g": g, "tie": tie}
    if joint:
        detail["w2"] = int(dec.w2[0])
    return DecodeOutcome(DECODED, int(dec.w1[0]), g[0], detail)


def decode_d12(system: SyncSystem, regions, codebooks, y_seq) -> DecodeOutcome:
    """Decode one received block with the joint decoder."""
    return _outcome(decode_d12_batch(system, regions, _books_from(codebooks), _check_y(system, y_seq)), True)


def decode_d1(system: SyncSystem, regions, codebooks, y_seq) -> DecodeOutcome:
    """Decode one received block with the user-1 decoder."""
    return _outcome(decode_d1_batch(system, regions, _books_from(codebooks), _check_y(system, y_seq)), False)


def synthesize(out12: DecodeOutcome, out1: DecodeOutcome) -> DecodeOutcome:
    if out12.decoded and out1.decoded:
        if (out12.w1, out12.g1) == (out1.w1, out1.g1):
            return DecodeOutcome(DECODED, out12.w1, out12.g1, {"agreed": True})
        return DecodeOutcome.collision(disagreement=((out12.w1, out12.g1), (out1.w1, out1.g1)))
    if out12.decoded:
        return out12
    if out1.decoded:
        return out1
    return DecodeOutcome.collision()


def weighted_likelihood_d12(system: SyncSystem, codebooks, candidate, y_seq) -> float:
    """log P(y | x1(w1), x2(w2)) + log P(g) - N (r_g1 + r_g2) log 2."""
    w1, w2, g = candidate
    g1, g2 = g
    y = _check_y(system, y_seq)[0]
    x1 = _as_batch(codebooks[1, g1])[0]
    x2 = _as_batch(codebooks[2, g2])[0]
    if not (0 <= w1 < len(x1) and 0 <= w2 < len(x2)):
        raise ChannelError(f"message index out of range for candidate {candidate}")
    ll = system.channel.log_transition[x1[w1], x2[w2], y].sum()
    return float(ll + system.log_prior(g) - (system.bits(1, g1) + system.bits(2, g2)) * LN2)


def weighted_likelihood_d1(system: SyncSystem, codebooks, candidate, y_seq) -> float:
    """log P(y | x1(w1), g2) + log P(g) - N r_g1 log 2."""
    w1, g = candidate
    g1, g2 = g
    y = _check_y(system, y_seq)[0]
    x1 = _as_batch(codebooks[1, g1])[0]
    if not 0 <= w1 < len(x1):
        raise ChannelError(f"message index out of range for candidate {candidate}")
    ll = system.tables.given_x1(g2)[x1[w1], y].sum()
    return float(ll + system.log_prior(g) - system.bits(1, g1) * LN2)


def optimal_thresholds_d12(system: SyncSystem, g_tilde, case: str, y_seq, x1_seq=None, x2_seq=None,
                           g=None) -> float:
    """Log-domain optimal threshold against outside vector ``g_tilde``.

    case "" : log P(g~) + log P_g~(y)
    case "1": log P(g~) - N r_g1 log 2 + log P_g~2(y | x1)
    case "2": log P(g~) - N r_g2 log 2 + log P_g~1(y | x2)
    For cases "1" and "2" the candidate's own code index on the pinned user is
    the matching component of ``g_tilde`` unless ``g`` is given.
    """
    gt = tuple(g_tilde)
    g = gt if g is None else tuple(g)
    y = _check_y(system, y_seq)[0]
    tab = system.tables
    base = system.log_prior(gt)
    if case == "":
        return float(base + tab.marginal(gt)[y].sum())
    if case == "1":
        if x1_seq is None:
            raise ChannelError("case {1} threshold needs the user-1 sequence")
        x1 = np.asarray(x1_seq, dtype=np.int64)
        return float(base - system.bits(1, g[0]) * LN2 + tab.given_x1(gt[1])[x1, y].sum())
    if case == "2":
        if x2_seq is None:
            raise ChannelError("case {2} threshold needs the user-2 sequence")
        x2 = np.asarray(x2_seq, dtype=np.int64)
        return float(base - system.bits(2, g[1]) * LN2 + tab.given_x2(gt[0])[x2, y].sum())
    raise ValueError(f"unknown threshold case {case!r}")
