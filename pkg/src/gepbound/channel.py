"""Two-user discrete memoryless channel and the likelihood quantities built on it.

Everything is kept in the log domain. A zero probability is represented by
``NEG_INF`` so that products over long blocks never underflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

NEG_INF = -math.inf
ROW_TOL = 1e-12


class ChannelError(ValueError):
    """Raised for malformed channels, distributions or symbol sequences."""


def safe_log(p):
    """Elementwise log that maps 0 to -inf.

    Uses the scalar libm log so that table entries and single values agree
    to the last bit (vectorized log kernels may round differently).
    """
    a = np.asarray(p, dtype=float)
    out = np.array([math.log(v) if v > 0 else -math.inf for v in a.reshape(-1).tolist()])
    return out.reshape(a.shape) if a.ndim else float(out[0])


@dataclass(frozen=True)
class SymbolDistribution:
    """Probability vector over one input alphabet."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float).reshape(-1)
        if p.size == 0:
            raise ChannelError("distribution is empty")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ChannelError(f"distribution has negative or non-finite entries: {p.tolist()}")
        if abs(math.fsum(p.tolist()) - 1.0) > ROW_TOL:
            raise ChannelError(f"distribution sums to {math.fsum(p.tolist())!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, size: int) -> "SymbolDistribution":
        return cls(np.full(size, 1.0 / size))

    @classmethod
    def point_mass(cls, symbol: int, size: int) -> "SymbolDistribution":
        p = np.zeros(size)
        p[symbol] = 1.0
        return cls(p)

    @property
    def size(self) -> int:
        return self.probs.size

    @property
    def is_point_mass(self) -> bool:
        return int(np.count_nonzero(self.probs)) == 1

    def __eq__(self, other):
        return isinstance(other, SymbolDistribution) and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash(self.probs.tobytes())


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    problems: tuple[str, ...] = ()
    row: tuple[int, int] | None = None

    def __bool__(self):
        return self.ok


@dataclass(frozen=True, eq=False)
class Channel:
    """Transition law P(y | x1, x2) stored as an (A1, A2, B) array."""

    transition: np.ndarray
    idle1: int | None = None
    idle2: int | None = None

    def __post_init__(self):
        t = np.array(self.transition, dtype=float)
        t.setflags(write=False)
        object.__setattr__(self, "transition", t)

    @property
    def x1_alphabet_size(self) -> int:
        return self.transition.shape[0]

    @property
    def x2_alphabet_size(self) -> int:
        return self.transition.shape[1]

    @property
    def y_alphabet_size(self) -> int:
        return self.transition.shape[2]

    @cached_property
    def log_transition(self) -> np.ndarray:
        return safe_log(self.transition)

    def check(self) -> "Channel":
        res = validate_channel(self)
        if not res.ok:
            raise ChannelError("; ".join(res.problems))
        return self

    def swapped(self) -> "Channel":
        """The same channel with the user roles exchanged."""
        return Channel(np.transpose(self.transition, (1, 0, 2)), self.idle2, self.idle1)

    def to_dict(self) -> dict:
        return {
            "transition": self.transition.tolist(),
            "idle1": self.idle1,
            "idle2": self.idle2,
        }


def binary_xor_channel(flip: float, idle1: int | None = None, idle2: int | None = None) -> Channel:
    """Y = X1 xor X2 observed through a binary symmetric channel."""
    t = np.zeros((2, 2, 2))
    for a in range(2):
        for b in range(2):
            t[a, b, a ^ b] = 1.0 - flip
            t[a, b, 1 - (a ^ b)] = flip
    return Channel(t, idle1, idle2)


def pair_output_channel(a1: int, a2: int, idle1: int | None = None, idle2: int | None = None) -> Channel:
    """Noiseless channel whose output encodes the input pair bijectively."""
    t = np.zeros((a1, a2, a1 * a2))
    for a in range(a1):
        for b in range(a2):
            t[a, b, a * a2 + b] = 1.0
    return Channel(t, idle1, idle2)


def validate_channel(channel: Channel) -> ValidationResult:
    t = np.asarray(channel.transition)
    if t.ndim != 3 or min(t.shape) < 1:
        return ValidationResult(False, (f"transition must be a nonempty 3-d array, got shape {t.shape}",))
    problems = []
    first_row = None
    if not np.all(np.isfinite(t)):
        problems.append("transition has non-finite entries")
    neg = np.argwhere(t < 0)
    if len(neg):
        a, b, y = (int(v) for v in neg[0])
        problems.append(f"negative entry at (x1={a}, x2={b}, y={y})")
        first_row = (a, b)
    big = np.argwhere(t > 1)
    if len(big):
        a, b, y = (int(v) for v in big[0])
        problems.append(f"entry above 1 at (x1={a}, x2={b}, y={y})")
        first_row = first_row or (a, b)
    for a in range(t.shape[0]):
        for b in range(t.shape[1]):
            s = math.fsum(t[a, b].tolist())
            if abs(s - 1.0) > ROW_TOL:
                problems.append(f"row (x1={a}, x2={b}) sums to {s!r}, not 1")
                first_row = first_row or (a, b)
                break
        else:
            continue
        break
    for name, idle, size in (("idle1", channel.idle1, t.shape[0]), ("idle2", channel.idle2, t.shape[1])):
        if idle is not None and not (0 <= idle < size):
            problems.append(f"{name}={idle} is not a symbol of an alphabet of size {size}")
    return ValidationResult(not problems, tuple(problems), first_row)


def _as_symbols(seq, size: int, name: str) -> np.ndarray:
    s = np.asarray(seq, dtype=np.int64).reshape(-1)
    if s.size and (s.min() < 0 or s.max() >= size):
        raise ChannelError(f"{name} has a symbol outside 0..{size - 1}")
    return s


def _same_length(*seqs):
    lengths = {len(s) for s in seqs}
    if len(lengths) != 1:
        raise ChannelError(f"sequence lengths differ: {sorted(lengths)}")
    if 0 in lengths:
        raise ChannelError("sequences must be nonempty")


def sequence_log_likelihood(channel: Channel, x1_seq, x2_seq, y_seq) -> float:
    """log P(y | x1, x2) for whole sequences."""
    x1 = _as_symbols(x1_seq, channel.x1_alphabet_size, "x1")
    x2 = _as_symbols(x2_seq, channel.x2_alphabet_size, "x2")
    y = _as_symbols(y_seq, channel.y_alphabet_size, "y")
    _same_length(x1, x2, y)
    return float(channel.log_transition[x1, x2, y].sum())


def output_symbol_probs(channel: Channel, dist1: SymbolDistribution, dist2: SymbolDistribution) -> np.ndarray:
    """Per-symbol output marginal sum_{x1,x2} d1 d2 W, shape (B,)."""
    return np.array([conditioned_output_prob(channel, {}, (dist1, dist2), y)
                     for y in range(channel.y_alphabet_size)])


def given_x1_symbol_probs(channel: Channel, dist2: SymbolDistribution) -> np.ndarray:
    """P(y | x1) with user 2 averaged out, shape (A1, B)."""
    return np.array([[conditioned_output_prob(channel, {1: a}, (None, dist2), y)
                      for y in range(channel.y_alphabet_size)]
                     for a in range(channel.x1_alphabet_size)])


def given_x2_symbol_probs(channel: Channel, dist1: SymbolDistribution) -> np.ndarray:
    """P(y | x2) with user 1 averaged out, shape (A2, B)."""
    return np.array([[conditioned_output_prob(channel, {2: b}, (dist1, None), y)
                      for y in range(channel.y_alphabet_size)]
                     for b in range(channel.x2_alphabet_size)])


def marginal_output_log_prob(channel: Channel, dist1: SymbolDistribution, dist2: SymbolDistribution, y_seq) -> float:
    y = _as_symbols(y_seq, channel.y_alphabet_size, "y")
    if y.size == 0:
        raise ChannelError("y sequence must be nonempty")
    return float(safe_log(output_symbol_probs(channel, dist1, dist2))[y].sum())


def conditional_given_user_log_prob(channel: Channel, fixed_user: int, fixed_seq, other_dist: SymbolDistribution, y_seq) -> float:
    """log P(y | x_fixed) with the other user's symbols drawn i.i.d. from other_dist."""
    y = _as_symbols(y_seq, channel.y_alphabet_size, "y")
    if fixed_user == 1:
        x = _as_symbols(fixed_seq, channel.x1_alphabet_size, "x1")
        table = given_x1_symbol_probs(channel, other_dist)
    elif fixed_user == 2:
        x = _as_symbols(fixed_seq, channel.x2_alphabet_size, "x2")
        table = given_x2_symbol_probs(channel, other_dist)
    else:
        raise ChannelError(f"fixed_user must be 1 or 2, got {fixed_user}")
    _same_length(x, y)
    return float(safe_log(table)[x, y].sum())


def _sorted_prod(*factors) -> float:
    # fixed multiplication order so that relabelled inputs give bit-identical results
    return math.prod(sorted(factors))


def conditioned_output_prob(channel: Channel, pinned: dict, dists: tuple, y: int) -> float:
    """P(y | pinned symbols) with unpinned users drawn from ``dists``.

    ``pinned`` maps user id to a symbol; ``dists`` holds a SymbolDistribution
    (or None when pinned) per user.
    """
    t = channel.transition
    r1 = [pinned[1]] if 1 in pinned else range(t.shape[0])
    r2 = [pinned[2]] if 2 in pinned else range(t.shape[1])
    terms = []
    for a in r1:
        pa = 1.0 if 1 in pinned else dists[0].probs[a]
        for b in r2:
            pb = 1.0 if 2 in pinned else dists[1].probs[b]
            terms.append(_sorted_prod(pa, pb, t[a, b, y]))
    return math.fsum(terms)


@dataclass(frozen=True)
class Conditioning:
    """Which users are pinned in P(y | x_pinned); the rest follow ``dists``."""

    pinned: frozenset = frozenset()
    dists: tuple = (None, None)


def mc_expectation_factor(channel: Channel, actual_dists: tuple, numerator: Conditioning,
                          denominator_pinned=frozenset({1, 2})) -> float:
    """Single-symbol E[num(y | x_S) / P(y | x_pinned)] under the actual inputs.

    The denominator marginalizes unpinned users under ``actual_dists``. Only
    (x, y) with positive probability contribute. For i.i.d. inputs over a
    memoryless channel the N-symbol expectation is this value to the N-th power.
    """
    d1, d2 = actual_dists
    t = channel.transition
    den_pinned = frozenset(denominator_pinned)
    terms = []
    for a in range(t.shape[0]):
        if d1.probs[a] == 0:
            continue
        for b in range(t.shape[1]):
            if d2.probs[b] == 0:
                continue
            for y in range(t.shape[2]):
                if t[a, b, y] == 0:
                    continue
                xs = {1: a, 2: b}
                den = conditioned_output_prob(channel, {u: xs[u] for u in den_pinned}, (d1, d2), y)
                num = conditioned_output_prob(channel, {u: xs[u] for u in numerator.pinned}, numerator.dists, y)
                if num == 0:
                    continue
                terms.append(_sorted_prod(d1.probs[a], d2.probs[b], t[a, b, y]) * (num / den))
    return math.fsum(terms)
