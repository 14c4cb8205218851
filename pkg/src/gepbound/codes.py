"""Code ensembles and reproducible random codebooks.

Codebooks are drawn with a counter-based generator (Philox) keyed by the seed
tuple, the user and the code index. Word ``w`` position ``n`` consumes the
uniform at counter ``w * N + n`` of that stream, so a codebook never depends
on what else was generated before it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelError, SymbolDistribution

RATE_TOL = 1e-9


class ConfigError(ValueError):
    """Raised for inconsistent code or experiment configuration."""


@dataclass(frozen=True)
class Code:
    input_dist: SymbolDistribution
    rate: float
    is_idle: bool = False
    name: str = ""

    def __post_init__(self):
        if self.rate < 0:
            raise ConfigError(f"code {self.label}: rate must be nonnegative")
        if self.is_idle and (self.rate != 0 or not self.input_dist.is_point_mass):
            raise ConfigError(f"code {self.label}: an idle code needs rate 0 and a point-mass input")

    @classmethod
    def idle(cls, symbol: int, size: int, name: str = "idle") -> "Code":
        return cls(SymbolDistribution.point_mass(symbol, size), 0.0, True, name)

    @property
    def label(self) -> str:
        return self.name or f"rate={self.rate}"

    @property
    def idle_symbol(self) -> int | None:
        if not self.is_idle:
            return None
        return int(np.flatnonzero(self.input_dist.probs)[0])


@dataclass(frozen=True)
class CodeEnsemble:
    user: int
    codes: tuple

    def __post_init__(self):
        if self.user not in (1, 2):
            raise ConfigError(f"user must be 1 or 2, got {self.user}")
        object.__setattr__(self, "codes", tuple(self.codes))
        if not self.codes:
            raise ConfigError(f"ensemble of user {self.user} is empty")
        sizes = {c.input_dist.size for c in self.codes}
        if len(sizes) != 1:
            raise ConfigError(f"ensemble of user {self.user} mixes alphabet sizes {sorted(sizes)}")

    def __len__(self):
        return len(self.codes)

    def __getitem__(self, k) -> Code:
        return self.codes[k]

    @property
    def alphabet_size(self) -> int:
        return self.codes[0].input_dist.size

    def check_idle(self, idle_symbol):
        for k, c in enumerate(self.codes):
            if c.is_idle and c.idle_symbol != idle_symbol:
                raise ConfigError(f"user {self.user} code {k} idles on symbol {c.idle_symbol}, "
                                  f"channel idle symbol is {idle_symbol}")


def rate_exponent(code: Code, n: int) -> int:
    e = n * code.rate
    k = int(round(e))
    if abs(e - k) > RATE_TOL or k < 0:
        raise ConfigError(f"code {code.label}: n*rate = {e:g} is not a nonnegative integer for n={n}")
    return k


def message_count(code: Code, n: int) -> int:
    """Number of codewords 2^(n * rate)."""
    return 2 ** rate_exponent(code, n)


def keyed_generator(seed, *key) -> np.random.Generator:
    """Philox generator for the stream identified by (seed, key)."""
    seed = tuple(int(s) for s in np.atleast_1d(seed))
    if any(s < 0 for s in seed) or any(int(k) < 0 for k in key):
        raise ConfigError("seed tuples and stream keys must be nonnegative integers")
    ss = np.random.SeedSequence(entropy=list(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def draw_symbols(rng: np.random.Generator, probs, shape) -> np.ndarray:
    """Inverse-CDF draws; zero-probability symbols are never produced."""
    cdf = np.cumsum(np.asarray(probs, dtype=float))
    u = rng.random(shape)
    out = np.searchsorted(cdf, u * cdf[-1], side="right")
    return np.minimum(out, len(cdf) - 1).astype(np.int64)


@dataclass(frozen=True, eq=False)
class Codebook:
    code_index: int
    block_length: int
    words: np.ndarray
    seed_record: tuple
    stream: tuple = ()

    def __post_init__(self):
        w = np.array(self.words, dtype=np.int64)
        w.setflags(write=False)
        object.__setattr__(self, "words", w)

    @property
    def size(self) -> int:
        return self.words.shape[0]

    def __eq__(self, other):
        return (isinstance(other, Codebook) and self.code_index == other.code_index
                and self.block_length == other.block_length and self.seed_record == other.seed_record
                and self.stream == other.stream and np.array_equal(self.words, other.words))

    __hash__ = None


def generate_codebook(ensemble: CodeEnsemble, code_index: int, n: int, seed, stream: tuple = ()) -> Codebook:
    """Random codebook with i.i.d. symbols from the code's input distribution.

    ``stream`` adds extra key coordinates (a packet index, for instance) after
    (user, code_index).
    """
    if not 0 <= code_index < len(ensemble):
        raise ConfigError(f"user {ensemble.user} has no code {code_index}")
    code = ensemble[code_index]
    m = message_count(code, n)
    seed = tuple(int(s) for s in np.atleast_1d(seed))
    rng = keyed_generator(seed, ensemble.user, code_index, *stream)
    words = draw_symbols(rng, code.input_dist.probs, (m, n))
    return Codebook(code_index, n, words, seed, tuple(int(k) for k in stream))


def random_books(rng: np.random.Generator, code: Code, n: int, batch: int) -> np.ndarray:
    """A batch of independent codebooks for one code, shape (batch, M, n)."""
    return draw_symbols(rng, code.input_dist.probs, (batch, message_count(code, n), n))


def check_symbols(words, size: int, what: str):
    w = np.asarray(words)
    if w.size and (w.min() < 0 or w.max() >= size):
        raise ChannelError(f"{what} uses a symbol outside 0..{size - 1}")
