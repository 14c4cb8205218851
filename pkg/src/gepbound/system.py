"""The synchronous two-user system: channel, code ensembles, blocklength, regions."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .channel import (Channel, SymbolDistribution, given_x1_symbol_probs, given_x2_symbol_probs,
                      output_symbol_probs, safe_log)
from .codes import CodeEnsemble, ConfigError, message_count, rate_exponent
from .regions import RegionPartition, coding_space, derive_d1_regions, derive_d12_regions

LN2 = math.log(2.0)


@dataclass(frozen=True, eq=False)
class SyncSystem:
    channel: Channel
    ensemble1: CodeEnsemble
    ensemble2: CodeEnsemble
    n: int
    partition: RegionPartition
    r12: frozenset
    r1: frozenset

    def __post_init__(self):
        self.channel.check()
        if self.n < 1:
            raise ConfigError("blocklength n must be positive")
        if self.ensemble1.user != 1 or self.ensemble2.user != 2:
            raise ConfigError("ensembles must belong to users 1 and 2 in that order")
        if self.ensemble1.alphabet_size != self.channel.x1_alphabet_size:
            raise ConfigError("user-1 codes do not match the channel's x1 alphabet")
        if self.ensemble2.alphabet_size != self.channel.x2_alphabet_size:
            raise ConfigError("user-2 codes do not match the channel's x2 alphabet")
        self.ensemble1.check_idle(self.channel.idle1)
        self.ensemble2.check_idle(self.channel.idle2)
        for ens in (self.ensemble1, self.ensemble2):
            for code in ens.codes:
                rate_exponent(code, self.n)
        object.__setattr__(self, "r12", frozenset(tuple(g) for g in self.r12))
        object.__setattr__(self, "r1", frozenset(tuple(g) for g in self.r1))
        self.partition.check_cover(self.space)
        # validates the sub-decoder choice
        self.d12_regions
        self.d1_regions

    @property
    def space(self) -> list[tuple]:
        return coding_space(len(self.ensemble1), len(self.ensemble2))

    @cached_property
    def d12_regions(self):
        return derive_d12_regions(self.partition, self.r12)

    @cached_property
    def d1_regions(self):
        return derive_d1_regions(self.partition, self.r12, self.r1)

    def ensemble(self, user: int) -> CodeEnsemble:
        return self.ensemble1 if user == 1 else self.ensemble2

    def dist(self, user: int, k: int) -> SymbolDistribution:
        return self.ensemble(user)[k].input_dist

    def rate(self, user: int, k: int) -> float:
        return self.ensemble(user)[k].rate

    def bits(self, user: int, k: int) -> int:
        """n * rate as an exact integer."""
        return rate_exponent(self.ensemble(user)[k], self.n)

    def messages(self, user: int, k: int) -> int:
        return message_count(self.ensemble(user)[k], self.n)

    def prior(self, g) -> float:
        return self.partition.prior(g)

    def log_prior(self, g) -> float:
        return float(safe_log(self.prior(g)))

    def with_partition(self, r12, r1) -> "SyncSystem":
        return SyncSystem(self.channel, self.ensemble1, self.ensemble2, self.n, self.partition, r12, r1)

    def swapped(self) -> "SyncSystem":
        """Exchange the roles of the two users."""
        e1 = CodeEnsemble(1, self.ensemble2.codes)
        e2 = CodeEnsemble(2, self.ensemble1.codes)
        return SyncSystem(self.channel.swapped(), e1, e2, self.n, self.partition.swapped(),
                          [g[::-1] for g in self.r12], [g[::-1] for g in self.r1])

    @cached_property
    def tables(self) -> "SymbolTables":
        return SymbolTables(self)


class SymbolTables:
    """Cached per-symbol log tables used by the decoders."""

    def __init__(self, system: SyncSystem):
        self.system = system
        self._marg = {}
        self._c1 = {}
        self._c2 = {}

    def marginal(self, g) -> np.ndarray:
        """log P_g(y) per symbol, shape (B,)."""
        g = tuple(g)
        if g not in self._marg:
            s = self.system
            self._marg[g] = safe_log(output_symbol_probs(s.channel, s.dist(1, g[0]), s.dist(2, g[1])))
        return self._marg[g]

    def given_x1(self, g2: int) -> np.ndarray:
        """log P(y | x1) with user 2 drawn from code g2, shape (A1, B)."""
        if g2 not in self._c1:
            s = self.system
            self._c1[g2] = safe_log(given_x1_symbol_probs(s.channel, s.dist(2, g2)))
        return self._c1[g2]

    def given_x2(self, g1: int) -> np.ndarray:
        """log P(y | x2) with user 1 drawn from code g1, shape (A2, B)."""
        if g1 not in self._c2:
            s = self.system
            self._c2[g1] = safe_log(given_x2_symbol_probs(s.channel, s.dist(1, g1)))
        return self._c2[g1]
