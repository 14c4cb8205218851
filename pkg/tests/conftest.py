import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gepbound.async_core import AsyncLayout, AsyncSystem
from gepbound.channel import Channel, SymbolDistribution, binary_xor_channel, pair_output_channel
from gepbound.codes import Code, CodeEnsemble
from gepbound.regions import RegionPartition
from gepbound.system import SyncSystem

SD = SymbolDistribution


def ensemble(user, specs):
    """specs: list of (probs, rate)."""
    return CodeEnsemble(user, [Code(SD(np.array(p, dtype=float)), r) for p, r in specs])


def sync_system(channel, specs1, specs2, n, labels, r12, r1, priors=None):
    part = RegionPartition.from_labels(labels, priors)
    return SyncSystem(channel, ensemble(1, specs1), ensemble(2, specs2), n, part, r12, r1)


STD_LABELS = {(0, 0): "operation", (1, 0): "operation", (0, 1): "margin", (1, 1): "collision"}


def xor_study(flip=0.1, n=4):
    """Two codes per user, one vector in each region, as in the shipped XOR configs."""
    return sync_system(binary_xor_channel(flip),
                       [([0.5, 0.5], 0.25), ([0.5, 0.5], 0.5)],
                       [([0.9, 0.1], 0.25), ([0.5, 0.5], 0.5)],
                       n, STD_LABELS, [(0, 0)], [(1, 0)])


def tiny_system(flip=0.1, n=2, channel=None):
    """Binary n=2 instance with two codes per user and nondegenerate decoding."""
    ch = channel if channel is not None else binary_xor_channel(flip)
    return sync_system(ch,
                       [([0.5, 0.5], 0.5), ([0.8, 0.2], 0.5)],
                       [([0.5, 0.5], 0.0), ([0.7, 0.3], 0.0)],
                       n, STD_LABELS, [(0, 0)], [(1, 0)])


def skewed_channel():
    """A binary two-user channel without XOR symmetry."""
    t = np.array([[[0.85, 0.15], [0.3, 0.7]],
                  [[0.25, 0.75], [0.6, 0.4]]])
    return Channel(t)


def ternary_channel():
    t = np.zeros((2, 2, 3))
    t[0, 0] = [0.8, 0.1, 0.1]
    t[0, 1] = [0.1, 0.7, 0.2]
    t[1, 0] = [0.2, 0.2, 0.6]
    t[1, 1] = [0.3, 0.3, 0.4]
    return Channel(t)


def async_system(channel, specs1, specs2, n, l, t2, priors=None):
    return AsyncSystem(channel, ensemble(1, specs1), ensemble(2, specs2), AsyncLayout(n, l, t2), priors)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
