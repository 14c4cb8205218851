import itertools
import math

import numpy as np
import pytest

import oracles
from conftest import STD_LABELS, async_system, ensemble, skewed_channel, sync_system, xor_study
from gepbound.async_core import (AsyncLayout, AsyncSystem, async_input_sequences, async_weighted_likelihood,
                                 bound_gepD, combine_decisions, decode_dD, decode_dD_batch, index_set,
                                 partial_loglik, subset_threshold_objective, subsets)
from gepbound.channel import Channel, binary_xor_channel, pair_output_channel, sequence_log_likelihood
from gepbound.codes import ConfigError, keyed_generator, random_books
from gepbound.regions import SubDecoderRegions, slice_matching
from gepbound.sync_bounds import bound_gep1, bound_gep12
from gepbound.sync_decoder import decode_d12_batch, decode_d1_batch

LN2 = math.log(2)


def idle_skewed():
    ch = skewed_channel()
    return Channel(ch.transition, 0, 0)


def sparse_idle():
    t = np.zeros((2, 2, 3))
    t[0, 0] = [0.9, 0.1, 0.0]
    t[0, 1] = [0.0, 0.6, 0.4]
    t[1, 0] = [0.2, 0.0, 0.8]
    t[1, 1] = [0.5, 0.5, 0.0]
    return Channel(t, 0, 0)


def random_regions(rng, space):
    labels = rng.choice(["operation", "margin", "collision"], size=len(space), p=[0.5, 0.25, 0.25])
    labels[0] = "operation"
    op = {g for g, lab in zip(space, labels) if lab == "operation"}
    mar = {g for g, lab in zip(space, labels) if lab == "margin"}
    return SubDecoderRegions(op, mar, set(space) - op - mar)


def async_books(system, rng, batch=None):
    out = {}
    for ij in system.layout.packets:
        for k, code in enumerate(system.ensemble(ij[0]).codes):
            m = system.messages(ij, k)
            w = rng.choice(len(code.input_dist.probs), size=(m, system.n), p=code.input_dist.probs)
            out[ij + (k,)] = w if batch is None else w[None]
    return out


def test_layout_examples():
    lay = AsyncLayout(4, 2, 2)
    assert lay.total_len == 10
    assert lay.packets == [(1, 1), (1, 2), (2, 1), (2, 2)]
    assert lay.start((2, 1)) == 2 and lay.start((1, 2)) == 4 and lay.start((2, 2)) == 6
    assert lay.active(2, 1) is None and lay.active(1, 9) is None
    assert lay.active(2, 9) == (2, 2) and lay.active(1, 3) == (1, 1)
    assert lay.segments()[0] == (0, 2, (1, 1), None)
    assert sum(s1 - s0 for s0, s1, _, _ in lay.segments()) == 10
    with pytest.raises(ConfigError):
        AsyncLayout(4, 2, 5)
    assert index_set([[2, 1], (1, 2)], lay) == ((1, 2), (2, 1))
    with pytest.raises(ConfigError):
        index_set([(1, 3)], lay)


def test_offset_needs_idle_symbols():
    with pytest.raises(ConfigError):
        async_system(skewed_channel(), [([0.5, 0.5], 0.5)], [([0.5, 0.5], 0.5)], 2, 1, 1)


def test_no_offset_pair_output_frames_decode():
    s = async_system(pair_output_channel(2, 2), [([0.5, 0.5], 0.5)], [([0.5, 0.5], 0.5)], 4, 2, 0)
    regions = SubDecoderRegions(set(s.space), set(), set())
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(60):
        books = async_books(s, rng)
        if any(len({tuple(r) for r in w}) < 4 for w in books.values()):
            continue
        msgs = {ij: int(rng.integers(4)) for ij in s.layout.packets}
        x1, x2 = async_input_sequences(s, books, msgs, (0, 0, 0, 0))
        out = decode_dD(s, s.layout.packets, regions, books, 2 * x1 + x2)
        assert out.decoded and {ij: v[0] for ij, v in out.detail["packets"].items()} == msgs
        hits += 1
    assert hits > 5


def test_empty_operation_region_is_collision():
    s = async_system(binary_xor_channel(0.1, 0, 0), [([0.5, 0.5], 0.5)], [([0.5, 0.5], 0.5)], 2, 2, 1)
    books = async_books(s, np.random.default_rng(1))
    regions = SubDecoderRegions(set(), set(), set(s.space))
    assert not decode_dD(s, [(1, 1)], regions, books, np.zeros(5, int)).decoded


def _random_async(rng, channel, n, l, t2):
    spec = lambda: [(list(rng.dirichlet([1, 1])), 0.5 if n % 2 == 0 else 1.0) for _ in range(2)]
    return AsyncSystem(channel, *[ensemble(u, spec()) for u in (1, 2)],
                       AsyncLayout(n, l, t2))


@pytest.mark.parametrize("n,l,t2", [(2, 1, 1), (1, 2, 1), (2, 1, 2)])
def test_weighted_likelihood_matches_enumeration(n, l, t2):
    rng = np.random.default_rng(n * 10 + t2)
    s = _random_async(rng, sparse_idle(), n, l, t2)
    books = async_books(s, rng)
    pk = s.layout.packets
    for _ in range(15):
        gv = s.space[int(rng.integers(len(s.space)))]
        msgs = {ij: int(rng.integers(s.messages(ij, s.code_of(gv, ij)))) for ij in pk}
        x1, x2 = async_input_sequences(s, books, msgs, gv)
        y = oracles.output_sample(rng, s.channel.transition, x1, x2)
        words = {ij: books[ij + (s.code_of(gv, ij),)][msgs[ij]] for ij in pk}
        # D = U is the full channel likelihood
        full = async_weighted_likelihood(s, gv, pk, words, y)
        want = sequence_log_likelihood(s.channel, x1, x2, y) + s.log_prior(gv) - s.bits_of(gv, pk) * LN2
        assert full == pytest.approx(want, abs=1e-9)
        for r in range(len(pk) + 1):
            for dset in itertools.combinations(pk, r):
                got = async_weighted_likelihood(s, gv, dset, {ij: words[ij] for ij in dset}, y)
                p = oracles.async_prob(s, gv, {ij: tuple(words[ij]) for ij in dset}, tuple(y))
                assert got == pytest.approx(oracles.log(p) + s.log_prior(gv) - s.bits_of(gv, dset) * LN2,
                                            abs=1e-9)


def test_empty_subset_gives_output_marginal():
    rng = np.random.default_rng(2)
    s = _random_async(rng, idle_skewed(), 2, 1, 1)
    ys = np.array(list(itertools.product(range(2), repeat=3)))
    for gv in s.space:
        ll = partial_loglik(s, gv, (), (), {}, ys).reshape(-1)
        assert math.fsum(np.exp(ll)) == pytest.approx(1.0, abs=1e-12)
        for y, v in zip(ys, ll):
            assert v == pytest.approx(oracles.log(oracles.async_prob(s, gv, {}, tuple(y))), abs=1e-12)


def _mirror(sync):
    """Async system with L=1 and no offset carrying the same codes and priors."""
    return AsyncSystem(sync.channel, sync.ensemble1, sync.ensemble2, AsyncLayout(sync.n, 1, 0),
                       {g: sync.prior(g) for g in sync.space})


def _paired_books(rng, sync, batch):
    books, books_a = {}, {}
    for u in (1, 2):
        for k, code in enumerate(sync.ensemble(u).codes):
            w = random_books(rng, code, sync.n, batch)
            books[(u, k)] = w
            books_a[(u, 1, k)] = w
    return books, books_a


@pytest.mark.parametrize("flip", [0.0, 0.1])
def test_single_packet_decoder_reduces_to_sync(flip):
    s = xor_study(flip, 4)
    a = _mirror(s)
    rng = keyed_generator((31,), int(flip * 10))
    books, books_a = _paired_books(rng, s, 1000)
    g = rng.integers(0, 2, size=(1000, 2))
    y = np.empty((1000, 4), np.int64)
    for b in range(1000):
        x1 = books[(1, g[b, 0])][b, rng.integers(s.messages(1, g[b, 0]))]
        x2 = books[(2, g[b, 1])][b, rng.integers(s.messages(2, g[b, 1]))]
        y[b] = oracles.output_sample(rng, s.channel.transition, x1, x2)
    d = decode_d12_batch(s, s.d12_regions, books, y)
    da = decode_dD_batch(a, [(1, 1), (2, 1)], s.d12_regions, books_a, y)
    assert np.array_equal(d.decoded, da.decoded) and np.array_equal(d.tie, da.tie)
    assert np.array_equal(d.choice, da.choice) and np.array_equal(d.cand, da.cand)
    d = decode_d1_batch(s, s.d1_regions, books, y)
    da = decode_dD_batch(a, [(1, 1)], s.d1_regions, books_a, y)
    assert np.array_equal(d.decoded, da.decoded) and np.array_equal(d.tie, da.tie)
    assert np.array_equal(d.choice, da.choice)


SYNC_FAMILY = {((), "B_iS"): "B_i{}", (((1, 1),), "B_iS"): "B_i{1}", (((2, 1),), "B_iS"): "B_i{2}",
               ((), "B_mcS"): "B_mc{}", (((1, 1),), "B_mcS"): "B_mc{1}", (((2, 1),), "B_mcS"): "B_mc{2}"}
SYNC_FAMILY_D1 = {((), "B_iS"): "B_i{}^D1", ((), "B_mcS"): "B_mc{}^D1", (((1, 1),), "B_mcD"): "B_mc{1}^D1"}


@pytest.mark.parametrize("channel", [binary_xor_channel(0.1), skewed_channel()], ids=["xor", "skewed"])
def test_single_packet_bound_reduces_term_by_term(channel):
    s = sync_system(channel, [([0.5, 0.5], 0.5), ([0.8, 0.2], 0.5)], [([0.6, 0.4], 0.5), ([0.5, 0.5], 0.0)],
                    2, STD_LABELS, [(0, 0)], [(1, 0)])
    a = _mirror(s)
    for dset, regions, ref, names in (([(1, 1), (2, 1)], s.d12_regions, bound_gep12(s), SYNC_FAMILY),
                                      ([(1, 1)], s.d1_regions, bound_gep1(s), SYNC_FAMILY_D1)):
        rep = bound_gepD(a, dset, regions)
        want = {(t.family, t.g, t.g_tilde): t for t in ref.terms}
        assert len(rep.terms) == len(want)
        for t in rep.terms:
            r = want[(names[(t.subset, t.family)], t.g, t.g_tilde)]
            assert t.value == pytest.approx(r.value, abs=1e-9) and t.weight == r.weight
        assert rep.total == pytest.approx(ref.total, abs=1e-9)


@pytest.mark.parametrize("n,l,t2", [(2, 1, 0), (2, 1, 1), (2, 1, 2), (1, 2, 0), (1, 2, 1)])
def test_bound_terms_match_enumeration(n, l, t2):
    rng = np.random.default_rng(100 + 10 * l + t2)
    s = _random_async(rng, sparse_idle(), n, l, t2)
    regions = random_regions(rng, s.space)
    lay = s.layout
    for dset in ([(1, 1)], [(1, 1), (2, 1)]):
        rep = bound_gepD(s, dset, regions)
        dset = index_set(dset, lay)
        for t in rep.terms:
            if t.family == "B_iS":
                fixed = {lay.index(ij): s.code_of(t.g, ij) for ij in t.subset}
                cap = 1.0 / len(slice_matching(regions.operation, fixed))
                want = oracles.async_rcu_term(s, dset, t.subset, t.g, t.g_tilde, cap)
            else:
                rest = [ij for ij in dset if ij not in t.subset]
                bits = 0 if t.family == "B_mcD" else s.bits_of(t.g, rest)
                e = oracles.async_mc_expectation(s, dset, t.subset, t.g, t.g_tilde)
                want = min(s.prior(t.g), s.prior(t.g_tilde) * 2.0 ** bits * e)
            assert t.value == pytest.approx(want, abs=1e-9), (t.family, t.subset, t.g, t.g_tilde)


def _shift_system(t2):
    t = np.zeros((2, 2, 4))
    for a, b in itertools.product(range(2), repeat=2):
        t[a, b, 2 * a + b] = 1.0
    return async_system(Channel(t, 0, 0), [([0.5, 0.5], 0.5), ([0.7, 0.3], 0.5)],
                        [([0.6, 0.4], 0.5)], 2, 2, t2)


def test_deterministic_channel_bound_is_offset_invariant():
    """With a noiseless pair-output channel the packets never interfere, whatever the offset."""
    reps = []
    for t2 in (0, 1, 2):
        s = _shift_system(t2)
        regions = SubDecoderRegions({g for g in s.space if g[1] == 0}, set(), {g for g in s.space if g[1] == 1})
        reps.append(bound_gepD(s, [(1, 1), (2, 1)], regions))
    for r in reps[1:]:
        assert r.total == pytest.approx(reps[0].total, abs=1e-12)
        assert [t.value for t in r.terms] == pytest.approx([t.value for t in reps[0].terms], abs=1e-12)


def test_subset_threshold_is_optimal():
    s = _random_async(np.random.default_rng(8), idle_skewed(), 2, 1, 1)
    shifts = np.linspace(-6, 6, 21)
    dset = ((1, 1), (2, 1))
    strict = False
    for sset in subsets(dset):
        g = (0, 0)
        for gt in s.space:
            if gt == g or any(s.code_of(gt, ij) != s.code_of(g, ij) for ij in sset):
                continue
            vals = subset_threshold_objective(s, dset, sset, g, gt, shifts)
            assert np.all(vals[10] <= vals + 1e-12)
            strict |= bool(np.any(vals[10] < vals - 1e-9))
    assert strict


def test_combine_decisions_rules():
    dec = [np.array([True, True, False, False, True]), np.array([True, False, True, False, True])]
    out = [np.array([[1], [2], [3], [4], [5]]), np.array([[1], [9], [7], [8], [6]])]
    d, o = combine_decisions(list(zip(dec, out)))
    assert d.tolist() == [True, True, True, False, False]
    assert o[:, 0].tolist() == [1, 2, 7, -1, -1]
    d, o = combine_decisions(list(zip(dec, out)), "first")
    assert d.tolist() == [True, True, True, False, True] and o[4, 0] == 5
    with pytest.raises(ConfigError):
        combine_decisions(list(zip(dec, out)), "majority")


def test_input_sequences_layout():
    s = async_system(binary_xor_channel(0.0, 0, 1), [([0.5, 0.5], 0.5)], [([0.5, 0.5], 0.5)], 4, 2, 2)
    books = {(1, 1, 0): np.ones((4, 4), int), (1, 2, 0): np.ones((4, 4), int),
             (2, 1, 0): np.zeros((4, 4), int), (2, 2, 0): np.zeros((4, 4), int)}
    x1, x2 = async_input_sequences(s, books, {ij: 0 for ij in s.layout.packets}, (0, 0, 0, 0))
    assert x1.tolist() == [1] * 8 + [0, 0]
    assert x2.tolist() == [1, 1] + [0] * 8
    s1 = async_system(binary_xor_channel(0.0, 0, 1), [([0.5, 0.5], 0.5)], [([0.5, 0.5], 0.5)], 2, 1, 2)
    b = {(1, 1, 0): np.array([[1, 1], [0, 1]]), (2, 1, 0): np.array([[0, 0], [1, 0]])}
    x1, x2 = async_input_sequences(s1, b, {(1, 1): 1, (2, 1): 1}, (0, 0))
    assert x1.tolist() == [0, 1, 0, 0] and x2.tolist() == [1, 1, 1, 0]


def test_single_packet_user1_likelihood_matches_sync():
    from gepbound.sync_decoder import weighted_likelihood_d1
    s = xor_study(0.1, 4)
    a = _mirror(s)
    rng = np.random.default_rng(6)
    books = oracles.random_books(rng, s)
    for _ in range(20):
        g = (int(rng.integers(2)), int(rng.integers(2)))
        w1 = int(rng.integers(s.messages(1, g[0])))
        y = rng.integers(0, 2, 4)
        want = weighted_likelihood_d1(s, books, (w1, g), y)
        got = async_weighted_likelihood(a, g, [(1, 1)], {(1, 1): books[(1, g[0])][w1]}, y)
        assert got == pytest.approx(want, abs=1e-12)


def test_likelihoods_follow_an_offset_shift():
    """On a noiseless pair-output channel, moving user 2 by one position moves y with it."""
    rng = np.random.default_rng(12)
    t = np.zeros((2, 2, 4))
    for x1, x2 in itertools.product(range(2), repeat=2):
        t[x1, x2, 2 * x1 + x2] = 1.0
    ch = Channel(t, 0, 0)
    specs1, specs2 = [([0.5, 0.5], 0.5), ([0.3, 0.7], 0.5)], [([0.6, 0.4], 0.5)]
    systems = [async_system(ch, specs1, specs2, 2, 2, t2) for t2 in (0, 1)]
    books = async_books(systems[0], rng)
    for gv in systems[0].space:
        msgs = {ij: int(rng.integers(2)) for ij in systems[0].layout.packets}
        ys = []
        for s in systems:
            x1, x2 = async_input_sequences(s, books, msgs, gv)
            ys.append(2 * x1 + x2)
        for dset in subsets(tuple(systems[0].layout.packets)):
            for words in itertools.product(*(range(2) for _ in dset)):
                dw = {ij: books[ij + (gv[systems[0].layout.index(ij)],)][w] for ij, w in zip(dset, words)}
                a, b = (async_weighted_likelihood(s, gv, dset, dw, y) for s, y in zip(systems, ys))
                assert a == b or a == pytest.approx(b, abs=1e-12)
