"""Brute-force reference implementations used to check the library.

Everything here enumerates whole sequences with plain Python loops and
``math.log``; nothing goes through the per-symbol factorization, the
composition-state engine or the vectorized decoders under test.
"""
import itertools
import math

import numpy as np

LN2 = math.log(2.0)
TOL = 1e-9


def log(p):
    return math.log(p) if p > 0 else -math.inf


def sequences(probs, n):
    """(sequence, probability) for every sequence with positive probability."""
    out = []
    for s in itertools.product(range(len(probs)), repeat=n):
        p = math.prod(probs[a] for a in s)
        if p > 0:
            out.append((s, p))
    return out


def w_seq(t, x1, x2, y):
    return math.prod(t[a, b, c] for a, b, c in zip(x1, x2, y))


def all_outputs(t, n):
    return list(itertools.product(range(t.shape[2]), repeat=n))


# ---- synchronous quantities -----------------------------------------------------------

def p_y_given_x1(t, d2, x1, y):
    """P(y | x1) with user 2 drawn i.i.d. from d2, by summing over x2 sequences."""
    return math.fsum(p * w_seq(t, x1, x2, y) for x2, p in sequences(d2, len(y)))


def p_y_given_x2(t, d1, x2, y):
    return math.fsum(p * w_seq(t, x1, x2, y) for x1, p in sequences(d1, len(y)))


def p_y(t, d1, d2, y):
    n = len(y)
    return math.fsum(p1 * p2 * w_seq(t, x1, x2, y) for x1, p1 in sequences(d1, n) for x2, p2 in sequences(d2, n))


def sync_rcu_term(system, family, g, gt, cap):
    """P(g) E[min{cap, K P[rival score >= true score | outer]}] by enumeration."""
    t = system.channel.transition
    n = system.n
    d1, d2 = system.dist(1, g[0]).probs, system.dist(2, g[1]).probs
    e1, e2 = system.dist(1, gt[0]).probs, system.dist(2, gt[1]).probs
    b = lambda u, k: system.bits(u, k)
    ys = all_outputs(t, n)
    acc = []
    if family == "B_i{}^D1":
        c_true = log(system.prior(g)) - b(1, g[0]) * LN2
        c_riv = log(system.prior(gt)) - b(1, gt[0]) * LN2
        k = 2.0 ** b(1, gt[0])
        riv = sequences(e1, n)
        for x1, p1 in sequences(d1, n):
            for y in ys:
                py = p_y_given_x1(t, d2, x1, y)
                if py == 0:
                    continue
                s_true = log(py) + c_true
                q = math.fsum(pr for xr, pr in riv
                              if log(p_y_given_x1(t, e2, xr, y)) + c_riv >= s_true - TOL)
                acc.append(p1 * py * min(cap, k * q))
        return system.prior(g) * math.fsum(acc)
    c_true = log(system.prior(g)) - (b(1, g[0]) + b(2, g[1])) * LN2
    c_riv = log(system.prior(gt)) - (b(1, gt[0]) + b(2, gt[1])) * LN2
    case = family[len("B_i"):]
    k = 2.0 ** {"{}": b(1, gt[0]) + b(2, gt[1]), "{1}": b(2, gt[1]), "{2}": b(1, gt[0])}[case]
    for x1, p1 in sequences(d1, n):
        for x2, p2 in sequences(d2, n):
            for y in ys:
                py = w_seq(t, x1, x2, y)
                if py == 0:
                    continue
                s_true = log(py) + c_true
                if case == "{}":
                    rivals = [((a, c), pa * pc) for a, pa in sequences(e1, n) for c, pc in sequences(e2, n)]
                elif case == "{1}":
                    rivals = [((x1, c), pc) for c, pc in sequences(e2, n)]
                else:
                    rivals = [((a, x2), pa) for a, pa in sequences(e1, n)]
                q = math.fsum(pr for (a, c), pr in rivals if log(w_seq(t, a, c, y)) + c_riv >= s_true - TOL)
                acc.append(p1 * p2 * py * min(cap, k * q))
    return system.prior(g) * math.fsum(acc)


def sync_mc_expectation(system, family, g, gt):
    """E[numerator / denominator] over whole sequences (no per-symbol factoring)."""
    t = system.channel.transition
    n = system.n
    d1, d2 = system.dist(1, g[0]).probs, system.dist(2, g[1]).probs
    e1, e2 = system.dist(1, gt[0]).probs, system.dist(2, gt[1]).probs
    ys = all_outputs(t, n)
    acc = []
    for x1, p1 in sequences(d1, n):
        for y in ys:
            if family.endswith("^D1"):
                den = p_y_given_x1(t, d2, x1, y)
                if den == 0:
                    continue
                num = p_y(t, e1, e2, y) if family == "B_mc{}^D1" else p_y_given_x1(t, e2, x1, y)
                acc.append(p1 * den * num / den)
                continue
            for x2, p2 in sequences(d2, n):
                den = w_seq(t, x1, x2, y)
                if den == 0:
                    continue
                num = {"B_mc{}": lambda: p_y(t, e1, e2, y),
                       "B_mc{1}": lambda: p_y_given_x1(t, e2, x1, y),
                       "B_mc{2}": lambda: p_y_given_x2(t, e1, x2, y)}[family]()
                acc.append(p1 * p2 * den * num / den)
    return math.fsum(acc)


def sync_mc_term(system, family, g, gt, bits):
    e = sync_mc_expectation(system, family, g, gt)
    return min(system.prior(g), system.prior(gt) * 2.0 ** bits * e)


# ---- synchronous decoders -------------------------------------------------------------

def _argmax(cands):
    """cands: list of (score, key, row) in enumeration order."""
    admitted = [c for c in cands if c[0] > -math.inf]
    if not admitted:
        return False, None, False
    best = max(c[0] for c in admitted)
    near = [c for c in admitted if c[0] >= best - TOL]
    first = near[0]
    tie = any(c[1] != first[1] for c in near)
    return True, first[2], tie


def decode_d12(system, regions, books, y, thresholds=True, user1_only=False):
    """Joint decoder by explicit loops. books[(u, k)] is an (M, N) array.

    With ``user1_only`` ties are judged on (g1, w1) alone.
    """
    t = system.channel.transition
    y = tuple(int(v) for v in y)
    cands = []
    for g in sorted(regions.operation):
        g1, g2 = g
        for w1, x1 in enumerate(books[(1, g1)]):
            for w2, x2 in enumerate(books[(2, g2)]):
                x1t, x2t = tuple(x1), tuple(x2)
                ell = log(w_seq(t, x1t, x2t, y)) + log(system.prior(g)) - (system.bits(1, g1) + system.bits(2, g2)) * LN2
                ok = True
                if thresholds:
                    for gt in sorted(regions.outside):
                        e1, e2 = system.dist(1, gt[0]).probs, system.dist(2, gt[1]).probs
                        gams = [log(system.prior(gt)) + log(p_y(t, e1, e2, y))]
                        if gt[0] == g1:
                            gams.append(log(system.prior(gt)) - system.bits(1, gt[0]) * LN2
                                        + log(p_y_given_x1(t, e2, x1t, y)))
                        if gt[1] == g2:
                            gams.append(log(system.prior(gt)) - system.bits(2, gt[1]) * LN2
                                        + log(p_y_given_x2(t, e1, x2t, y)))
                        ok = ok and all(ell > gam + TOL for gam in gams)
                key = (g1, w1) if user1_only else (g1, g2, w1, w2)
                cands.append((ell if ok else -math.inf, key, (g1, g2, w1, w2)))
    return _argmax(cands)


def decode_d1(system, regions, books, y):
    t = system.channel.transition
    y = tuple(int(v) for v in y)
    cands = []
    for g in sorted(regions.operation):
        g1, g2 = g
        d2 = system.dist(2, g2).probs
        for w1, x1 in enumerate(books[(1, g1)]):
            x1t = tuple(x1)
            ell = log(p_y_given_x1(t, d2, x1t, y)) + log(system.prior(g)) - system.bits(1, g1) * LN2
            ok = True
            for gt in sorted(regions.outside):
                e1, e2 = system.dist(1, gt[0]).probs, system.dist(2, gt[1]).probs
                ok = ok and ell > log(system.prior(gt)) + log(p_y(t, e1, e2, y)) + TOL
            for gt in sorted(regions.collision):
                if gt[0] == g1:
                    e2 = system.dist(2, gt[1]).probs
                    gam = log(system.prior(gt)) - system.bits(1, gt[0]) * LN2 + log(p_y_given_x1(t, e2, x1t, y))
                    ok = ok and ell > gam + TOL
            cands.append((ell if ok else -math.inf, (g1, w1), (g1, g2, w1)))
    return _argmax(cands)


def _judge(region, decoded, correct):
    if region == "operation":
        return not correct
    if region == "margin":
        return decoded and not correct
    return decoded


def sync_gep(system, decoder):
    """Exact GEP of a synchronous receiver by looping over codebooks, messages and outputs."""
    t = system.channel.transition
    n = system.n
    keys = [(u, k) for u in (1, 2) for k in range(len(system.ensemble(u).codes))]
    per_key = []
    for u, k in keys:
        m = system.messages(u, k)
        probs = system.dist(u, k).probs
        per_key.append([(np.array(s).reshape(m, n), p) for s, p in sequences(probs, m * n)])
    regions = {"d12": system.d12_regions, "d1": system.d1_regions,
               "synthesized": system.partition.as_regions()}[decoder]
    total = []
    for g in system.space:
        region = regions.region_of(g)
        m1, m2 = system.messages(1, g[0]), system.messages(2, g[1])
        acc = []
        for combo in itertools.product(*per_key):
            books = {key: b for key, (b, _) in zip(keys, combo)}
            pb = math.prod(p for _, p in combo)
            for w1 in range(m1):
                for w2 in range(m2):
                    x1, x2 = books[(1, g[0])][w1], books[(2, g[1])][w2]
                    for y in all_outputs(t, n):
                        py = w_seq(t, x1, x2, y)
                        if py == 0:
                            continue
                        err = _sync_error(system, decoder, region, books, y, g, w1, w2)
                        if err:
                            acc.append(pb * py / (m1 * m2))
        total.append(system.prior(g) * math.fsum(acc))
    return math.fsum(total)


def _sync_error(system, decoder, region, books, y, g, w1, w2):
    if decoder == "d12":
        ok, row, tie = decode_d12(system, system.d12_regions, books, y)
        return _judge(region, ok, ok and row == (g[0], g[1], w1, w2) and not tie)
    if decoder == "d1":
        ok, row, tie = decode_d1(system, system.d1_regions, books, y)
        return _judge(region, ok, ok and (row[0], row[2]) == (g[0], w1) and not tie)
    truth = (g[0], w1)
    outs = []
    for ok, row, tie in (decode_d12(system, system.d12_regions, books, y, user1_only=True),
                         decode_d1(system, system.d1_regions, books, y)):
        out = (row[0], row[2]) if ok else None
        if ok and tie and out == truth:
            out = "wrong"
        outs.append((ok, out))
    (a, oa), (b, ob) = outs
    if a and b:
        decoded, out = oa == ob, oa
    elif a or b:
        decoded, out = True, oa if a else ob
    else:
        decoded, out = False, None
    return _judge(region, decoded, decoded and out == truth)


# ---- asynchronous quantities ----------------------------------------------------------

def _position_symbol(asys, user, p, packet_seqs):
    ij = asys.layout.active(user, p)
    if ij is None:
        return asys.channel.idle1 if user == 1 else asys.channel.idle2
    return packet_seqs[ij][p - asys.layout.start(ij)]


def async_prob(asys, gv, pinned: dict, y):
    """P(y | pinned packet sequences) with every other packet drawn from its code under gv."""
    t = asys.channel.transition
    lay = asys.layout
    free = [ij for ij in lay.packets if ij not in pinned]
    choices = [sequences(asys.dist(ij, asys.code_of(gv, ij)).probs, lay.n) for ij in free]
    acc = []
    for combo in itertools.product(*choices):
        seqs = dict(pinned)
        pr = 1.0
        for ij, (s, p) in zip(free, combo):
            seqs[ij] = s
            pr *= p
        w = 1.0
        for p in range(lay.total_len):
            w *= t[_position_symbol(asys, 1, p, seqs), _position_symbol(asys, 2, p, seqs), y[p]]
        acc.append(pr * w)
    return math.fsum(acc)


def async_rcu_term(asys, dset, sset, g, gt, cap):
    lay = asys.layout
    ys = all_outputs(asys.channel.transition, lay.total_len)
    bits = lambda gv, ps: sum(asys.bits(ij, asys.code_of(gv, ij)) for ij in ps)
    c_true = log(asys.prior(g)) - bits(g, dset) * LN2
    c_riv = log(asys.prior(gt)) - bits(gt, dset) * LN2
    fresh = [ij for ij in dset if ij not in sset]
    k = 2.0 ** bits(gt, fresh)
    outer = [sequences(asys.dist(ij, asys.code_of(g, ij)).probs, lay.n) for ij in dset]
    rivals = [sequences(asys.dist(ij, asys.code_of(gt, ij)).probs, lay.n) for ij in fresh]
    acc = []
    for combo in itertools.product(*outer):
        xd = {ij: s for ij, (s, _) in zip(dset, combo)}
        px = math.prod(p for _, p in combo)
        for y in ys:
            py = async_prob(asys, g, xd, y)
            if py == 0:
                continue
            s_true = log(py) + c_true
            q = []
            for rc in itertools.product(*rivals):
                pins = {ij: xd[ij] for ij in sset}
                pins.update({ij: s for ij, (s, _) in zip(fresh, rc)})
                if log(async_prob(asys, gt, pins, y)) + c_riv >= s_true - TOL:
                    q.append(math.prod(p for _, p in rc))
            acc.append(px * py * min(cap, k * math.fsum(q)))
    return asys.prior(g) * math.fsum(acc)


def async_mc_expectation(asys, dset, sset, g, gt):
    lay = asys.layout
    ys = all_outputs(asys.channel.transition, lay.total_len)
    outer = [sequences(asys.dist(ij, asys.code_of(g, ij)).probs, lay.n) for ij in dset]
    acc = []
    for combo in itertools.product(*outer):
        xd = {ij: s for ij, (s, _) in zip(dset, combo)}
        px = math.prod(p for _, p in combo)
        for y in ys:
            den = async_prob(asys, g, xd, y)
            if den == 0:
                continue
            num = async_prob(asys, gt, {ij: xd[ij] for ij in sset}, y)
            acc.append(px * num)
    return math.fsum(acc)


def random_books(rng, system, n=None):
    """One fixed codebook per (user, code) for a synchronous system."""
    n = n or system.n
    out = {}
    for u in (1, 2):
        for k, code in enumerate(system.ensemble(u).codes):
            m = system.messages(u, k)
            probs = code.input_dist.probs
            out[(u, k)] = rng.choice(len(probs), size=(m, n), p=probs)
    return out


def output_sample(rng, t, x1, x2):
    return np.array([rng.choice(t.shape[2], p=t[a, b]) for a, b in zip(x1, x2)])
