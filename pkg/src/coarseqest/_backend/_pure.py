"""Pure-python/numpy backend: exact SSA sampling and MITL monitoring.

This module is the reference implementation; the compiled extension in
``_speedups`` mirrors it operation for operation and must produce
bit-identical results from the same seed, which the test-suite checks.
Randomness is consumed strictly as two uniform doubles per jump (waiting
time, then reaction choice) from a single Philox stream.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.random import Generator, Philox

from coarseqest.mitl import (
    K_ALWAYS,
    K_AND,
    K_ATOM,
    K_EVENTUALLY,
    K_NOT,
    K_TRUE,
    K_UNTIL,
    OP_ADD,
    OP_CONST,
    OP_DIV,
    OP_MUL,
    OP_NEG,
    OP_SPECIES,
    OP_SUB,
    HorizonError,
)

_BLOCK = 1024


class _Stream:
    """Buffered uniform doubles from one Philox stream (consumption order
    identical to raw next_double calls)."""

    __slots__ = ("_gen", "_buf", "_i")

    def __init__(self, seedseq):
        self._gen = Generator(Philox(seedseq))
        self._buf = self._gen.random(_BLOCK)
        self._i = 0

    def next(self) -> float:
        if self._i == _BLOCK:
            self._buf = self._gen.random(_BLOCK)
            self._i = 0
        v = self._buf[self._i]
        self._i += 1
        return float(v)


def _reaction_terms(rmat, nmat, rates):
    reactant_terms = []
    net_terms = []
    for j in range(rmat.shape[0]):
        reactant_terms.append([(i, int(rmat[j, i])) for i in range(rmat.shape[1]) if rmat[j, i] > 0])
        net_terms.append([(i, int(nmat[j, i])) for i in range(nmat.shape[1]) if nmat[j, i] != 0])
    return reactant_terms, net_terms, [float(r) for r in rates]


def _ssa_core(reactant_terms, net_terms, rates, x, horizon, stream, out_t, out_x):
    """Run one trajectory; mutates x, appends jumps to out_t/out_x."""
    n_reactions = len(rates)
    t = 0.0
    props = [0.0] * n_reactions
    while True:
        total = 0.0
        for j in range(n_reactions):
            a = rates[j]
            for i, r in reactant_terms[j]:
                for step in range(r):
                    a *= x[i] - step
            props[j] = a
            total += a
        if total <= 0.0:
            break
        u1 = stream.next()
        t = t + (-math.log1p(-u1) / total)
        if t > horizon:
            break
        u2 = stream.next()
        threshold = u2 * total
        chosen = -1
        acc = 0.0
        for j in range(n_reactions):
            acc += props[j]
            if acc > threshold:
                chosen = j
                break
        if chosen < 0:
            # float round-off pushed the threshold to the total: take the
            # last reaction with positive propensity
            for j in range(n_reactions - 1, -1, -1):
                if props[j] > 0.0:
                    chosen = j
                    break
        for i, d in net_terms[chosen]:
            x[i] += d
        out_t.append(t)
        out_x.append(tuple(x))


def ssa_trajectory(rmat, nmat, rates, init, horizon, seedseq):
    reactant_terms, net_terms, rate_list = _reaction_terms(rmat, nmat, rates)
    stream = _Stream(seedseq)
    out_t, out_x = [], []
    _ssa_core(reactant_terms, net_terms, rate_list, list(init), horizon, stream, out_t, out_x)
    times = np.asarray(out_t, dtype=np.float64)
    states = np.asarray(out_x, dtype=np.int64).reshape(len(out_t), len(init))
    return times, states


# --- exact boolean signals --------------------------------------------------
#
# A signal is (ts, at, btw): sorted breakpoints ts (ts[0] == 0), the value
# at each breakpoint, and the value on the open interval after it (the last
# entry covers everything beyond the final breakpoint).


def _compress(ts, at, btw):
    if len(ts) <= 1:
        return ts, at, btw
    drop = (at[1:] == btw[1:]) & (btw[1:] == btw[:-1])
    if not drop.any():
        return ts, at, btw
    keep = np.concatenate(([True], ~drop))
    return ts[keep], at[keep], btw[keep]


def _value(sig, t):
    ts, at, btw = sig
    i = int(np.searchsorted(ts, t, side="right")) - 1
    if ts[i] == t:
        return int(at[i])
    return int(btw[i])


def _exists(sig, lo, hi, want):
    """Is there a point in the closed interval [lo, hi] where the signal == want?"""
    ts, at, btw = sig
    if lo == hi:
        return _value(sig, lo) == want
    i0 = int(np.searchsorted(ts, lo, side="left"))
    i1 = int(np.searchsorted(ts, hi, side="right"))
    if np.any(at[i0:i1] == want):
        return True
    g_start = max(int(np.searchsorted(ts, lo, side="right")) - 1, 0)
    g_stop = int(np.searchsorted(ts, hi, side="left"))
    return bool(np.any(btw[g_start:g_stop] == want))


def _false_onsets(sig):
    ts, at, btw = sig
    return ts[(at == 0) | (btw == 0)]


def _until_at(sig1, fp1, sig2, a, b, t):
    if _value(sig1, t) == 0:
        fail = t
    else:
        j = int(np.searchsorted(fp1, t, side="left"))
        fail = float(fp1[j]) if j < len(fp1) else math.inf
    lo = t + a
    hi = t + b
    if fail < hi:
        hi = fail
    if hi < lo:
        return 0
    if lo == hi:
        return 1 if _value(sig2, lo) == 1 else 0
    return 1 if _exists(sig2, lo, hi, 1) else 0


def _window_at(sig, a, b, t, forall):
    lo = t + a
    hi = t + b
    if lo == hi:
        return 1 if _value(sig, lo) == 1 else 0
    if forall:
        return 0 if _exists(sig, lo, hi, 0) else 1
    return 1 if _exists(sig, lo, hi, 1) else 0


def _candidates(pieces, hv):
    cands = np.unique(np.concatenate(pieces + [np.array([0.0])]))
    cands = cands[(cands >= 0.0) & (cands <= hv)]
    if len(cands) == 0:
        # window never fits (hv < 0): placeholder, never legitimately queried
        cands = np.array([0.0])
    return cands


def _build_from_points(cands, hv, point_fn):
    m = len(cands)
    at = np.empty(m, dtype=np.uint8)
    btw = np.empty(m, dtype=np.uint8)
    for i in range(m):
        at[i] = point_fn(float(cands[i]))
        upper = cands[i + 1] if i + 1 < m else hv
        if upper > cands[i]:
            btw[i] = point_fn(float((cands[i] + upper) * 0.5))
        else:
            btw[i] = at[i]
    return _compress(cands, at, btw)


def _eval_signals(compiled, seg_ts, seg_states, horizon):
    """Build exact truth signals bottom-up for every node that needs one."""
    n_nodes = len(compiled.node_kind)
    kind = compiled.node_kind
    c0 = compiled.node_c0
    c1 = compiled.node_c1
    na = compiled.node_a
    nb = compiled.node_b

    states_f = seg_states.astype(np.float64)
    atom_truth = _eval_atoms(compiled, states_f)

    signals = [None] * n_nodes
    hv = np.empty(n_nodes, dtype=np.float64)
    for i in range(n_nodes):
        k = kind[i]
        if k == K_TRUE:
            hv[i] = horizon
            signals[i] = (
                np.array([0.0]),
                np.array([1], dtype=np.uint8),
                np.array([1], dtype=np.uint8),
            )
            continue
        if k == K_ATOM:
            hv[i] = horizon
            vals = atom_truth[compiled.node_atom[i]]
            signals[i] = _compress(seg_ts, vals, vals.copy())
            continue
        if k == K_NOT:
            hv[i] = hv[c0[i]]
            ts, at, btw = signals[c0[i]]
            signals[i] = (ts, 1 - at, 1 - btw)
            continue
        if k == K_AND:
            hv[i] = min(hv[c0[i]], hv[c1[i]])
            s0, s1 = signals[c0[i]], signals[c1[i]]
            cands = _candidates([s0[0], s1[0]], hv[i])
            signals[i] = _build_from_points(
                cands, hv[i], lambda t: 1 if (_value(s0, t) and _value(s1, t)) else 0
            )
            continue
        if k == K_UNTIL:
            hv[i] = min(hv[c0[i]], hv[c1[i]]) - nb[i]
            if not compiled.node_needs_signal[i]:
                continue
            s0, s1 = signals[c0[i]], signals[c1[i]]
            fp = _false_onsets(s0)
            a, b = float(na[i]), float(nb[i])
            cands = _candidates([s0[0], s0[0] - a, s0[0] - b, s1[0] - a, s1[0] - b], hv[i])
            signals[i] = _build_from_points(
                cands, hv[i], lambda t: _until_at(s0, fp, s1, a, b, t)
            )
            continue
        # eventually / always
        hv[i] = hv[c0[i]] - nb[i]
        if not compiled.node_needs_signal[i]:
            continue
        s0 = signals[c0[i]]
        a, b = float(na[i]), float(nb[i])
        forall = k == K_ALWAYS
        cands = _candidates([s0[0] - a, s0[0] - b], hv[i])
        signals[i] = _build_from_points(
            cands, hv[i], lambda t: _window_at(s0, a, b, t, forall)
        )
    return signals, hv


def _eval_atoms(compiled, states_f):
    """Vectorized stack machine: truth of every atom on every segment."""
    n_atoms = len(compiled.atom_cmp)
    m = states_f.shape[0]
    out = []
    for aidx in range(n_atoms):
        start, stop = compiled.atom_offsets[aidx], compiled.atom_offsets[aidx + 1]
        stack = []
        for p in range(start, stop):
            op = compiled.atom_ops[p]
            if op == OP_CONST:
                stack.append(np.full(m, compiled.atom_fargs[p]))
            elif op == OP_SPECIES:
                stack.append(states_f[:, compiled.atom_iargs[p]].copy())
            elif op == OP_NEG:
                stack[-1] = -stack[-1]
            else:
                rhs = stack.pop()
                lhs = stack.pop()
                if op == OP_ADD:
                    stack.append(lhs + rhs)
                elif op == OP_SUB:
                    stack.append(lhs - rhs)
                elif op == OP_MUL:
                    stack.append(lhs * rhs)
                elif op == OP_DIV:
                    stack.append(lhs / rhs)
        rhs = stack.pop()
        lhs = stack.pop()
        cmp = compiled.atom_cmp[aidx]
        if cmp == 0:
            truth = lhs < rhs
        elif cmp == 1:
            truth = lhs <= rhs
        elif cmp == 2:
            truth = lhs > rhs
        else:
            truth = lhs >= rhs
        out.append(truth.astype(np.uint8))
    return out


def _eval_root(compiled, signals, hv, node, t):
    kind = compiled.node_kind[node]
    if kind in (K_ATOM, K_TRUE):
        return _value(signals[node], t)
    if kind == K_NOT:
        return 1 - _eval_root(compiled, signals, hv, compiled.node_c0[node], t)
    if kind == K_AND:
        return (
            _eval_root(compiled, signals, hv, compiled.node_c0[node], t)
            and _eval_root(compiled, signals, hv, compiled.node_c1[node], t)
        )
    a, b = float(compiled.node_a[node]), float(compiled.node_b[node])
    if kind == K_UNTIL:
        s0 = signals[compiled.node_c0[node]]
        s1 = signals[compiled.node_c1[node]]
        return _until_at(s0, _false_onsets(s0), s1, a, b, t)
    s0 = signals[compiled.node_c0[node]]
    return _window_at(s0, a, b, t, kind == K_ALWAYS)


def eval_at(compiled, seg_ts, seg_states, horizon, t):
    """Truth of every formula root at time t; exact event-based semantics."""
    signals, hv = _eval_signals(compiled, seg_ts, seg_states, horizon)
    bits = np.zeros(compiled.n_formulas, dtype=np.uint8)
    for f, root in enumerate(compiled.roots):
        if t > hv[root]:
            raise HorizonError(
                f"formula {compiled.names[f]!r} evaluated at t={t} needs the trajectory "
                f"on [{t}, {t + (horizon - hv[root])}] but the horizon is {horizon}"
            )
        bits[f] = _eval_root(compiled, signals, hv, int(root), float(t))
    return bits


def smc_batch(rmat, nmat, rates, init, horizon, compiled, m, seedseq):
    """Counts over the 2^n joint truth patterns from m fresh trajectories."""
    reactant_terms, net_terms, rate_list = _reaction_terms(rmat, nmat, rates)
    stream = _Stream(seedseq)
    counts = np.zeros(compiled.pattern_count, dtype=np.int64)
    init = list(init)
    n_species = len(init)
    for _ in range(m):
        out_t, out_x = [0.0], [tuple(init)]
        x = list(init)
        _ssa_core(reactant_terms, net_terms, rate_list, x, horizon, stream, out_t, out_x)
        seg_ts = np.asarray(out_t, dtype=np.float64)
        seg_states = np.asarray(out_x, dtype=np.int64).reshape(len(out_t), n_species)
        bits = eval_at(compiled, seg_ts, seg_states, horizon, 0.0)
        pattern = 0
        for i in range(len(bits)):
            if bits[i]:
                pattern |= 1 << i
        counts[pattern] += 1
    return counts
