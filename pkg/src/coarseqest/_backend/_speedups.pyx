# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled kernels: Gillespie sampling and exact MITL monitoring.

Mirrors coarseqest._backend._pure operation for operation; both consume
the same Philox stream (two uniforms per jump) and must return
bit-identical results, which the test-suite enforces.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport log1p, INFINITY
from libc.stdlib cimport qsort
from libc.stdint cimport int32_t, int64_t, uint8_t
from numpy.random cimport bitgen_t

import numpy as np
from numpy.random import Generator, Philox

from coarseqest.mitl import HorizonError

# node kinds / expression opcodes (keep in sync with coarseqest.mitl)
cdef enum:
    K_ATOM = 0
    K_NOT = 1
    K_AND = 2
    K_UNTIL = 3
    K_EVENTUALLY = 4
    K_ALWAYS = 5
    K_TRUE = 6

cdef enum:
    OP_CONST = 0
    OP_SPECIES = 1
    OP_ADD = 2
    OP_SUB = 3
    OP_MUL = 4
    OP_DIV = 5
    OP_NEG = 6


cdef int _dbl_cmp(const void* pa, const void* pb) noexcept nogil:
    cdef double a = (<const double*> pa)[0]
    cdef double b = (<const double*> pb)[0]
    if a < b:
        return -1
    if a > b:
        return 1
    return 0


# ---------------------------------------------------------------------------
# SSA core
# ---------------------------------------------------------------------------

cdef long _ssa(double* seg_t, int64_t* seg_x, long cap, int ns, int nr,
               const int64_t* rmat, const int64_t* nmat, const double* rates,
               int64_t* x, double* props, double horizon,
               bitgen_t* rng, int64_t* draws) noexcept nogil:
    """One trajectory written as segments (row 0 = initial state at t=0).

    Returns the segment count, or -1 if cap was exceeded.
    """
    cdef long k = 1
    cdef double t = 0.0, total, a, u1, u2, thr, acc
    cdef int i, j, step, chosen
    cdef int64_t r
    seg_t[0] = 0.0
    for i in range(ns):
        seg_x[i] = x[i]
    while True:
        total = 0.0
        for j in range(nr):
            a = rates[j]
            for i in range(ns):
                r = rmat[j * ns + i]
                for step in range(r):
                    a *= x[i] - step
            props[j] = a
            total += a
        if total <= 0.0:
            break
        u1 = rng.next_double(rng.state)
        draws[0] += 1
        t = t + (-log1p(-u1) / total)
        if t > horizon:
            break
        u2 = rng.next_double(rng.state)
        draws[0] += 1
        thr = u2 * total
        chosen = -1
        acc = 0.0
        for j in range(nr):
            acc += props[j]
            if acc > thr:
                chosen = j
                break
        if chosen < 0:
            # float round-off pushed the threshold to the total: take the
            # last reaction with positive propensity
            for j in range(nr - 1, -1, -1):
                if props[j] > 0.0:
                    chosen = j
                    break
        for i in range(ns):
            x[i] += nmat[chosen * ns + i]
        if k == cap:
            return -1
        seg_t[k] = t
        for i in range(ns):
            seg_x[k * ns + i] = x[i]
        k += 1
    return k


# ---------------------------------------------------------------------------
# signal engine
# ---------------------------------------------------------------------------

cdef struct EvalCtx:
    int n_nodes
    const int32_t* kind
    const int32_t* c0
    const int32_t* c1
    const double* na
    const double* nb
    const int32_t* natom
    const uint8_t* needs
    const int64_t* prefix
    const int32_t* atom_ops
    const int32_t* atom_iargs
    const double* atom_fargs
    const int32_t* atom_offsets
    const int32_t* atom_cmp
    long stride          # arena slots per unit = cap + 2
    double* ts
    uint8_t* at
    uint8_t* btw
    int64_t* m           # breakpoint count per node
    double* hv           # valid evaluation horizon per node
    double* fp           # false-onset scratch
    double* stack        # atom expression stack


cdef inline long _bs_right(const double* a, long n, double v) noexcept nogil:
    cdef long lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] <= v:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline long _bs_left(const double* a, long n, double v) noexcept nogil:
    cdef long lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline int _value(const double* ts, const uint8_t* at, const uint8_t* btw,
                       long m, double t) noexcept nogil:
    cdef long i = _bs_right(ts, m, t) - 1
    if i < 0:
        i = 0
    if ts[i] == t:
        return at[i]
    return btw[i]


cdef int _exists(const double* ts, const uint8_t* at, const uint8_t* btw,
                 long m, double lo, double hi, int want) noexcept nogil:
    """Is there a point in the closed interval [lo, hi] with value == want?"""
    cdef long i0, i1, g, g_start, g_stop
    if lo == hi:
        return _value(ts, at, btw, m, lo) == want
    i0 = _bs_left(ts, m, lo)
    i1 = _bs_right(ts, m, hi)
    for g in range(i0, i1):
        if at[g] == want:
            return 1
    g_start = _bs_right(ts, m, lo) - 1
    if g_start < 0:
        g_start = 0
    g_stop = _bs_left(ts, m, hi)
    for g in range(g_start, g_stop):
        if btw[g] == want:
            return 1
    return 0


cdef long _false_onsets(const double* ts, const uint8_t* at, const uint8_t* btw,
                        long m, double* fp) noexcept nogil:
    cdef long i, k = 0
    for i in range(m):
        if at[i] == 0 or btw[i] == 0:
            fp[k] = ts[i]
            k += 1
    return k


cdef int _until_at(const double* ts1, const uint8_t* at1, const uint8_t* btw1, long m1,
                   const double* fp, long nfp,
                   const double* ts2, const uint8_t* at2, const uint8_t* btw2, long m2,
                   double a, double b, double t) noexcept nogil:
    cdef double fail, lo, hi
    cdef long j
    if _value(ts1, at1, btw1, m1, t) == 0:
        fail = t
    else:
        j = _bs_left(fp, nfp, t)
        fail = fp[j] if j < nfp else INFINITY
    lo = t + a
    hi = t + b
    if fail < hi:
        hi = fail
    if hi < lo:
        return 0
    if lo == hi:
        return _value(ts2, at2, btw2, m2, lo) == 1
    return _exists(ts2, at2, btw2, m2, lo, hi, 1)


cdef int _window_at(const double* ts, const uint8_t* at, const uint8_t* btw, long m,
                    double a, double b, double t, int forall) noexcept nogil:
    cdef double lo = t + a
    cdef double hi = t + b
    if lo == hi:
        return _value(ts, at, btw, m, lo) == 1
    if forall:
        return 0 if _exists(ts, at, btw, m, lo, hi, 0) else 1
    return _exists(ts, at, btw, m, lo, hi, 1)


cdef long _compress(double* ts, uint8_t* at, uint8_t* btw, long m) noexcept nogil:
    cdef long i, k
    if m <= 1:
        return m
    k = 1
    for i in range(1, m):
        if at[i] == btw[i] and btw[i] == btw[k - 1]:
            continue
        ts[k] = ts[i]
        at[k] = at[i]
        btw[k] = btw[i]
        k += 1
    return k


cdef long _finish_candidates(double* buf, long n, double hv) noexcept nogil:
    """Sort + dedupe + clip to [0, hv]; guarantee at least one entry (0.0)."""
    cdef long i, k = 0
    qsort(buf, n, sizeof(double), _dbl_cmp)
    for i in range(n):
        if buf[i] < 0.0 or buf[i] > hv:
            continue
        if k > 0 and buf[k - 1] == buf[i]:
            continue
        buf[k] = buf[i]
        k += 1
    if k == 0:
        buf[0] = 0.0
        k = 1
    return k


cdef int _eval_atom_row(EvalCtx* ctx, int aidx, const int64_t* row) noexcept nogil:
    cdef int sp = 0
    cdef long p
    cdef int op, cmp
    cdef double rhs, lhs
    for p in range(ctx.atom_offsets[aidx], ctx.atom_offsets[aidx + 1]):
        op = ctx.atom_ops[p]
        if op == OP_CONST:
            ctx.stack[sp] = ctx.atom_fargs[p]
            sp += 1
        elif op == OP_SPECIES:
            ctx.stack[sp] = <double> row[ctx.atom_iargs[p]]
            sp += 1
        elif op == OP_NEG:
            ctx.stack[sp - 1] = -ctx.stack[sp - 1]
        else:
            rhs = ctx.stack[sp - 1]
            lhs = ctx.stack[sp - 2]
            sp -= 1
            if op == OP_ADD:
                ctx.stack[sp - 1] = lhs + rhs
            elif op == OP_SUB:
                ctx.stack[sp - 1] = lhs - rhs
            elif op == OP_MUL:
                ctx.stack[sp - 1] = lhs * rhs
            else:
                ctx.stack[sp - 1] = lhs / rhs
    rhs = ctx.stack[sp - 1]
    lhs = ctx.stack[sp - 2]
    cmp = ctx.atom_cmp[aidx]
    if cmp == 0:
        return lhs < rhs
    elif cmp == 1:
        return lhs <= rhs
    elif cmp == 2:
        return lhs > rhs
    return lhs >= rhs


cdef void _build_signals(EvalCtx* ctx, const double* seg_t, const int64_t* seg_x,
                         long nseg, int ns, double horizon) noexcept nogil:
    cdef int node, k
    cdef long off, o0, o1, i, mm, n_raw, nfp, m0, m1
    cdef double a, b, upper, mid
    cdef double* ts
    cdef uint8_t* at
    cdef uint8_t* btw
    for node in range(ctx.n_nodes):
        k = ctx.kind[node]
        if k == K_TRUE or k == K_ATOM:
            ctx.hv[node] = horizon
        elif k == K_NOT:
            ctx.hv[node] = ctx.hv[ctx.c0[node]]
        elif k == K_AND:
            ctx.hv[node] = ctx.hv[ctx.c0[node]]
            if ctx.hv[ctx.c1[node]] < ctx.hv[node]:
                ctx.hv[node] = ctx.hv[ctx.c1[node]]
        elif k == K_UNTIL:
            ctx.hv[node] = ctx.hv[ctx.c0[node]]
            if ctx.hv[ctx.c1[node]] < ctx.hv[node]:
                ctx.hv[node] = ctx.hv[ctx.c1[node]]
            ctx.hv[node] = ctx.hv[node] - ctx.nb[node]
        else:
            ctx.hv[node] = ctx.hv[ctx.c0[node]] - ctx.nb[node]

        if not ctx.needs[node]:
            continue
        off = ctx.prefix[node] * ctx.stride
        ts = ctx.ts + off
        at = ctx.at + off
        btw = ctx.btw + off

        if k == K_TRUE:
            ts[0] = 0.0
            at[0] = 1
            btw[0] = 1
            ctx.m[node] = 1
            continue

        if k == K_ATOM:
            for i in range(nseg):
                ts[i] = seg_t[i]
                at[i] = _eval_atom_row(ctx, ctx.natom[node], seg_x + i * ns)
                btw[i] = at[i]
            ctx.m[node] = _compress(ts, at, btw, nseg)
            continue

        if k == K_NOT:
            o0 = ctx.prefix[ctx.c0[node]] * ctx.stride
            mm = ctx.m[ctx.c0[node]]
            for i in range(mm):
                ts[i] = ctx.ts[o0 + i]
                at[i] = 1 - ctx.at[o0 + i]
                btw[i] = 1 - ctx.btw[o0 + i]
            ctx.m[node] = mm
            continue

        o0 = ctx.prefix[ctx.c0[node]] * ctx.stride
        m0 = ctx.m[ctx.c0[node]]

        if k == K_AND:
            o1 = ctx.prefix[ctx.c1[node]] * ctx.stride
            m1 = ctx.m[ctx.c1[node]]
            n_raw = 0
            for i in range(m0):
                ts[n_raw] = ctx.ts[o0 + i]
                n_raw += 1
            for i in range(m1):
                ts[n_raw] = ctx.ts[o1 + i]
                n_raw += 1
            ts[n_raw] = 0.0
            n_raw += 1
            mm = _finish_candidates(ts, n_raw, ctx.hv[node])
            for i in range(mm):
                at[i] = (_value(ctx.ts + o0, ctx.at + o0, ctx.btw + o0, m0, ts[i])
                         and _value(ctx.ts + o1, ctx.at + o1, ctx.btw + o1, m1, ts[i]))
                upper = ts[i + 1] if i + 1 < mm else ctx.hv[node]
                if upper > ts[i]:
                    mid = (ts[i] + upper) * 0.5
                    btw[i] = (_value(ctx.ts + o0, ctx.at + o0, ctx.btw + o0, m0, mid)
                              and _value(ctx.ts + o1, ctx.at + o1, ctx.btw + o1, m1, mid))
                else:
                    btw[i] = at[i]
            ctx.m[node] = _compress(ts, at, btw, mm)
            continue

        a = ctx.na[node]
        b = ctx.nb[node]

        if k == K_UNTIL:
            o1 = ctx.prefix[ctx.c1[node]] * ctx.stride
            m1 = ctx.m[ctx.c1[node]]
            nfp = _false_onsets(ctx.ts + o0, ctx.at + o0, ctx.btw + o0, m0, ctx.fp)
            n_raw = 0
            for i in range(m0):
                ts[n_raw] = ctx.ts[o0 + i]
                ts[n_raw + 1] = ctx.ts[o0 + i] - a
                ts[n_raw + 2] = ctx.ts[o0 + i] - b
                n_raw += 3
            for i in range(m1):
                ts[n_raw] = ctx.ts[o1 + i] - a
                ts[n_raw + 1] = ctx.ts[o1 + i] - b
                n_raw += 2
            ts[n_raw] = 0.0
            n_raw += 1
            mm = _finish_candidates(ts, n_raw, ctx.hv[node])
            for i in range(mm):
                at[i] = _until_at(ctx.ts + o0, ctx.at + o0, ctx.btw + o0, m0, ctx.fp, nfp,
                                  ctx.ts + o1, ctx.at + o1, ctx.btw + o1, m1, a, b, ts[i])
                upper = ts[i + 1] if i + 1 < mm else ctx.hv[node]
                if upper > ts[i]:
                    mid = (ts[i] + upper) * 0.5
                    btw[i] = _until_at(ctx.ts + o0, ctx.at + o0, ctx.btw + o0, m0, ctx.fp, nfp,
                                       ctx.ts + o1, ctx.at + o1, ctx.btw + o1, m1, a, b, mid)
                else:
                    btw[i] = at[i]
            ctx.m[node] = _compress(ts, at, btw, mm)
            continue

        # eventually / always
        n_raw = 0
        for i in range(m0):
            ts[n_raw] = ctx.ts[o0 + i] - a
            ts[n_raw + 1] = ctx.ts[o0 + i] - b
            n_raw += 2
        ts[n_raw] = 0.0
        n_raw += 1
        mm = _finish_candidates(ts, n_raw, ctx.hv[node])
        for i in range(mm):
            at[i] = _window_at(ctx.ts + o0, ctx.at + o0, ctx.btw + o0, m0,
                               a, b, ts[i], k == K_ALWAYS)
            upper = ts[i + 1] if i + 1 < mm else ctx.hv[node]
            if upper > ts[i]:
                mid = (ts[i] + upper) * 0.5
                btw[i] = _window_at(ctx.ts + o0, ctx.at + o0, ctx.btw + o0, m0,
                                    a, b, mid, k == K_ALWAYS)
            else:
                btw[i] = at[i]
        ctx.m[node] = _compress(ts, at, btw, mm)


cdef int _eval_point(EvalCtx* ctx, int node, double t) noexcept nogil:
    cdef int k = ctx.kind[node]
    cdef long off, o0, o1, nfp, m0, m1
    if k == K_ATOM or k == K_TRUE:
        off = ctx.prefix[node] * ctx.stride
        return _value(ctx.ts + off, ctx.at + off, ctx.btw + off, ctx.m[node], t)
    if k == K_NOT:
        return 1 - _eval_point(ctx, ctx.c0[node], t)
    if k == K_AND:
        if not _eval_point(ctx, ctx.c0[node], t):
            return 0
        return _eval_point(ctx, ctx.c1[node], t)
    o0 = ctx.prefix[ctx.c0[node]] * ctx.stride
    m0 = ctx.m[ctx.c0[node]]
    if k == K_UNTIL:
        o1 = ctx.prefix[ctx.c1[node]] * ctx.stride
        m1 = ctx.m[ctx.c1[node]]
        nfp = _false_onsets(ctx.ts + o0, ctx.at + o0, ctx.btw + o0, m0, ctx.fp)
        return _until_at(ctx.ts + o0, ctx.at + o0, ctx.btw + o0, m0, ctx.fp, nfp,
                         ctx.ts + o1, ctx.at + o1, ctx.btw + o1, m1,
                         ctx.na[node], ctx.nb[node], t)
    return _window_at(ctx.ts + o0, ctx.at + o0, ctx.btw + o0, m0,
                      ctx.na[node], ctx.nb[node], t, k == K_ALWAYS)


# ---------------------------------------------------------------------------
# python-visible entry points
# ---------------------------------------------------------------------------

cdef class _Workspace:
    """Per-call buffers: segment storage, signal arenas, scratch."""
    cdef public long cap
    cdef object seg_t_arr, seg_x_arr, ts_arr, at_arr, btw_arr
    cdef object m_arr, hv_arr, fp_arr, stack_arr, props_arr
    cdef double[::1] seg_t
    cdef int64_t[::1] seg_x
    cdef double[::1] ts
    cdef uint8_t[::1] at
    cdef uint8_t[::1] btw
    cdef int64_t[::1] m
    cdef double[::1] hv
    cdef double[::1] fp
    cdef double[::1] stack
    cdef double[::1] props

    def __init__(self, long cap, int ns, int nr, compiled):
        cdef long stride = cap + 2
        cdef long units = max(int(compiled.arena_units), 1)
        cdef long n_nodes = len(compiled.node_kind)
        cdef long max_factor = max(int(compiled.node_factor.max()), 1)
        self.cap = cap
        self.seg_t_arr = np.empty(cap, dtype=np.float64)
        self.seg_x_arr = np.empty(cap * ns, dtype=np.int64)
        self.ts_arr = np.empty(units * stride, dtype=np.float64)
        self.at_arr = np.empty(units * stride, dtype=np.uint8)
        self.btw_arr = np.empty(units * stride, dtype=np.uint8)
        self.m_arr = np.zeros(n_nodes, dtype=np.int64)
        self.hv_arr = np.zeros(n_nodes, dtype=np.float64)
        self.fp_arr = np.empty(max_factor * stride, dtype=np.float64)
        self.stack_arr = np.empty(max(int(compiled.max_stack), 2) + 1, dtype=np.float64)
        self.props_arr = np.empty(max(nr, 1), dtype=np.float64)
        self.seg_t = self.seg_t_arr
        self.seg_x = self.seg_x_arr
        self.ts = self.ts_arr
        self.at = self.at_arr
        self.btw = self.btw_arr
        self.m = self.m_arr
        self.hv = self.hv_arr
        self.fp = self.fp_arr
        self.stack = self.stack_arr
        self.props = self.props_arr


cdef class _Program:
    """Memoryview bundle over a CompiledFormulaSet's arrays."""
    cdef object compiled
    cdef int32_t[::1] kind, c0, c1, natom, atom_ops, atom_iargs, atom_offsets, atom_cmp, roots
    cdef double[::1] na, nb, atom_fargs
    cdef uint8_t[::1] needs
    cdef int64_t[::1] prefix
    cdef public int n_nodes, n_formulas

    def __init__(self, compiled):
        self.compiled = compiled
        self.kind = np.ascontiguousarray(compiled.node_kind, dtype=np.int32)
        self.c0 = np.ascontiguousarray(compiled.node_c0, dtype=np.int32)
        self.c1 = np.ascontiguousarray(compiled.node_c1, dtype=np.int32)
        self.natom = np.ascontiguousarray(compiled.node_atom, dtype=np.int32)
        self.na = np.ascontiguousarray(compiled.node_a, dtype=np.float64)
        self.nb = np.ascontiguousarray(compiled.node_b, dtype=np.float64)
        self.needs = np.ascontiguousarray(compiled.node_needs_signal, dtype=np.uint8)
        self.prefix = np.ascontiguousarray(compiled.node_prefix, dtype=np.int64)
        self.atom_ops = np.ascontiguousarray(compiled.atom_ops, dtype=np.int32)
        self.atom_iargs = np.ascontiguousarray(compiled.atom_iargs, dtype=np.int32)
        self.atom_fargs = np.ascontiguousarray(compiled.atom_fargs, dtype=np.float64)
        self.atom_offsets = np.ascontiguousarray(compiled.atom_offsets, dtype=np.int32)
        self.atom_cmp = np.ascontiguousarray(compiled.atom_cmp, dtype=np.int32)
        self.roots = np.ascontiguousarray(compiled.roots, dtype=np.int32)
        self.n_nodes = len(compiled.node_kind)
        self.n_formulas = int(compiled.n_formulas)

    cdef void fill_ctx(self, EvalCtx* ctx, _Workspace ws):
        ctx.n_nodes = self.n_nodes
        ctx.kind = &self.kind[0]
        ctx.c0 = &self.c0[0]
        ctx.c1 = &self.c1[0]
        ctx.na = &self.na[0]
        ctx.nb = &self.nb[0]
        ctx.natom = &self.natom[0]
        ctx.needs = &self.needs[0]
        ctx.prefix = &self.prefix[0]
        ctx.atom_ops = &self.atom_ops[0]
        ctx.atom_iargs = &self.atom_iargs[0]
        ctx.atom_fargs = &self.atom_fargs[0]
        ctx.atom_offsets = &self.atom_offsets[0]
        ctx.atom_cmp = &self.atom_cmp[0]
        ctx.stride = ws.cap + 2
        ctx.ts = &ws.ts[0]
        ctx.at = &ws.at[0]
        ctx.btw = &ws.btw[0]
        ctx.m = &ws.m[0]
        ctx.hv = &ws.hv[0]
        ctx.fp = &ws.fp[0]
        ctx.stack = &ws.stack[0]


cdef bitgen_t* _get_bitgen(bg) except NULL:
    return <bitgen_t*> PyCapsule_GetPointer(bg.capsule, "BitGenerator")


cdef object _stream_at(seedseq, int64_t n):
    """Fresh Philox positioned after n raw double draws."""
    bg = Philox(seedseq)
    gen = Generator(bg)
    cdef int64_t chunk
    while n > 0:
        chunk = n if n < (1 << 20) else (1 << 20)
        gen.random(int(chunk))
        n -= chunk
    return bg


def ssa_trajectory(rmat, nmat, rates, init, double horizon, seedseq):
    cdef int64_t[:, ::1] rm = np.ascontiguousarray(rmat, dtype=np.int64)
    cdef int64_t[:, ::1] nm = np.ascontiguousarray(nmat, dtype=np.int64)
    cdef double[::1] rt = np.ascontiguousarray(rates, dtype=np.float64)
    cdef int ns = rm.shape[1]
    cdef int nr = rm.shape[0]
    init_arr = np.ascontiguousarray(init, dtype=np.int64)
    cdef long cap = 4096
    cdef long nseg
    cdef int64_t draws = 0
    cdef bitgen_t* rng
    cdef int64_t[::1] x
    cdef double[::1] seg_t
    cdef int64_t[::1] seg_x
    cdef double[::1] props
    while True:
        bg = Philox(seedseq)
        rng = _get_bitgen(bg)
        x = init_arr.copy()
        seg_t_arr = np.empty(cap, dtype=np.float64)
        seg_x_arr = np.empty(cap * ns, dtype=np.int64)
        props_arr = np.empty(max(nr, 1), dtype=np.float64)
        seg_t = seg_t_arr
        seg_x = seg_x_arr
        props = props_arr
        draws = 0
        with nogil:
            nseg = _ssa(&seg_t[0], &seg_x[0], cap, ns, nr, &rm[0, 0], &nm[0, 0], &rt[0],
                        &x[0], &props[0], horizon, rng, &draws)
        if nseg >= 0:
            break
        cap *= 4
    times = seg_t_arr[1:nseg].copy()
    states = seg_x_arr[: nseg * ns].reshape(nseg, ns)[1:].copy()
    return times, states


def eval_at(compiled, seg_ts, seg_states, double horizon, double t):
    cdef _Program prog = _Program(compiled)
    seg_ts_arr = np.ascontiguousarray(seg_ts, dtype=np.float64)
    seg_x_arr = np.ascontiguousarray(seg_states, dtype=np.int64).reshape(len(seg_ts_arr), -1)
    cdef long nseg = seg_ts_arr.shape[0]
    cdef int ns = seg_x_arr.shape[1]
    cdef _Workspace ws = _Workspace(nseg + 2, ns, 1, compiled)
    cdef double[::1] st = seg_ts_arr
    cdef int64_t[:, ::1] sx = seg_x_arr
    cdef EvalCtx ctx
    prog.fill_ctx(&ctx, ws)
    bits = np.zeros(prog.n_formulas, dtype=np.uint8)
    cdef uint8_t[::1] bits_v = bits
    cdef int f, root
    cdef int bad = -1
    with nogil:
        _build_signals(&ctx, &st[0], &sx[0, 0], nseg, ns, horizon)
        for f in range(prog.n_formulas):
            root = prog.roots[f]
            if t > ctx.hv[root]:
                bad = f
                break
            bits_v[f] = _eval_point(&ctx, root, t)
    if bad >= 0:
        raise HorizonError(
            f"formula {compiled.names[bad]!r} evaluated at t={t} does not fit in "
            f"horizon {horizon}"
        )
    return bits


def smc_batch(rmat, nmat, rates, init, double horizon, compiled, long m, seedseq):
    cdef _Program prog = _Program(compiled)
    cdef int64_t[:, ::1] rm = np.ascontiguousarray(rmat, dtype=np.int64)
    cdef int64_t[:, ::1] nm = np.ascontiguousarray(nmat, dtype=np.int64)
    cdef double[::1] rt = np.ascontiguousarray(rates, dtype=np.float64)
    cdef int ns = rm.shape[1]
    cdef int nr = rm.shape[0]
    init_arr = np.ascontiguousarray(init, dtype=np.int64)
    cdef int64_t[::1] init_v = init_arr

    counts = np.zeros(compiled.pattern_count, dtype=np.int64)
    cdef int64_t[::1] counts_v = counts
    cdef int32_t[::1] roots = prog.roots

    cdef long cap = 4096
    cdef long start = 0
    cdef int64_t draws = 0, draws_at_start = 0
    cdef long idx, nseg = 1, overflow_at
    cdef int f, i, root, pattern, bad
    cdef bitgen_t* rng
    cdef EvalCtx ctx
    cdef int64_t[::1] x = init_arr.copy()
    cdef _Workspace ws
    cdef double[::1] st
    cdef int64_t[::1] sx

    bg = Philox(seedseq)
    while start < m:
        rng = _get_bitgen(bg)
        ws = _Workspace(cap, ns, nr, compiled)
        prog.fill_ctx(&ctx, ws)
        st = ws.seg_t
        sx = ws.seg_x
        bad = -1
        overflow_at = -1
        with nogil:
            for idx in range(start, m):
                draws_at_start = draws
                for i in range(ns):
                    x[i] = init_v[i]
                nseg = _ssa(&st[0], &sx[0], cap, ns, nr, &rm[0, 0], &nm[0, 0], &rt[0],
                            &x[0], &ws.props[0], horizon, rng, &draws)
                if nseg < 0:
                    overflow_at = idx
                    break
                _build_signals(&ctx, &st[0], &sx[0], nseg, ns, horizon)
                pattern = 0
                for f in range(prog.n_formulas):
                    root = roots[f]
                    if ctx.hv[root] < 0.0:
                        bad = f
                        break
                    if _eval_point(&ctx, root, 0.0):
                        pattern |= 1 << f
                if bad >= 0:
                    break
                counts_v[pattern] += 1
        if bad >= 0:
            raise HorizonError(
                f"formula {compiled.names[bad]!r} does not fit in horizon {horizon}"
            )
        if overflow_at < 0:
            break
        # grow and recreate the stream positioned at the overflowing
        # trajectory's first draw, then resume from it
        start = overflow_at
        cap *= 4
        draws = draws_at_start
        bg = _stream_at(seedseq, draws_at_start)
    return counts
