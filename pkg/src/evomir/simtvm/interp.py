"""The SIMT interpreter loop.

Compiled with numba when available; with ``EVOMIR_DISABLE_JIT=1`` the very
same functions run as plain Python over numpy arrays.

Scheduling: blocks run one after another.  Inside a block the warps take
turns in index order, one warp-instruction per turn.  Within a warp the
active lanes execute in ascending lane order, so when several lanes store to
one address in the same turn the highest (warp, lane) pair lands last.
"""

import numpy as np

from .._jit import njit
from .lower import (K_REG, OP_ADD, OP_AND, OP_BARB, OP_BARW, OP_BID, OP_BR, OP_CONDBR,
                    OP_DIMB, OP_DIMG, OP_DIV, OP_EQ, OP_LANE, OP_LDG, OP_LDL, OP_LDS, OP_MAX,
                    OP_MIN, OP_MUL, OP_NE, OP_OR, OP_RAND, OP_REM, OP_RET, OP_SELECT, OP_SGE,
                    OP_SGT, OP_SHFL, OP_SHL, OP_SHR, OP_SLE, OP_SLT, OP_STG, OP_STL, OP_STS,
                    OP_SUB, OP_TID, OP_WARP, OP_XOR)

ST_COMPLETED, ST_TIMEOUT, ST_FAULT = 0, 1, 2
F_NONE, F_OOB, F_DIVZERO, F_DEADLOCK, F_STACK = 0, 1, 2, 3, 4
FAULT_NAMES = {F_OOB: "oob", F_DIVZERO: "divzero", F_DEADLOCK: "deadlock", F_STACK: "stack"}

W_RUNNING, W_PARKED, W_RETIRED = 0, 1, 2

TRACE_COLS = 6  # block, warp, mask, pc, opcode, cost


@njit
def wrap32(x):
    return ((x + 2147483648) & 0xFFFFFFFF) - 2147483648


@njit
def _mul32(x, c):
    # (x * c) mod 2**32 without overflowing int64; x, c < 2**32
    lo = x * (c & 0xFFFF)
    hi = ((x * (c >> 16)) & 0xFFFF) << 16
    return (lo + hi) & 0xFFFFFFFF


@njit
def mix32(x):
    """Bijective 32-bit integer hash (lowbias32)."""
    x &= 0xFFFFFFFF
    x ^= x >> 16
    x = _mul32(x, 0x7FEB352D)
    x ^= x >> 15
    x = _mul32(x, 0x846CA68B)
    x ^= x >> 16
    return x


@njit
def rand_value(seed, block, thread, counter):
    h = mix32((seed & 0xFFFFFFFF) ^ 0x9E3779B9)
    h = mix32(h ^ (block & 0xFFFFFFFF))
    h = mix32(h ^ (thread & 0xFFFFFFFF))
    h = mix32(h ^ (counter & 0xFFFFFFFF))
    return h & 0x7FFFFFFF


@njit
def alu(o, a, b):
    if o == OP_ADD:
        return wrap32(a + b)
    if o == OP_SLT:
        return 1 if a < b else 0
    if o == OP_SUB:
        return wrap32(a - b)
    if o == OP_MAX:
        return a if a > b else b
    if o == OP_MIN:
        return a if a < b else b
    if o == OP_AND:
        return a & b
    if o == OP_MUL:
        return wrap32(a * b)
    if o == OP_EQ:
        return 1 if a == b else 0
    if o == OP_NE:
        return 1 if a != b else 0
    if o == OP_SLE:
        return 1 if a <= b else 0
    if o == OP_SGT:
        return 1 if a > b else 0
    if o == OP_SGE:
        return 1 if a >= b else 0
    if o == OP_OR:
        return a | b
    if o == OP_XOR:
        return a ^ b
    if o == OP_SHL:
        return wrap32(a << (b & 31))
    if o == OP_SHR:
        return a >> (b & 31)
    if o == OP_DIV or o == OP_REM:
        # truncating division; the caller rules out b == 0
        q = abs(a) // abs(b)
        if (a < 0) != (b < 0):
            q = -q
        return wrap32(q) if o == OP_DIV else wrap32(a - q * b)
    return 0


@njit
def run(op, dst, okind, oval, reconv, cost,
        nblocks, tpb, ws, nregs, param_regs, param_vals,
        nlocal, gmem, gbase, gsize, sbase, ssize, stotal,
        seed, budget, trace, want_trace):
    """Execute the lowered kernel.  ``gmem`` is updated in place.

    Returns (status, fault_kind, fault_pc, total_cycles, max_warp_cycles,
    trace_len, per-pc execution counts).
    """
    n = op.shape[0]
    counts = np.zeros(n, np.int64)
    nwarps = tpb // ws
    full = np.int64(0)
    for lane in range(ws):
        full |= np.int64(1) << lane
    depth_cap = 2 * ws + 4
    st_pc = np.zeros((nwarps, depth_cap), np.int64)
    st_mask = np.zeros((nwarps, depth_cap), np.int64)
    st_rpc = np.zeros((nwarps, depth_cap), np.int64)
    depth = np.zeros(nwarps, np.int64)
    state = np.zeros(nwarps, np.int64)
    wcycles = np.zeros(nwarps, np.int64)
    park_pc = np.zeros(nwarps, np.int64)
    regs = np.zeros((tpb, nregs), np.int64)
    local = np.zeros((tpb, max(nlocal, 1)), np.int64)
    smem = np.zeros(max(stotal, 1), np.int64)
    rcount = np.zeros(tpb, np.int64)
    tmp = np.zeros(ws, np.int64)
    total = np.int64(0)
    max_wc = np.int64(0)
    tlen = 0
    tcap = trace.shape[0]

    for blk in range(nblocks):
        regs[:, :] = 0
        local[:, :] = 0
        smem[:] = 0
        rcount[:] = 0
        for t in range(tpb):
            for p in range(param_regs.shape[0]):
                regs[t, param_regs[p]] = param_vals[p]
        for w in range(nwarps):
            depth[w] = 1
            st_pc[w, 0] = 0
            st_mask[w, 0] = full
            st_rpc[w, 0] = -1
            state[w] = W_RUNNING
            wcycles[w] = 0
        live = nwarps

        while live > 0:
            progressed = False
            for w in range(nwarps):
                if state[w] != W_RUNNING:
                    continue
                progressed = True
                d = depth[w] - 1
                pc = st_pc[w, d]
                mask = st_mask[w, d]
                o = op[pc]
                c = cost[pc]
                wcycles[w] += c
                total += c
                counts[pc] += 1
                if wcycles[w] > max_wc:
                    max_wc = wcycles[w]
                if want_trace:
                    if tlen < tcap:
                        trace[tlen, 0] = blk
                        trace[tlen, 1] = w
                        trace[tlen, 2] = mask
                        trace[tlen, 3] = pc
                        trace[tlen, 4] = o
                        trace[tlen, 5] = c
                    tlen += 1
                if wcycles[w] > budget:
                    return ST_TIMEOUT, F_NONE, pc, total, max_wc, tlen, counts
                base = w * ws
                r = dst[pc]
                nxt = pc + 1
                k0 = okind[pc, 0]
                x0 = oval[pc, 0]
                k1 = okind[pc, 1]
                x1 = oval[pc, 1]
                k2 = okind[pc, 2]
                x2 = oval[pc, 2]

                if o == OP_CONDBR:
                    taken = np.int64(0)
                    for lane in range(ws):
                        if (mask >> lane) & 1:
                            if (regs[base + lane, x0] if k0 == K_REG else x0) != 0:
                                taken |= np.int64(1) << lane
                    other = mask & ~taken
                    tpc = x1
                    fpc = x2
                    if other == 0:
                        st_pc[w, d] = tpc
                    elif taken == 0:
                        st_pc[w, d] = fpc
                    else:
                        rp = reconv[pc]
                        if st_rpc[w, d] == rp:
                            # this entry's lanes already wait at rp in the parent
                            d -= 1
                        else:
                            st_pc[w, d] = rp
                        if d + 3 >= depth_cap:
                            return ST_FAULT, F_STACK, pc, total, max_wc, tlen, counts
                        if fpc != rp:
                            d += 1
                            st_pc[w, d] = fpc
                            st_mask[w, d] = other
                            st_rpc[w, d] = rp
                        if tpc != rp:
                            d += 1
                            st_pc[w, d] = tpc
                            st_mask[w, d] = taken
                            st_rpc[w, d] = rp
                    while d > 0 and st_pc[w, d] == st_rpc[w, d]:
                        d -= 1
                    depth[w] = d + 1
                    continue
                elif o == OP_BR:
                    st_pc[w, d] = x0
                    while d > 0 and st_pc[w, d] == st_rpc[w, d]:
                        d -= 1
                    depth[w] = d + 1
                    continue
                elif o == OP_RET:
                    d -= 1
                    if d < 0:
                        depth[w] = 0
                        state[w] = W_RETIRED
                        live -= 1
                    else:
                        while d > 0 and st_pc[w, d] == st_rpc[w, d]:
                            d -= 1
                        depth[w] = d + 1
                    continue
                elif o == OP_BARB:
                    state[w] = W_PARKED
                    park_pc[w] = pc
                elif o == OP_BARW:
                    pass
                elif o == OP_LDS or o == OP_LDG:
                    if o == OP_LDS:
                        lim = ssize[x0]
                        off = sbase[x0]
                    else:
                        lim = gsize[x0]
                        off = gbase[x0]
                    for lane in range(ws):
                        if (mask >> lane) & 1:
                            t = base + lane
                            idx = regs[t, x1] if k1 == K_REG else x1
                            if idx < 0 or idx >= lim:
                                return ST_FAULT, F_OOB, pc, total, max_wc, tlen, counts
                            if o == OP_LDS:
                                regs[t, r] = smem[off + idx]
                            else:
                                regs[t, r] = gmem[off + idx]
                elif o == OP_STS or o == OP_STG:
                    if o == OP_STS:
                        lim = ssize[x0]
                        off = sbase[x0]
                    else:
                        lim = gsize[x0]
                        off = gbase[x0]
                    for lane in range(ws):
                        if (mask >> lane) & 1:
                            t = base + lane
                            idx = regs[t, x1] if k1 == K_REG else x1
                            v = regs[t, x2] if k2 == K_REG else x2
                            if idx < 0 or idx >= lim:
                                return ST_FAULT, F_OOB, pc, total, max_wc, tlen, counts
                            if o == OP_STS:
                                smem[off + idx] = v
                            else:
                                gmem[off + idx] = v
                elif o == OP_LDL:
                    slot = x0
                    for lane in range(ws):
                        if (mask >> lane) & 1:
                            regs[base + lane, r] = local[base + lane, slot]
                elif o == OP_STL:
                    slot = x0
                    for lane in range(ws):
                        if (mask >> lane) & 1:
                            t = base + lane
                            local[t, slot] = (regs[t, x1] if k1 == K_REG else x1)
                elif o == OP_SHFL:
                    for lane in range(ws):
                        if (mask >> lane) & 1:
                            src = (regs[base + lane, x1] if k1 == K_REG else x1) % ws
                            if src < 0:
                                src += ws
                            tmp[lane] = (regs[base + src, x0] if k0 == K_REG else x0)
                    for lane in range(ws):
                        if (mask >> lane) & 1:
                            regs[base + lane, r] = tmp[lane]
                elif o == OP_RAND:
                    for lane in range(ws):
                        if (mask >> lane) & 1:
                            t = base + lane
                            regs[t, r] = rand_value(seed, blk, t, rcount[t])
                            rcount[t] += 1
                elif o == OP_LANE or o == OP_WARP or o == OP_TID or o == OP_BID \
                        or o == OP_DIMB or o == OP_DIMG:
                    for lane in range(ws):
                        if (mask >> lane) & 1:
                            if o == OP_LANE:
                                v = lane
                            elif o == OP_WARP:
                                v = w
                            elif o == OP_TID:
                                v = base + lane
                            elif o == OP_BID:
                                v = blk
                            elif o == OP_DIMB:
                                v = tpb
                            else:
                                v = nblocks
                            regs[base + lane, r] = v
                elif o == OP_SELECT:
                    for lane in range(ws):
                        if (mask >> lane) & 1:
                            t = base + lane
                            if (regs[t, x0] if k0 == K_REG else x0) != 0:
                                regs[t, r] = (regs[t, x1] if k1 == K_REG else x1)
                            else:
                                regs[t, r] = (regs[t, x2] if k2 == K_REG else x2)
                else:
                    # two-operand arithmetic, logic and comparisons
                    for lane in range(ws):
                        if (mask >> lane) & 1:
                            t = base + lane
                            a = regs[t, x0] if k0 == K_REG else x0
                            b = regs[t, x1] if k1 == K_REG else x1
                            if (o == OP_DIV or o == OP_REM) and b == 0:
                                return ST_FAULT, F_DIVZERO, pc, total, max_wc, tlen, counts
                            regs[t, r] = alu(o, a, b)
                st_pc[w, d] = nxt

            if not progressed:
                # every live warp is parked on bar.block
                if live < nwarps:
                    for w in range(nwarps):
                        if state[w] == W_PARKED:
                            return ST_FAULT, F_DEADLOCK, park_pc[w], total, max_wc, tlen, counts
                for w in range(nwarps):
                    if state[w] == W_PARKED:
                        state[w] = W_RUNNING

    return ST_COMPLETED, F_NONE, -1, total, max_wc, tlen, counts
