# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled stabilization kernel.

Semantics mirror ``arwsim._pykernel`` instruction for instruction; the two
must stay bit-identical (enforced by the parity test suite).
"""

import numpy as np

ctypedef unsigned long long u64
ctypedef long long i64

cdef u64 _GAMMA = 0x9E3779B97F4A7C15ULL


cdef inline u64 _mix64(u64 z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef struct WL:
    i64 head      # fifo ring head
    i64 tail      # fifo ring tail
    i64 size      # entries (lifo/random/heap: also top-of-structure)
    i64 cap       # fifo ring capacity
    u64 rng       # random-policy draw state
    int policy


cdef inline void _push(WL* q, i64 i, i64* buf, i64* posin,
                       unsigned char* inlist, const i64* cpos) noexcept nogil:
    cdef i64 pos, parent, tmp
    if q.policy == 0:                       # fifo
        if not inlist[i]:
            inlist[i] = 1
            buf[q.tail] = i
            q.tail += 1
            if q.tail == q.cap:
                q.tail = 0
            q.size += 1
    elif q.policy == 1:                     # lifo
        if not inlist[i]:
            inlist[i] = 1
            buf[q.size] = i
            q.size += 1
    elif q.policy == 2:                     # random
        if posin[i] < 0:
            posin[i] = q.size
            buf[q.size] = i
            q.size += 1
    else:                                   # cycle sweep: min-heap on rank
        if not inlist[i]:
            inlist[i] = 1
            pos = q.size
            buf[pos] = i
            q.size += 1
            while pos > 0:
                parent = (pos - 1) >> 1
                if cpos[buf[parent]] <= cpos[buf[pos]]:
                    break
                tmp = buf[parent]
                buf[parent] = buf[pos]
                buf[pos] = tmp
                pos = parent


cdef inline i64 _pop(WL* q, i64* buf, i64* posin,
                     unsigned char* inlist, const i64* cpos) noexcept nogil:
    cdef i64 i, idx, last, pos, child, tmp
    if q.policy == 0:
        i = buf[q.head]
        q.head += 1
        if q.head == q.cap:
            q.head = 0
        q.size -= 1
        inlist[i] = 0
        return i
    elif q.policy == 1:
        q.size -= 1
        i = buf[q.size]
        inlist[i] = 0
        return i
    elif q.policy == 2:
        q.rng += _GAMMA
        idx = <i64>(_mix64(q.rng) % <u64>q.size)
        i = buf[idx]
        q.size -= 1
        last = buf[q.size]
        buf[idx] = last
        posin[last] = idx
        posin[i] = -1
        return i
    else:
        i = buf[0]
        inlist[i] = 0
        q.size -= 1
        buf[0] = buf[q.size]
        pos = 0
        while True:
            child = 2 * pos + 1
            if child >= q.size:
                break
            if child + 1 < q.size and cpos[buf[child + 1]] < cpos[buf[child]]:
                child += 1
            if cpos[buf[pos]] <= cpos[buf[child]]:
                break
            tmp = buf[pos]
            buf[pos] = buf[child]
            buf[child] = tmp
            pos = child
        return i


def stabilize_kernel(state_in, neigh_table, cycle_pos, keys, threshold,
                     policy, policy_seed, budget, n_boundary):
    """Compiled counterpart of ``_pykernel.stabilize_kernel``; same contract."""
    state_arr = np.array(state_in, dtype=np.int64)
    cdef Py_ssize_t n = state_arr.shape[0]

    odometer_arr = np.zeros(n, dtype=np.int64)
    consumed_arr = np.zeros(n, dtype=np.int64)
    nmoves_arr = np.zeros((n, 4), dtype=np.int64)
    phi_arr = np.zeros(int(n_boundary), dtype=np.int64)
    if n == 0:
        return 0, state_arr, odometer_arr, consumed_arr, nmoves_arr, phi_arr, 0, 0, 0

    cdef i64[::1] st = state_arr
    cdef const i64[:, ::1] neigh = np.ascontiguousarray(neigh_table, dtype=np.int64)
    cdef const i64[::1] cpos_mv = np.ascontiguousarray(cycle_pos, dtype=np.int64)
    cdef const u64[::1] key = np.ascontiguousarray(keys, dtype=np.uint64)
    cdef i64[::1] odo = odometer_arr
    cdef i64[::1] cons = consumed_arr
    cdef i64[:, ::1] nm = nmoves_arr
    cdef i64[::1] phi = phi_arr

    buf_arr = np.empty(n + 1, dtype=np.int64)
    posin_arr = np.full(n, -1, dtype=np.int64)
    inlist_arr = np.zeros(n, dtype=np.uint8)
    cdef i64[::1] buf_mv = buf_arr
    cdef i64[::1] posin_mv = posin_arr
    cdef unsigned char[::1] inlist_mv = inlist_arr

    cdef i64* buf = &buf_mv[0]
    cdef i64* posin = &posin_mv[0]
    cdef unsigned char* inlist = &inlist_mv[0]
    cdef const i64* cpos = &cpos_mv[0]

    cdef WL q
    q.head = 0
    q.tail = 0
    q.size = 0
    q.cap = n + 1
    q.rng = <u64>(int(policy_seed) & ((1 << 64) - 1))
    q.policy = int(policy)

    cdef u64 T = <u64>(int(threshold) & ((1 << 64) - 1))
    cdef i64 B = int(budget)
    cdef i64 total = 0, tmoves = 0, tsleeps = 0
    cdef i64 i, j, c, k, sj
    cdef u64 w
    cdef int d

    with nogil:
        for i in range(n):
            if st[i] >= 1:
                _push(&q, i, buf, posin, inlist, cpos)

        while q.size > 0 and total < B:
            i = _pop(&q, buf, posin, inlist, cpos)
            c = st[i]
            k = cons[i] + 1
            cons[i] = k
            total += 1
            w = _mix64(key[i] + <u64>k * _GAMMA)
            if w < T:
                tsleeps += 1
                if c == 1:
                    st[i] = -1
                else:
                    _push(&q, i, buf, posin, inlist, cpos)
            else:
                d = <int>(w & 3)
                odo[i] += 1
                nm[i, d] += 1
                tmoves += 1
                st[i] = c - 1
                j = neigh[i, d]
                if j >= 0:
                    sj = st[j]
                    if sj == -1:
                        st[j] = 2
                        _push(&q, j, buf, posin, inlist, cpos)
                    else:
                        st[j] = sj + 1
                        if sj == 0:
                            _push(&q, j, buf, posin, inlist, cpos)
                else:
                    phi[-1 - j] += 1
                if st[i] >= 1:
                    _push(&q, i, buf, posin, inlist, cpos)

    cdef int status = 1 if q.size > 0 else 0
    return (status, state_arr, odometer_arr, consumed_arr, nmoves_arr,
            phi_arr, int(total), int(tmoves), int(tsleeps))
