"""Pure-Python stabilization kernel and worklist schedulers.

This is the fallback twin of the compiled kernel in ``_ckernel``: identical
arithmetic (64-bit splitmix hashing, threshold decode) so both produce
bit-identical results.  Roughly two orders of magnitude slower; selected only
when the extension is unavailable or explicitly forced.

Site states: 0 empty, -1 sleeping (one particle), k >= 1 that many active
particles.  A site is unstable iff its state is >= 1.
"""

import heapq
from collections import deque

import numpy as np

from .instructions import GAMMA, MASK64, mix64

SLEEPING = -1

#: Scheduler policy codes shared with the compiled kernel.
POLICY_FIFO = 0
POLICY_LIFO = 1
POLICY_RANDOM = 2
POLICY_CYCLE = 3


class _SplitMixSequence:
    """Stateful splitmix64 used only for scheduler tie-breaking draws."""

    def __init__(self, seed):
        self.s = seed & MASK64

    def next_word(self):
        self.s = (self.s + GAMMA) & MASK64
        return mix64(self.s)


class FifoScheduler:
    """Queue order: sites are selected in insertion order."""

    def __init__(self, n_sites):
        self._q = deque()
        self._in = bytearray(n_sites)

    def push(self, i):
        if not self._in[i]:
            self._in[i] = 1
            self._q.append(i)

    def pop(self):
        i = self._q.popleft()
        self._in[i] = 0
        return i

    def __len__(self):
        return len(self._q)


class LifoScheduler:
    """Stack order: most recently inserted unstable site first."""

    def __init__(self, n_sites):
        self._q = []
        self._in = bytearray(n_sites)

    def push(self, i):
        if not self._in[i]:
            self._in[i] = 1
            self._q.append(i)

    def pop(self):
        i = self._q.pop()
        self._in[i] = 0
        return i

    def __len__(self):
        return len(self._q)


class RandomScheduler:
    """Uniform selection from the current unstable set (seeded)."""

    def __init__(self, n_sites, seed):
        self._arr = []
        self._pos = [-1] * n_sites
        self._rng = _SplitMixSequence(seed)

    def push(self, i):
        if self._pos[i] < 0:
            self._pos[i] = len(self._arr)
            self._arr.append(i)

    def pop(self):
        idx = self._rng.next_word() % len(self._arr)
        i = self._arr[idx]
        last = self._arr[-1]
        self._arr[idx] = last
        self._pos[last] = idx
        self._arr.pop()
        self._pos[i] = -1
        return i

    def __len__(self):
        return len(self._arr)


class CycleSweepScheduler:
    """First unstable site in cycle order C_0 -> C_N, lexicographic within a
    cycle; realized as a min-heap on the precomputed sweep rank."""

    def __init__(self, n_sites, cycle_pos):
        self._heap = []
        self._in = bytearray(n_sites)
        self._pos = cycle_pos

    def push(self, i):
        if not self._in[i]:
            self._in[i] = 1
            heapq.heappush(self._heap, (self._pos[i], i))

    def pop(self):
        _, i = heapq.heappop(self._heap)
        self._in[i] = 0
        return i

    def __len__(self):
        return len(self._heap)


def make_scheduler(policy, n_sites, cycle_pos=None, seed=0):
    if policy == POLICY_FIFO:
        return FifoScheduler(n_sites)
    if policy == POLICY_LIFO:
        return LifoScheduler(n_sites)
    if policy == POLICY_RANDOM:
        return RandomScheduler(n_sites, seed)
    if policy == POLICY_CYCLE:
        if cycle_pos is None:
            raise ValueError("cycle policy needs the sweep-rank table")
        return CycleSweepScheduler(n_sites, cycle_pos)
    raise ValueError(f"unknown policy code {policy}")


class PyEngineState:
    """Mutable per-run state; one instruction consumed per :meth:`step` call."""

    def __init__(self, state, neigh_table, keys, threshold, n_boundary):
        self.n = len(state)
        self.state = [int(v) for v in state]
        self.neigh = [tuple(int(v) for v in row) for row in neigh_table]
        self.keys = [int(v) for v in keys]
        self.threshold = int(threshold)
        self.odometer = [0] * self.n
        self.consumed = [0] * self.n
        self.nmoves = [[0, 0, 0, 0] for _ in range(self.n)]
        self.phi = [0] * n_boundary
        self.total = 0
        self.total_moves = 0
        self.total_sleeps = 0

    def step(self, i):
        """Consume the next instruction at unstable site i.

        Returns (code, dest, newly_unstable): code is -1 for sleep or the
        direction; dest is the neighbor table entry for moves (None for
        sleeps); newly_unstable says whether the destination site just
        became unstable.
        """
        c = self.state[i]
        if c < 1:
            raise ValueError(f"topple at stable site index {i} (state {c})")
        k = self.consumed[i] + 1
        self.consumed[i] = k
        self.total += 1
        z = (self.keys[i] + k * GAMMA) & MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        w = z ^ (z >> 31)
        if w < self.threshold:
            self.total_sleeps += 1
            if c == 1:
                self.state[i] = SLEEPING
            return -1, None, False
        d = w & 3
        self.odometer[i] += 1
        self.nmoves[i][d] += 1
        self.total_moves += 1
        self.state[i] = c - 1
        j = self.neigh[i][d]
        newly = False
        if j >= 0:
            sj = self.state[j]
            if sj == SLEEPING:
                self.state[j] = 2
                newly = True
            else:
                self.state[j] = sj + 1
                newly = sj == 0
        else:
            self.phi[-1 - j] += 1
        return d, j, newly


def stabilize_kernel(state, neigh_table, cycle_pos, keys, threshold,
                     policy, policy_seed, budget, n_boundary):
    """Run stabilization to completion or budget exhaustion.

    Returns (status, state, odometer, consumed, nmoves, phi, total,
    total_moves, total_sleeps) with numpy arrays; status 1 means the
    instruction budget was hit with unstable sites remaining.
    """
    st = PyEngineState(state, neigh_table, keys, threshold, n_boundary)
    sched = make_scheduler(policy, st.n, cycle_pos=cycle_pos, seed=policy_seed)
    for i in range(st.n):
        if st.state[i] >= 1:
            sched.push(i)

    budget = int(budget)
    step = st.step
    push = sched.push
    while len(sched) and st.total < budget:
        i = sched.pop()
        _, j, newly = step(i)
        if newly:
            push(j)
        if st.state[i] >= 1:
            push(i)

    status = 1 if len(sched) else 0
    return (
        status,
        np.array(st.state, dtype=np.int64),
        np.array(st.odometer, dtype=np.int64),
        np.array(st.consumed, dtype=np.int64),
        np.array(st.nmoves, dtype=np.int64),
        np.array(st.phi, dtype=np.int64),
        st.total,
        st.total_moves,
        st.total_sleeps,
    )
