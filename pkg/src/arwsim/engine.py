"""Abelian stabilization on a finite box with killing at the boundary.

Repeatedly applies per-site instructions at unstable sites until every
remaining particle sleeps, producing the movement odometer M, the sleep
indicator field S and the boundary exit measure Phi.  The terminal triple is
independent of the toppling order, so the scheduler policy only affects
speed, never results.

The inner loop runs on a compiled kernel when available; set
``ARWSIM_PURE_PYTHON=1`` to force the pure-Python twin (same bit-exact
output, much slower).
"""

import os
import warnings
from dataclasses import dataclass

import numpy as np

from . import _pykernel
from ._pykernel import (
    POLICY_CYCLE,
    POLICY_FIFO,
    POLICY_LIFO,
    POLICY_RANDOM,
    SLEEPING,
    CycleSweepScheduler,
    FifoScheduler,
    LifoScheduler,
    PyEngineState,
    RandomScheduler,
    make_scheduler,
)
from .instructions import (
    code_at,
    derive_seed,
    site_keys_for_box,
    sleep_threshold,
    validate_lambda,
)
from .lattice import box

if os.environ.get("ARWSIM_PURE_PYTHON"):
    _kernel = _pykernel
    KERNEL = "python"
else:
    try:
        from . import _ckernel as _kernel
        KERNEL = "cython"
    except ImportError:
        _kernel = _pykernel
        KERNEL = "python"

POLICIES = {
    "fifo": POLICY_FIFO,
    "lifo": POLICY_LIFO,
    "random": POLICY_RANDOM,
    "cycle": POLICY_CYCLE,
}

_TAG_POLICY = 0x504F4C49  # scheduler draws must not touch instruction streams


class BudgetExceeded(RuntimeError):
    """Instruction cap hit before stabilization; carries the partial result."""

    def __init__(self, partial):
        super().__init__(
            f"instruction budget of {partial.params.budget} exhausted with "
            f"{int(np.sum(partial.final_config >= 1))} unstable sites left"
        )
        self.partial = partial


@dataclass(frozen=True)
class SimParams:
    """Parameters of one stabilization run (or one replica family).

    ``init`` is an initial-condition descriptor consumed by the experiment
    harness; :func:`stabilize` itself takes the realized configuration.
    """

    N: int
    lam: float
    master_seed: int
    init: object = None
    scheduler: str = "lifo"
    budget: int = 10**9
    replicas: int = 1

    def __post_init__(self):
        if self.N < 0:
            raise ValueError(f"box radius must be >= 0, got {self.N}")
        if self.scheduler not in POLICIES:
            raise ValueError(f"unknown scheduler {self.scheduler!r}")
        if self.budget < 1:
            raise ValueError("instruction budget must be positive")
        if self.replicas < 1:
            raise ValueError("replica count must be >= 1")
        validate_lambda(self.lam)


@dataclass
class StabilizationResult:
    """Terminal fields of one run.  All arrays are flat in the box's
    lexicographic site order; ``exit_measure`` follows the boundary order."""

    params: SimParams
    odometer: np.ndarray
    sleep_field: np.ndarray
    exit_measure: np.ndarray
    final_config: np.ndarray
    consumed: np.ndarray
    move_counts: np.ndarray
    total_instructions: int
    total_movements: int
    total_sleeps: int
    initial_particles: int

    @property
    def box(self):
        return box(self.params.N)

    @property
    def sleepers(self):
        """S(B_N): number of sleeping particles after stabilization."""
        return int(self.sleep_field.sum())

    @property
    def exited(self):
        return int(self.exit_measure.sum())

    def odometer_grid(self):
        """Odometer reshaped to (2N+1, 2N+1); axis 0 is x, axis 1 is y."""
        side = self.box.side
        return self.odometer.reshape(side, side)

    def summary(self):
        return {
            "N": self.params.N,
            "lambda": self.params.lam,
            "scheduler": self.params.scheduler,
            "initial_particles": self.initial_particles,
            "sleepers": self.sleepers,
            "exited": self.exited,
            "odometer_total": int(self.odometer.sum()),
            "instructions": self.total_instructions,
        }


def total_particles(state):
    """Particle count of a configuration (a sleeping site holds exactly one)."""
    state = np.asarray(state)
    return int(state[state >= 1].sum() + np.count_nonzero(state == SLEEPING))


def stabilize(eta0, params):
    """Stabilize configuration ``eta0`` on B_N under ``params``.

    ``eta0`` is a flat int array in the box's site order (0 empty, -1
    sleeping, k >= 1 active count).  Raises :class:`BudgetExceeded` when the
    instruction cap is hit; the exception carries the partial state for
    diagnosis.
    """
    b = box(params.N)
    eta0 = np.asarray(eta0, dtype=np.int64)
    if eta0.shape != (b.n_sites,):
        raise ValueError(f"configuration shape {eta0.shape} does not match "
                         f"box with {b.n_sites} sites")
    n0 = total_particles(eta0)
    if n0 > b.n_sites:
        # constant message so the default warning filter dedups repeats
        warnings.warn(
            "initial particle count exceeds |B_N|; dynamics are "
            "well-defined but outside the tail bound's hypothesis",
            stacklevel=2,
        )

    keys = site_keys_for_box(params.master_seed, b)
    threshold = sleep_threshold(params.lam)
    policy = POLICIES[params.scheduler]
    policy_seed = derive_seed(params.master_seed, _TAG_POLICY)

    (status, state, odometer, consumed, nmoves, phi,
     total, tmoves, tsleeps) = _kernel.stabilize_kernel(
        eta0, b.neigh_table, b.cycle_order_pos, keys, threshold,
        policy, policy_seed, params.budget, b.n_boundary)

    result = StabilizationResult(
        params=params,
        odometer=odometer,
        sleep_field=(state == SLEEPING).astype(np.int64),
        exit_measure=phi,
        final_config=state,
        consumed=consumed,
        move_counts=nmoves,
        total_instructions=int(total),
        total_movements=int(tmoves),
        total_sleeps=int(tsleeps),
        initial_particles=n0,
    )
    if status != 0:
        raise BudgetExceeded(result)
    return result


@dataclass(frozen=True)
class TransitionRecord:
    """What one consumed instruction did."""

    site: tuple
    kind: str                      # 'sleep' or 'move'
    direction: int | None = None
    dest: tuple | None = None
    dest_is_boundary: bool = False
    fell_asleep: bool = False
    woke_destination: bool = False


class EngineState:
    """Step-by-step engine exposing single-instruction topples.

    Used for fine-grained inspection and scheduler-level tests; bulk runs go
    through :func:`stabilize` and the selected kernel.
    """

    def __init__(self, eta0, params):
        self.params = params
        self.box = box(params.N)
        keys = site_keys_for_box(params.master_seed, self.box)
        self._st = PyEngineState(
            np.asarray(eta0, dtype=np.int64),
            self.box.neigh_table,
            keys,
            sleep_threshold(params.lam),
            self.box.n_boundary,
        )

    @property
    def state(self):
        return np.array(self._st.state, dtype=np.int64)

    @property
    def odometer(self):
        return np.array(self._st.odometer, dtype=np.int64)

    @property
    def exit_measure(self):
        return np.array(self._st.phi, dtype=np.int64)

    def unstable_sites(self):
        return [self.box.sites[i] for i in range(self._st.n)
                if self._st.state[i] >= 1]

    def topple(self, site):
        """Consume one instruction at an unstable site.

        Rejects stable sites: the scheduler must never select them.
        """
        i = self.box.site_index(site)
        if self._st.state[i] < 1:
            raise ValueError(f"cannot topple stable site {site} "
                             f"(state {self._st.state[i]})")
        # Peek the upcoming instruction (streams are pure) to capture the
        # destination's prior state for the record.
        peek = code_at(self._st.keys[i], self._st.consumed[i] + 1,
                       self._st.threshold)
        was_sleeping = False
        if peek >= 0:
            j = self._st.neigh[i][peek]
            was_sleeping = j >= 0 and self._st.state[j] == SLEEPING
        code, j, _ = self._st.step(i)
        if code == -1:
            return TransitionRecord(site, "sleep",
                                    fell_asleep=self._st.state[i] == SLEEPING)
        if j >= 0:
            return TransitionRecord(site, "move", direction=code,
                                    dest=self.box.sites[j],
                                    woke_destination=was_sleeping)
        return TransitionRecord(site, "move", direction=code,
                                dest=self.box.boundary_sites[-1 - j],
                                dest_is_boundary=True)
