"""Activated random walk stabilization lab on finite boxes of Z^2.

Active particles walk to uniformly random neighbors and attempt to fall
asleep with probability lam/(1+lam) per instruction; sleepers wake when an
active particle arrives; walks are killed at the box boundary.  The engine
consumes deterministic per-site instruction streams, so the terminal
odometer, sleep field and exit measure do not depend on the toppling order.

``arwsim.engine.KERNEL`` reports whether the compiled kernel or the
pure-Python fallback is running the inner loop.
"""

__version__ = "0.1.0"

from .engine import (  # noqa: F401
    KERNEL,
    BudgetExceeded,
    SimParams,
    StabilizationResult,
    stabilize,
)
from .experiments import (  # noqa: F401
    InitialCondition,
    NoBracket,
    density_curve,
    estimate_tail,
    estimate_zeta_c,
    sample_initial,
    single_particle_oracle,
)
from .instructions import GENERATOR_ID, InstructionStream  # noqa: F401
from .lattice import Box, box, neighbors  # noqa: F401
