"""Monte Carlo harness: sleeping-particle tails, density sweeps, and the
heuristic critical-density estimate.

Replica seeds are mixed from (master seed, replica index) through the same
hash family as the instruction streams, so replicas are independent and the
whole experiment is reproducible from one integer.  Statistics are
accumulated in replica order, so results do not depend on execution order.

The critical-density estimator is EXPLICITLY HEURISTIC: it bisects the
finite-volume retained-particle fraction, which is a desk-scale surrogate,
not the rigorous infinite-volume criterion.  Its outputs carry a HEURISTIC
label everywhere.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .balance import DomainError, chernoff_bound, verify_all
from .engine import BudgetExceeded, SimParams, stabilize
from .instructions import derive_seed, mix64_array, site_keys_for_box
from .lattice import box

_TAG_REPLICA = 0x5245504C
_TAG_INIT = 0x494E4954

ZETA_C_LABEL = "HEURISTIC"


class VerificationError(AssertionError):
    """A replica failed an exact balance check; indicates an engine bug."""


class NoBracket(RuntimeError):
    """The retained-fraction statistic does not cross 1/2 on the unit
    interval; carries the evaluations made."""

    def __init__(self, message, evaluations):
        super().__init__(message)
        self.evaluations = evaluations


@dataclass(frozen=True)
class InitialCondition:
    """Descriptor of the initial particle law; realized by sample_initial."""

    kind: str                 # full | bernoulli | poisson | single | explicit
    zeta: float = 0.0
    sites: tuple = ()         # explicit: ((x, y, count), ...)

    def __post_init__(self):
        if self.kind not in ("full", "bernoulli", "poisson", "single",
                             "explicit"):
            raise ValueError(f"unknown initial condition {self.kind!r}")
        if self.kind == "bernoulli" and not 0.0 <= self.zeta <= 1.0:
            raise ValueError("bernoulli density must be in [0, 1]")
        if self.kind == "poisson" and self.zeta < 0.0:
            raise ValueError("poisson density must be >= 0")

    def describe(self):
        if self.kind in ("bernoulli", "poisson"):
            return {"kind": self.kind, "zeta": self.zeta}
        if self.kind == "explicit":
            return {"kind": self.kind, "sites": [list(s) for s in self.sites]}
        return {"kind": self.kind}


def _unit_uniforms(seed, b):
    """One float in [0, 1) per site, from the first word of a dedicated
    per-site stream."""
    keys = site_keys_for_box(seed, b)
    w = mix64_array(keys + np.uint64(0x9E3779B97F4A7C15))
    return (w >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _poisson_inverse(u, zeta):
    """Poisson(zeta) quantile of u by inversion; exact sequential search."""
    p = math.exp(-zeta)
    cdf = p
    k = 0
    # beyond mean + 12 sigma the residual mass is < 1e-30; clamp there
    kmax = int(zeta + 12.0 * math.sqrt(zeta + 1.0) + 50.0)
    while u >= cdf and k < kmax:
        k += 1
        p *= zeta / k
        cdf += p
    return k


def sample_initial(init, b, seed):
    """Realize an initial configuration (all particles active) on a box."""
    state = np.zeros(b.n_sites, dtype=np.int64)
    if init.kind == "full":
        state[:] = 1
    elif init.kind == "single":
        state[b.site_index((0, 0))] = 1
    elif init.kind == "bernoulli":
        if init.zeta > 0.0:
            u = _unit_uniforms(seed, b)
            state[u < init.zeta] = 1
    elif init.kind == "poisson":
        if init.zeta > 0.0:
            u = _unit_uniforms(seed, b)
            state[:] = [_poisson_inverse(float(v), init.zeta) for v in u]
    else:
        for x, y, count in init.sites:
            if not b.contains((x, y)):
                raise ValueError(f"site ({x}, {y}) outside the box")
            if count < 0:
                raise ValueError("explicit particle counts must be >= 0")
            state[b.site_index((x, y))] = count
    return state


def replica_seed(master_seed, index):
    """Per-replica master seed; distinct streams for distinct indices."""
    return derive_seed(master_seed, _TAG_REPLICA, index)


def run_replica(params, index, verify=False):
    """Sample the initial condition and stabilize one replica."""
    seed = replica_seed(params.master_seed, index)
    b = box(params.N)
    eta0 = sample_initial(params.init, b, derive_seed(seed, _TAG_INIT))
    try:
        result = stabilize(eta0, replace(params, master_seed=seed))
    except BudgetExceeded as exc:
        exc.replica = index
        raise
    if verify:
        for report in verify_all(eta0, result):
            if not report.passed:
                raise VerificationError(
                    f"replica {index}: {report.check} residual "
                    f"{report.max_abs_residual()}")
    return eta0, result


def wilson_interval(successes, trials, z=1.96):
    """Score interval for a binomial proportion (95% by default); preferred
    over the Wald interval for small tail probabilities."""
    if trials <= 0:
        raise ValueError("need at least one trial")
    p = successes / trials
    zz = z * z / trials
    center = (p + zz / 2.0) / (1.0 + zz)
    half = z * math.sqrt(p * (1.0 - p) / trials + zz / (4.0 * trials)) / (1.0 + zz)
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class TailEstimate:
    """Monte Carlo estimate of P(S(B_N) >= rho |B_N|)."""

    rho: float
    p_hat: float
    hits: int
    replicas: int
    wilson_lo: float
    wilson_hi: float
    chernoff_log_bound: float | None
    sleeper_counts: tuple


def estimate_tail(params, rho, verify_every=0):
    """Estimate the sleeping-particle tail probability over replicas.

    Attaches the large-deviation log-bound for side-by-side reporting when
    rho is above the per-instruction sleep mean (None when vacuous); the
    bound concerns the sleep-flag sum, which dominates S(B_N).
    """
    if rho <= 0.0:
        raise ValueError(f"rho must be > 0, got {rho}")
    b = box(params.N)
    threshold = rho * b.n_sites
    counts = []
    hits = 0
    for r in range(params.replicas):
        _, result = run_replica(
            params, r, verify=verify_every and r % verify_every == 0)
        s = result.sleepers
        counts.append(s)
        if s >= threshold:
            hits += 1
    lo, hi = wilson_interval(hits, params.replicas)
    try:
        log_bound = chernoff_bound(rho, params.lam, b.n_sites).log
    except DomainError:
        log_bound = None
    return TailEstimate(
        rho=rho, p_hat=hits / params.replicas, hits=hits,
        replicas=params.replicas, wilson_lo=lo, wilson_hi=hi,
        chernoff_log_bound=log_bound, sleeper_counts=tuple(counts))


@dataclass(frozen=True)
class DensityCurvePoint:
    lam: float
    zeta: float
    N: int
    replicas: int
    mean_density: float
    std_error: float


def density_curve(lambda_grid, zeta_grid, N, replicas, master_seed,
                  scheduler="lifo", budget=10**9, verify_every=0):
    """Mean sleeping density over a (lambda, zeta) grid, sorted by (lambda,
    zeta).  Replica seeds are shared across grid points, which couples the
    runs and sharpens monotonicity comparisons."""
    if not lambda_grid or not zeta_grid:
        raise ValueError("grids must be nonempty")
    b = box(N)
    points = []
    for lam in sorted(lambda_grid):
        for zeta in sorted(zeta_grid):
            params = SimParams(
                N=N, lam=lam, master_seed=master_seed,
                init=InitialCondition("poisson", zeta=zeta),
                scheduler=scheduler, budget=budget, replicas=replicas)
            dens = np.empty(replicas, dtype=np.float64)
            for r in range(replicas):
                _, result = run_replica(
                    params, r, verify=verify_every and r % verify_every == 0)
                dens[r] = result.sleepers / b.n_sites
            se = (float(dens.std(ddof=1)) / math.sqrt(replicas)
                  if replicas > 1 else 0.0)
            points.append(DensityCurvePoint(
                lam=lam, zeta=zeta, N=N, replicas=replicas,
                mean_density=float(dens.mean()), std_error=se))
    return points


@dataclass(frozen=True)
class ZetaCEstimate:
    """Bracketing interval for the critical density; HEURISTIC by
    construction (finite volume, retained-fraction crossing)."""

    lam: float
    N: int
    replicas: int
    lo: float
    hi: float
    evaluations: tuple
    label: str = ZETA_C_LABEL

    @property
    def midpoint(self):
        return 0.5 * (self.lo + self.hi)


def _retained_fraction(lam, N, zeta, replicas, master_seed, scheduler,
                       budget, verify_every=0):
    """Pooled fraction of initial particles still present (asleep) after
    stabilization, over all replicas."""
    params = SimParams(
        N=N, lam=lam, master_seed=master_seed,
        init=InitialCondition("poisson", zeta=zeta),
        scheduler=scheduler, budget=budget, replicas=replicas)
    total_particles = 0
    total_sleepers = 0
    for r in range(replicas):
        _, result = run_replica(
            params, r, verify=verify_every and r % verify_every == 0)
        total_particles += result.initial_particles
        total_sleepers += result.sleepers
    if total_particles == 0:
        return 0.0, 0, 0
    return total_sleepers / total_particles, total_particles, total_sleepers


def estimate_zeta_c(lam, N, replicas, tolerance, master_seed,
                    scheduler="lifo", budget=10**9, verify_every=0):
    """Bisect the density at which the retained-particle fraction crosses
    1/2; returns a bracketing interval of width <= tolerance.

    HEURISTIC: a finite-volume surrogate, not the rigorous fixation
    criterion.  Raises :class:`NoBracket` when the statistic stays on one
    side of 1/2 over the whole density range (for example at lam = 0, where
    nothing ever sleeps).
    """
    if tolerance <= 0.0:
        raise ValueError(f"tolerance must be > 0, got {tolerance}")
    b = box(N)
    evaluations = []

    def f(zeta):
        frac, particles, sleepers = _retained_fraction(
            lam, N, zeta, replicas, master_seed, scheduler, budget,
            verify_every)
        evaluations.append(
            {"zeta": zeta, "retained_fraction": frac,
             "particles": particles, "sleepers": sleepers})
        return frac

    # The statistic is undefined at zeta = 0 (no particles); start the
    # bracket at the smallest resolvable density, about one particle.
    lo = 1.0 / b.n_sites
    hi = 1.0
    if f(lo) <= 0.5:
        raise NoBracket(
            "retained fraction <= 1/2 even at minimal density", evaluations)
    if f(hi) > 0.5:
        raise NoBracket(
            "retained fraction > 1/2 even at density 1", evaluations)
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.5:
            lo = mid
        else:
            hi = mid
    return ZetaCEstimate(lam=lam, N=N, replicas=replicas, lo=lo, hi=hi,
                         evaluations=tuple(evaluations))


def single_particle_oracle(lam, N, tol=1e-12, max_sweeps=10**7):
    """Sleep probability of a lone particle started at the origin.

    Solves the discrete boundary-value problem for the sleep probability
    field v (v = lam/(1+lam) + (1/(1+lam)) avg of neighbors, v = 0 outside
    the box) by Gauss-Seidel sweeps; the system is strictly diagonally
    dominant, so the iteration converges for every lam >= 0.  Equivalent to
    1 - u(origin) for the exit-probability field u with u = 1 outside.
    """
    if lam < 0:
        raise ValueError(f"sleep rate must be >= 0, got {lam}")
    if lam == 0.0:
        return 0.0
    b = box(N)
    q = lam / (1.0 + lam)
    c = 0.25 / (1.0 + lam)
    v = [0.0] * b.n_sites
    neigh = [tuple(int(j) for j in row if j >= 0) for row in b.neigh_table]
    for _ in range(max_sweeps):
        delta = 0.0
        for i in range(b.n_sites):
            acc = 0.0
            for j in neigh[i]:
                acc += v[j]
            new = q + c * acc
            diff = abs(new - v[i])
            if diff > delta:
                delta = diff
            v[i] = new
        if delta <= 0.25 * tol and _gs_residual(v, neigh, q, c) <= tol:
            break
    else:
        raise RuntimeError("Gauss-Seidel failed to reach tolerance")
    return v[b.site_index((0, 0))]


def _gs_residual(v, neigh, q, c):
    """Max-norm defect of the sleep-probability fixed point equations."""
    worst = 0.0
    for i, nbrs in enumerate(neigh):
        acc = 0.0
        for j in nbrs:
            acc += v[j]
        r = abs(v[i] - (q + c * acc))
        if r > worst:
            worst = r
    return worst
