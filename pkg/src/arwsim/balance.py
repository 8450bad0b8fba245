"""Exact accounting checks on stabilization outputs.

Every particle that ever visits a site either moves on or stays asleep, so
for each interior site

    eta0(x) + sum_{y ~ x} n_{y,x}(m_y) = m_x + s_x

and for each boundary site the inflow from its unique interior neighbor
equals the exit count there.  Engine outputs satisfy both identities with
zero residual; the verifiers here recompute them in exact integer
arithmetic, either from the engine's per-direction counters or by re-scanning
the instruction streams (the cross-check that catches counter drift).

Also hosts the Bernoulli KL divergence and the large-deviation bound used
when reporting sleeping-particle tails.
"""

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .engine import POLICIES, SLEEPING, stabilize
from .instructions import InstructionStream, chi_field, movement_counts
from .lattice import box


class ShapeMismatch(ValueError):
    """Field shapes do not match the ambient box."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of the formula."""


def particle_counts(state):
    """Particle count per site of a configuration (sleeping site holds 1)."""
    state = np.asarray(state, dtype=np.int64)
    return np.where(state == SLEEPING, 1, state)


@dataclass(frozen=True)
class FieldTuple:
    """Deterministic (m, s, phi) fields to be checked against the identities."""

    m: np.ndarray
    s: np.ndarray
    phi: np.ndarray

    @classmethod
    def from_result(cls, result):
        return cls(
            m=result.odometer.copy(),
            s=result.sleep_field.copy(),
            phi=result.exit_measure.copy(),
        )

    def validate_shapes(self, b):
        if self.m.shape != (b.n_sites,) or self.s.shape != (b.n_sites,):
            raise ShapeMismatch(
                f"interior fields must have shape ({b.n_sites},); got "
                f"m{self.m.shape}, s{self.s.shape}")
        if self.phi.shape != (b.n_boundary,):
            raise ShapeMismatch(
                f"phi must have shape ({b.n_boundary},), got {self.phi.shape}")


@dataclass
class BalanceReport:
    """Residuals of one check; pass means every residual is exactly zero."""

    check: str
    passed: bool
    residuals: np.ndarray
    labels: list

    def max_abs_residual(self):
        return int(np.abs(self.residuals).max()) if self.residuals.size else 0

    def failures(self):
        bad = np.nonzero(self.residuals != 0)[0]
        return [(self.labels[i], int(self.residuals[i])) for i in bad]

    def to_json(self, max_failures=1000):
        doc = {
            "check": self.check,
            "pass": bool(self.passed),
            "n_checked": int(self.residuals.size),
            "max_abs_residual": self.max_abs_residual(),
        }
        if not self.passed:
            fails = self.failures()
            doc["failures"] = [
                {"site": list(site), "residual": r}
                for site, r in fails[:max_failures]
            ]
            if len(fails) > max_failures:
                doc["failures_truncated"] = True
        return json.dumps(doc, sort_keys=True)


def _direction_counts(fields, b, counts, master_seed, lam):
    """Per-site, per-direction movement counts n_{y,.}(m_y).

    Either taken from the engine's incremental counters or re-derived from
    the raw streams for the deterministic field m.
    """
    if counts is not None:
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (b.n_sites, 4):
            raise ShapeMismatch(f"counts must have shape ({b.n_sites}, 4)")
        return counts
    if master_seed is None or lam is None:
        raise ValueError("re-scan mode needs master_seed and lam")
    out = np.zeros((b.n_sites, 4), dtype=np.int64)
    for i, site in enumerate(b.sites):
        stream = InstructionStream(master_seed, site, lam)
        out[i] = movement_counts(stream, int(fields.m[i]))
    return out


def _inflows(fields, b, counts):
    """Accumulate inflow at interior sites and at boundary sites."""
    interior = np.zeros(b.n_sites, dtype=np.int64)
    bound = np.zeros(b.n_boundary, dtype=np.int64)
    for d in range(4):
        dest = b.neigh_table[:, d]
        inside = dest >= 0
        np.add.at(interior, dest[inside], counts[inside, d])
        np.add.at(bound, -1 - dest[~inside], counts[~inside, d])
    return interior, bound


def verify_mass_balance(eta0, fields, b, *, counts=None,
                        master_seed=None, lam=None):
    """Check the per-site accounting identity at every interior site."""
    fields.validate_shapes(b)
    eta0 = np.asarray(eta0, dtype=np.int64)
    if eta0.shape != (b.n_sites,):
        raise ShapeMismatch(f"eta0 must have shape ({b.n_sites},)")
    n = _direction_counts(fields, b, counts, master_seed, lam)
    inflow, _ = _inflows(fields, b, n)
    residuals = particle_counts(eta0) + inflow - fields.m - fields.s
    return BalanceReport("mass_balance", bool(np.all(residuals == 0)),
                         residuals, b.sites)


def verify_boundary(fields, b, *, counts=None, master_seed=None, lam=None):
    """Check inflow == exit count at every boundary site."""
    fields.validate_shapes(b)
    n = _direction_counts(fields, b, counts, master_seed, lam)
    _, bound = _inflows(fields, b, n)
    residuals = bound - fields.phi
    return BalanceReport("boundary", bool(np.all(residuals == 0)),
                         residuals, b.boundary_sites)


def verify_conservation(eta0, fields, b):
    """Check that no particles were created or destroyed overall."""
    fields.validate_shapes(b)
    eta0 = np.asarray(eta0, dtype=np.int64)
    if eta0.shape != (b.n_sites,):
        raise ShapeMismatch(f"eta0 must have shape ({b.n_sites},)")
    residual = (int(particle_counts(eta0).sum())
                - int(fields.s.sum()) - int(fields.phi.sum()))
    return BalanceReport("conservation", residual == 0,
                         np.array([residual], dtype=np.int64),
                         [("total", "total")])


def verify_domination(fields, b, master_seed, lam):
    """Check the sleep indicator never exceeds the stream's sleep flag at the
    site's final movement count (re-derived from raw streams)."""
    fields.validate_shapes(b)
    chi = chi_field(master_seed, lam, b, fields.m)
    residuals = np.maximum(fields.s - chi, 0)
    return BalanceReport("domination", bool(np.all(residuals == 0)),
                         residuals, b.sites)


def verify_all(eta0, result, *, rescan=False):
    """Run every verifier against one engine result.

    Uses the engine's counters by default; ``rescan=True`` re-derives the
    direction counts from the raw streams instead.
    """
    b = box(result.params.N)
    fields = FieldTuple.from_result(result)
    seed, lam = result.params.master_seed, result.params.lam
    kw = ({"master_seed": seed, "lam": lam} if rescan
          else {"counts": result.move_counts})
    return [
        verify_mass_balance(eta0, fields, b, **kw),
        verify_boundary(fields, b, **kw),
        verify_conservation(eta0, fields, b),
        verify_domination(fields, b, seed, lam),
    ]


@dataclass(frozen=True)
class AbelianReport:
    passed: bool
    policies: tuple
    first_divergence: dict | None = None

    def to_json(self):
        return json.dumps(
            {"pass": self.passed, "policies": list(self.policies),
             "first_divergence": self.first_divergence},
            sort_keys=True)


def abelian_check(eta0, params, policies=("fifo", "lifo", "random", "cycle")):
    """Stabilize once per scheduler policy with the same instruction streams
    and demand bit-identical (M, S, Phi)."""
    if len(policies) < 2:
        raise ValueError("need at least two policies to compare")
    for p in policies:
        if p not in POLICIES:
            raise ValueError(f"unknown scheduler {p!r}")
    b = box(params.N)
    results = [stabilize(eta0, replace(params, scheduler=p)) for p in policies]
    ref = results[0]
    for p, res in zip(policies[1:], results[1:]):
        for name, a, b_ in (("odometer", ref.odometer, res.odometer),
                            ("sleep", ref.sleep_field, res.sleep_field),
                            ("phi", ref.exit_measure, res.exit_measure)):
            if not np.array_equal(a, b_):
                i = int(np.nonzero(a != b_)[0][0])
                labels = b.boundary_sites if name == "phi" else b.sites
                return AbelianReport(
                    False, tuple(policies),
                    {"field": name, "site": list(labels[i]),
                     "policy_a": policies[0], "value_a": int(a[i]),
                     "policy_b": p, "value_b": int(b_[i])})
    return AbelianReport(True, tuple(policies))


def kl_divergence(p1, p2):
    """Kullback-Leibler divergence between Bernoulli(p1) and Bernoulli(p2),
    with the 0*ln(0) = 0 convention at the endpoints."""
    if not 0.0 <= p1 <= 1.0:
        raise DomainError(f"p1 must be in [0, 1], got {p1}")
    if not 0.0 <= p2 <= 1.0:
        raise DomainError(f"p2 must be in [0, 1], got {p2}")
    if p2 == 0.0 or p2 == 1.0:
        if p1 == p2:
            return 0.0
        raise DomainError(f"p2 = {p2} is degenerate and p1 != p2")
    out = 0.0
    if p1 > 0.0:
        out += p1 * math.log(p1 / p2)
    if p1 < 1.0:
        out += (1.0 - p1) * math.log((1.0 - p1) / (1.0 - p2))
    return out


@dataclass(frozen=True)
class ChernoffBound:
    """Tail bound kept in log space; |B_N| is large enough to underflow
    linear space."""

    log: float

    @property
    def linear(self):
        return math.exp(self.log)


def chernoff_bound(rho, lam, box_size):
    """Bound on the probability that a box-sized family of sleep flags
    averages at least rho, when each flag has mean lam/(1+lam).

    Only valid above the mean: rho <= lam/(1+lam) raises (the bound would be
    vacuous there).
    """
    if box_size < 0:
        raise DomainError(f"box_size must be >= 0, got {box_size}")
    q = lam / (1.0 + lam)
    if not q < rho <= 1.0:
        raise DomainError(
            f"rho must lie in ({q}, 1], got {rho} (bound vacuous at or "
            "below the mean)")
    return ChernoffBound(log=-kl_divergence(rho, q) * box_size)
