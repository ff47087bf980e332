"""Core state of the signed-charge particle system on the line.

Positions ``x_1..x_n`` carry charges ``b_i`` in ``{-1, 0, +1}``.  Charged
particles move with velocity ``coupling * sum_j b_i b_j / (x_i - x_j)``;
neutral particles (``b_i = 0``) exert no force, feel none, and stay frozen.
They are kept in the arrays so that annihilation never changes ``n``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

__all__ = [
    "ParticleState",
    "EventRecord",
    "InvalidState",
    "NonFiniteForce",
    "NonFiniteEnergy",
    "validate_state",
    "force",
    "velocities",
    "velocity_field",
    "energy",
    "net_charge",
    "charged_order",
    "neighbor_pairs",
    "same_sign_gap",
    "min_opposite_gap",
]


class InvalidState(ValueError):
    """Raised when constructing or evolving a malformed state."""


class NonFiniteForce(ArithmeticError):
    """A charged pair sits at coincident positions; the force diverges."""


class NonFiniteEnergy(ArithmeticError):
    """A charged pair sits at coincident positions; the energy diverges."""


@dataclass(frozen=True)
class ParticleState:
    """Immutable snapshot ``(x, b)`` with interaction coupling and clock.

    ``coupling`` is the prefactor gamma of the pairwise sum.  The classic
    system uses gamma = 1/n (the default); the convergence harness uses
    gamma = eps, the level spacing of the associated step function.
    """

    positions: np.ndarray
    charges: np.ndarray
    coupling: float = field(default=-1.0)  # -1 sentinel -> 1/n
    time: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.positions, dtype=float)
        b = np.asarray(self.charges, dtype=np.int64)
        if x.ndim != 1 or b.shape != x.shape:
            raise InvalidState("positions and charges must be 1-d arrays of equal length")
        if x.size < 2:
            raise InvalidState("need n >= 2 particles")
        if not np.all(np.isfinite(x)):
            raise InvalidState("positions must be finite")
        if not np.isin(b, (-1, 0, 1)).all():
            raise InvalidState("charges must lie in {-1, 0, +1}")
        gamma = float(self.coupling)
        if gamma == -1.0:
            gamma = 1.0 / x.size
        if not (gamma > 0 and np.isfinite(gamma)):
            raise InvalidState("coupling must be positive")
        x = x.copy()
        b = b.copy()
        x.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "charges", b)
        object.__setattr__(self, "coupling", gamma)
        object.__setattr__(self, "time", float(self.time))

    @property
    def n(self) -> int:
        return self.positions.size

    @property
    def charged(self) -> np.ndarray:
        """Boolean mask of charged particles."""
        return self.charges != 0

    def spread(self) -> float:
        """Diameter of the charged configuration (full range if all neutral)."""
        x = self.positions[self.charged]
        if x.size < 2:
            x = self.positions
        return float(x.max() - x.min())


@dataclass(frozen=True)
class EventRecord:
    """One annihilation event: cluster of charged particles meeting at (tau, y).

    Pre-collision charges alternate in sign along the cluster and sum to
    -1, 0 or +1; the post-collision charges are all zero except possibly
    one survivor carrying the net charge.  The signed jumps sum to zero.
    """

    tau: float
    y: float
    cluster: tuple[int, ...]
    pre_charges: tuple[int, ...]
    post_charges: tuple[int, ...]

    def __post_init__(self):
        if sum(self.post_charges) != sum(self.pre_charges):
            raise InvalidState("event does not conserve net charge")
        if sum(1 for c in self.post_charges if c != 0) > 1:
            raise InvalidState("more than one surviving charge in a cluster")


def validate_state(state: ParticleState) -> list[str]:
    """Diagnostic membership check for the admissible state space.

    Charged particles must be strictly ordered by index: i > j with
    b_i b_j != 0 requires x_i > x_j.  Neutral particles are unconstrained.
    Returns a list of violation messages; empty means OK.  Never raises.
    """
    x, b = state.positions, state.charges
    idx = np.flatnonzero(b != 0)
    problems = []
    for a, c in zip(idx[:-1], idx[1:]):
        if not x[c] > x[a]:
            problems.append(
                f"charged particles out of order: x[{c}]={x[c]!r} <= x[{a}]={x[a]!r}"
            )
    return problems


def force(state: ParticleState, i: int) -> float:
    """Velocity of particle i: gamma * sum_{j != i, b_j != 0} b_i b_j / (x_i - x_j).

    Exactly zero for a neutral particle.  The sum is accumulated in
    compensated (Kahan) arithmetic: near collision it contains one huge
    term plus O(1) terms and the cancellation matters.
    """
    x, b = state.positions, state.charges
    bi = int(b[i])
    if bi == 0:
        return 0.0
    s = 0.0
    c = 0.0
    for j in range(state.n):
        if j == i or b[j] == 0:
            continue
        dx = x[i] - x[j]
        if dx == 0.0:
            raise NonFiniteForce(f"charged particles {i} and {j} coincide at x={x[i]!r}")
        term = bi * b[j] / dx
        t = s + (term - c)
        c = (t - s) - (term - c)
        s = t
    return state.coupling * s


def velocity_field(x: np.ndarray, b: np.ndarray, coupling: float) -> np.ndarray:
    """All particle velocities at once (vectorized over the pair matrix).

    The pair matrix is exactly antisymmetric in IEEE arithmetic, so the
    total momentum error comes only from the row reductions, done here in
    Kahan compensated form column by column.
    """
    n = x.size
    v = np.zeros(n)
    act = np.flatnonzero(b != 0)
    if act.size < 2:
        return v
    xa = x[act]
    ba = b[act].astype(float)
    diff = xa[:, None] - xa[None, :]
    np.fill_diagonal(diff, 1.0)
    if np.any(diff == 0.0):
        raise NonFiniteForce("coincident charged particles")
    terms = (ba[:, None] * ba[None, :]) / diff
    np.fill_diagonal(terms, 0.0)
    s = np.zeros(act.size)
    comp = np.zeros(act.size)
    for col in range(act.size):
        y = terms[:, col] - comp
        t = s + y
        comp = (t - s) - y
        s = t
    v[act] = coupling * s
    return v


def velocities(state: ParticleState) -> np.ndarray:
    return velocity_field(state.positions, state.charges, state.coupling)


def energy(state: ParticleState) -> float:
    """Interaction energy (1 / 2n^2) sum_{i != j} b_i b_j * (-log|x_i - x_j|).

    Monitoring diagnostic only: with coupling 1/n the flow descends this
    energy between collisions.
    """
    x, b = state.positions, state.charges
    act = np.flatnonzero(b != 0)
    if act.size < 2:
        return 0.0
    xa = x[act]
    ba = b[act].astype(float)
    diff = np.abs(xa[:, None] - xa[None, :])
    iu = np.triu_indices(act.size, k=1)
    gaps = diff[iu]
    if np.any(gaps == 0.0):
        raise NonFiniteEnergy("coincident charged particles")
    prods = (ba[:, None] * ba[None, :])[iu]
    total = 2.0 * float(np.sum(prods * -np.log(gaps)))
    return total / (2.0 * state.n**2)


def net_charge(state: ParticleState) -> int:
    return int(state.charges.sum())


def charged_order(state: ParticleState) -> np.ndarray:
    """Indices of charged particles sorted by position."""
    idx = np.flatnonzero(state.charges != 0)
    return idx[np.argsort(state.positions[idx], kind="stable")]


def neighbor_pairs(state: ParticleState) -> list[tuple[int, int]]:
    """Adjacent charged pairs (only neutrals in between), left index first."""
    order = charged_order(state)
    return [(int(a), int(c)) for a, c in zip(order[:-1], order[1:])]


def same_sign_gap(state: ParticleState, sign: int) -> float:
    """Minimal gap between neighboring charged particles of the given sign.

    Returns inf when no such neighboring pair exists.
    """
    x, b = state.positions, state.charges
    best = np.inf
    for a, c in neighbor_pairs(state):
        if b[a] == sign and b[c] == sign:
            best = min(best, x[c] - x[a])
    return best


def min_opposite_gap(state: ParticleState) -> float:
    """Smallest gap between opposite-sign charged neighbors (inf if none)."""
    x, b = state.positions, state.charges
    best = np.inf
    for a, c in neighbor_pairs(state):
        if b[a] * b[c] < 0:
            best = min(best, x[c] - x[a])
    return best
