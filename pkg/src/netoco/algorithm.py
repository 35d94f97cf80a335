"""Consensus primal-dual online updates with long-term constraints.

Every unit i keeps a decision x_i inside the ball of radius R and a
nonnegative dual vector lambda_i, one multiplier per constraint. A round t
proceeds in lockstep:

  1. commit x_i(t) and incur its loss (full information evaluates the loss
     gradient there; bandit feedback probes a single point x_i(t) + eps * u_i
     with u_i uniform on the unit sphere and forms the one-point gradient
     estimate from the observed value alone);
  2. descend on the violation-augmented objective,
     y_i = x_i - beta_t * (g_i + sum_s lambda_is * clipped_subgradient(x_i, s));
  3. mix with the neighbors' y-vectors through the round's weight matrix;
  4. project back onto the decision ball;
  5. reset each multiplier to the new violation over eta_t,
     lambda_i(t+1) = positive_parts(x_i(t+1)) / eta_t, which is the exact
     maximizer of the round's augmented Lagrangian over lambda >= 0.

Bandit variants commit inside the shrunk ball of radius (1 - pi) * R so that
every probe stays inside the full ball; eps_t <= pi * R is enforced when the
schedule is built.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .network import TopologySchedule, WeightMatrix, consensus_mix
from .problems import ConstraintSet, LossOracle, clipped_subgradient

__all__ = [
    "VARIANTS",
    "HyperSchedule",
    "make_schedule",
    "project_ball",
    "sample_unit_sphere",
    "one_point_estimator",
    "augmented_lagrangian",
    "primal_direction",
    "dual_update",
    "UnitState",
    "RunState",
    "initial_state",
    "RoundRecord",
    "run_round_full",
    "run_round_bandit",
    "RunTrajectory",
    "run_experiment",
]

VARIANTS = (
    "convex-full",
    "strongly-convex-full",
    "convex-bandit",
    "strongly-convex-bandit",
)

# SeedSequence spawn-key purpose for per-unit sphere directions; the data
# streams in problems.py use 1 and 2.
_SPAWN_SPHERE = 3


@dataclass(frozen=True)
class HyperSchedule:
    """Per-round step sizes for one of the four variants.

    Convex variants use constant eta_t = T^-c and beta_t = 1/(a p G^2 T^c);
    strongly convex variants decay as eta_t = 2 p G^2/(sigma t) and
    beta_t = 1/(sigma t). Bandit variants add the probe radius
    eps_t = T^-b and the ball shrinkage pi = 1/(R T^b), with b = c/3 for the
    convex case and b = 1/3 for the strongly convex one.
    """

    variant: str
    p: int
    G: float
    radius: float
    horizon: int
    a: float
    c: Optional[float]
    sigma: Optional[float]
    b: Optional[float]
    pi: float

    @property
    def is_bandit(self) -> bool:
        return self.variant.endswith("bandit")

    @property
    def is_strongly_convex(self) -> bool:
        return self.variant.startswith("strongly")

    @property
    def decision_radius(self) -> float:
        """Radius of the ball decisions are projected onto."""
        return (1.0 - self.pi) * self.radius if self.is_bandit else self.radius

    def eta(self, t: int) -> float:
        self._check_round(t)
        if self.is_strongly_convex:
            return 2.0 * self.p * self.G * self.G / (self.sigma * t)
        return float(self.horizon) ** (-self.c)

    def beta(self, t: int) -> float:
        self._check_round(t)
        if self.is_strongly_convex:
            return 1.0 / (self.sigma * t)
        return 1.0 / (self.a * self.p * self.G * self.G * float(self.horizon) ** self.c)

    def eps(self, t: int) -> float:
        self._check_round(t)
        if not self.is_bandit:
            raise ValueError(f"variant {self.variant!r} has no probe radius")
        return float(self.horizon) ** (-self.b)

    def _check_round(self, t: int):
        if not 1 <= t <= self.horizon:
            raise ValueError(f"round {t} outside 1..{self.horizon}")


def make_schedule(
    variant: str,
    *,
    p: int,
    G: float,
    radius: float,
    horizon: int,
    c: Optional[float] = None,
    a: float = 2.0,
    sigma: Optional[float] = None,
) -> HyperSchedule:
    """Validate parameters and assemble the step schedule for a variant."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if p < 1:
        raise ValueError("p must be >= 1")
    if not G > 0.0:
        raise ValueError("G must be > 0")
    if not radius > 0.0:
        raise ValueError("radius must be > 0")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    strongly = variant.startswith("strongly")
    bandit = variant.endswith("bandit")
    if strongly:
        if sigma is None or not sigma > 0.0:
            raise ValueError("strongly convex variants need sigma > 0")
    else:
        if c is None or not 0.0 < c < 1.0:
            raise ValueError("convex variants need c in (0, 1)")
        if not a > 1.0:
            raise ValueError("convex variants need a > 1")
    b = None
    pi = 0.0
    if bandit:
        b = 1.0 / 3.0 if strongly else c / 3.0
        pi = 1.0 / (radius * float(horizon) ** b)
        if not pi < 1.0:
            raise ValueError(
                f"shrinkage pi = {pi:.6g} >= 1: horizon {horizon} too short for "
                f"radius {radius} at probe exponent b = {b:.6g}"
            )
        # Probe containment: eps_t <= pi * radius, with equality at these formulas.
        eps = float(horizon) ** (-b)
        if eps > pi * radius * (1.0 + 1e-12):
            raise ValueError("probe radius exceeds the shrinkage margin")
    return HyperSchedule(
        variant=variant,
        p=int(p),
        G=float(G),
        radius=float(radius),
        horizon=int(horizon),
        a=float(a),
        c=None if strongly else float(c),
        sigma=float(sigma) if strongly else None,
        b=b,
        pi=pi,
    )


def project_ball(x, radius: float) -> np.ndarray:
    """Euclidean projection onto the origin-centered ball; identity inside it."""
    x = np.asarray(x, dtype=float)
    norm = float(np.linalg.norm(x))
    if norm <= radius:
        return x
    return x * (radius / norm)


def _project_rows(rows: np.ndarray, radius: float) -> np.ndarray:
    norms = np.sqrt(np.einsum("nd,nd->n", rows, rows))
    scale = np.where(norms > radius, radius / np.maximum(norms, 1e-300), 1.0)
    return rows * scale[:, None]


def sample_unit_sphere(rng: np.random.Generator, dimension: int) -> np.ndarray:
    """Uniform direction on the unit sphere via normalized Gaussians."""
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    while True:
        g = rng.standard_normal(dimension)
        norm = float(np.linalg.norm(g))
        if norm > 0.0:  # zero draw has probability zero; resample defensively
            return g / norm


def one_point_estimator(value: float, direction, dimension: int, eps: float) -> np.ndarray:
    """Gradient estimate (d / eps) * observed_value * direction from one probe."""
    if not eps > 0.0:
        raise ValueError("eps must be > 0")
    return (dimension / eps) * float(value) * np.asarray(direction, dtype=float)


def augmented_lagrangian(
    oracle: LossOracle, constraints: ConstraintSet, x, lam, eta: float
) -> float:
    """Round objective: loss + dual-weighted violations - (eta/2) ||lambda||^2."""
    lam = np.asarray(lam, dtype=float)
    violation = constraints.positive_parts(x)
    return float(oracle.value(np.asarray(x, dtype=float))) + float(lam @ violation) - 0.5 * eta * float(lam @ lam)


def primal_direction(x, lam, gradient, constraints: ConstraintSet) -> np.ndarray:
    """Descent direction: loss gradient plus dual-weighted clipped subgradients."""
    lam = np.asarray(lam, dtype=float)
    out = np.asarray(gradient, dtype=float).copy()
    for s in range(1, constraints.count + 1):
        if lam[s - 1] != 0.0:
            out += lam[s - 1] * clipped_subgradient(constraints, x, s)
    return out


def dual_update(constraints: ConstraintSet, x_next, eta: float) -> np.ndarray:
    """Exact argmax of the augmented Lagrangian over lambda >= 0."""
    if not eta > 0.0:
        raise ValueError("eta must be > 0")
    return constraints.positive_parts(x_next) / eta


@dataclass(frozen=True)
class UnitState:
    """Per-unit view: decision, dual vector, and the unit's sphere stream."""

    decision: np.ndarray
    dual: np.ndarray
    rng: Optional[np.random.Generator]


@dataclass
class RunState:
    """Synchronized state of all units; row i - 1 belongs to unit i.

    violations caches positive_parts_rows(decisions) so a round can record the
    committed violation without recomputing it.
    """

    decisions: np.ndarray  # (N, d)
    duals: np.ndarray  # (N, p)
    rngs: Optional[tuple[np.random.Generator, ...]]
    violations: Optional[np.ndarray] = None  # (N, p)

    def unit(self, i: int) -> UnitState:
        if not 1 <= i <= self.decisions.shape[0]:
            raise IndexError(f"unit {i} outside 1..{self.decisions.shape[0]}")
        return UnitState(
            decision=self.decisions[i - 1],
            dual=self.duals[i - 1],
            rng=None if self.rngs is None else self.rngs[i - 1],
        )


def initial_state(
    n_units: int, constraints: ConstraintSet, *, seed: Optional[int] = None, bandit: bool = False
) -> RunState:
    """All decisions and duals start at zero; bandit runs get per-unit streams."""
    rngs = None
    if bandit:
        if seed is None:
            raise ValueError("bandit runs need a seed")
        rngs = tuple(
            np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_SPAWN_SPHERE, i)))
            for i in range(1, n_units + 1)
        )
    decisions = np.zeros((n_units, constraints.dimension))
    return RunState(
        decisions=decisions,
        duals=np.zeros((n_units, constraints.count)),
        rngs=rngs,
        violations=constraints.positive_parts_rows(decisions),
    )


@dataclass(frozen=True)
class RoundRecord:
    """What round t leaves behind for metrics."""

    decisions: np.ndarray  # committed x_i(t), (N, d)
    losses: np.ndarray  # incurred (bandit: observed at the probe), (N,)
    violations: np.ndarray  # positive parts at the committed decisions, (N, p)
    queries: Optional[np.ndarray]  # bandit probes, (N, d)


def run_round_full(
    state: RunState,
    round_losses,
    weights: WeightMatrix,
    hyper: HyperSchedule,
    constraints: ConstraintSet,
    t: int,
) -> tuple[RunState, RoundRecord]:
    """One synchronized full-information round; see the module docstring."""
    committed = state.decisions
    violations = (
        state.violations
        if state.violations is not None
        else constraints.positive_parts_rows(committed)
    )
    values, grads = round_losses.values_and_gradients(committed)
    dual_pull = constraints.weighted_subgradient_rows(committed, state.duals)
    y = committed - hyper.beta(t) * (grads + dual_pull)
    mixed = consensus_mix(weights, y)
    nxt = _project_rows(mixed, hyper.decision_radius)
    _assert_in_ball(nxt, hyper.decision_radius)
    next_violations = constraints.positive_parts_rows(nxt)
    record = RoundRecord(decisions=committed, losses=values, violations=violations, queries=None)
    next_state = RunState(
        decisions=nxt,
        duals=next_violations / hyper.eta(t),
        rngs=state.rngs,
        violations=next_violations,
    )
    return next_state, record


def run_round_bandit(
    state: RunState,
    round_losses,
    weights: WeightMatrix,
    hyper: HyperSchedule,
    constraints: ConstraintSet,
    t: int,
) -> tuple[RunState, RoundRecord]:
    """One synchronized one-point bandit round; see the module docstring."""
    if state.rngs is None:
        raise ValueError("bandit rounds need per-unit rng streams")
    committed = state.decisions
    violations = (
        state.violations
        if state.violations is not None
        else constraints.positive_parts_rows(committed)
    )
    dimension = committed.shape[1]
    directions = np.stack([sample_unit_sphere(rng, dimension) for rng in state.rngs])
    eps = hyper.eps(t)
    queries = committed + eps * directions
    _assert_in_ball(queries, hyper.radius)
    observed = round_losses.values(queries)
    estimates = (dimension / eps) * observed[:, None] * directions
    dual_pull = constraints.weighted_subgradient_rows(committed, state.duals)
    y = committed - hyper.beta(t) * (estimates + dual_pull)
    mixed = consensus_mix(weights, y)
    nxt = _project_rows(mixed, hyper.decision_radius)
    _assert_in_ball(nxt, hyper.decision_radius)
    next_violations = constraints.positive_parts_rows(nxt)
    record = RoundRecord(
        decisions=committed, losses=observed, violations=violations, queries=queries
    )
    next_state = RunState(
        decisions=nxt,
        duals=next_violations / hyper.eta(t),
        rngs=state.rngs,
        violations=next_violations,
    )
    return next_state, record


def _assert_in_ball(rows: np.ndarray, radius: float):
    # Containment is part of the update's contract; tolerance covers rounding only.
    assert float(np.einsum("nd,nd->n", rows, rows).max()) <= (radius + 1e-12) ** 2


@dataclass
class RunTrajectory:
    """Everything one run produced, indexed [t - 1] on the first axis."""

    variant: str
    decision_radius: float
    pi: float
    decisions: np.ndarray  # (T, N, d) committed decisions
    losses: np.ndarray  # (T, N) incurred/observed loss values
    violations: np.ndarray  # (T, N, p) positive parts at committed decisions
    queries: Optional[np.ndarray]  # (T, N, d) bandit probes, None otherwise
    edge_counts: np.ndarray  # (T,) undirected edges active per round

    @property
    def horizon(self) -> int:
        return self.decisions.shape[0]

    @property
    def n_units(self) -> int:
        return self.decisions.shape[1]

    @property
    def dimension(self) -> int:
        return self.decisions.shape[2]


def run_experiment(
    stream,
    topology: TopologySchedule,
    hyper: HyperSchedule,
    constraints: ConstraintSet,
    seed: Optional[int] = None,
) -> RunTrajectory:
    """Run all rounds of one seed and collect the trajectory.

    The stream fixes N, d, and T; the topology and schedule must agree with
    them. Identical inputs produce bitwise identical trajectories.
    """
    n, d, horizon = stream.n_units, stream.dimension, stream.horizon
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if topology.node_count != n:
        raise ValueError(f"topology has {topology.node_count} nodes, stream has {n} units")
    if constraints.dimension != d:
        raise ValueError("constraint dimension does not match the stream")
    if hyper.horizon != horizon:
        raise ValueError(f"schedule horizon {hyper.horizon} != stream horizon {horizon}")
    if hyper.p != constraints.count:
        raise ValueError("schedule was built for a different constraint count")
    state = initial_state(n, constraints, seed=seed, bandit=hyper.is_bandit)
    run_round = run_round_bandit if hyper.is_bandit else run_round_full
    decisions = np.empty((horizon, n, d))
    losses = np.empty((horizon, n))
    violations = np.empty((horizon, n, constraints.count))
    queries = np.empty((horizon, n, d)) if hyper.is_bandit else None
    edge_counts = np.empty(horizon, dtype=np.int64)
    for t in range(1, horizon + 1):
        state, record = run_round(
            state, stream.round(t), topology.weights_at(t), hyper, constraints, t
        )
        decisions[t - 1] = record.decisions
        losses[t - 1] = record.losses
        violations[t - 1] = record.violations
        if queries is not None:
            queries[t - 1] = record.queries
        edge_counts[t - 1] = len(topology.graph_at(t).edges)
    return RunTrajectory(
        variant=hyper.variant,
        decision_radius=hyper.decision_radius,
        pi=hyper.pi,
        decisions=decisions,
        losses=losses,
        violations=violations,
        queries=queries,
        edge_counts=edge_counts,
    )
