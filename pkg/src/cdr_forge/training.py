"""Near-Clifford training circuit generation.

Two generators over the same substitution state space: weighted random
replacement down to N surviving non-Clifford gates, and a Metropolis chain
that steers the surviving set until the circuit's exact expectation lands
near a requested target value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circuits import Circuit, PauliObservable, rz, rz_distance
from .errors import ConfigurationError, McmcExhaustedError
from .seeding import as_rng
from .simulator import CompiledCircuit, StateVector, expectation_exact

HALF_PI = math.pi / 2

SIGMA_SUBSTITUTION = 0.5
KEPT = -1


@dataclass(frozen=True)
class SubstitutionWeights:
    """Clifford replacement weights for one RZ angle."""

    weights: np.ndarray
    probabilities: np.ndarray


def substitution_weights(theta: float, sigma: float = SIGMA_SUBSTITUTION) -> SubstitutionWeights:
    """w_k = exp(-d_k^2 / sigma^2) for the four RZ Clifford angles k*pi/2.

    Normalization to a per-gate distribution is included; the standard
    generator instead normalizes jointly over all surviving gates.
    """
    if sigma <= 0:
        raise ConfigurationError(f"sigma must be positive, got {sigma}")
    w = np.array([math.exp(-rz_distance(theta, k) ** 2 / sigma**2) for k in range(4)])
    return SubstitutionWeights(w, w / w.sum())


@dataclass(frozen=True)
class SubstitutionState:
    """Which of the base circuit's non-Clifford RZ gates are replaced, and by
    which Clifford index; KEPT (-1) marks survivors with original angles."""

    base: Circuit
    assignment: tuple[int, ...]

    def __post_init__(self):
        positions = self.base.non_clifford_positions()
        if len(self.assignment) != len(positions):
            raise ConfigurationError(
                f"assignment length {len(self.assignment)} does not match "
                f"{len(positions)} non-Clifford positions"
            )
        if any(a not in (KEPT, 0, 1, 2, 3) for a in self.assignment):
            raise ConfigurationError("assignment entries must be -1 or a Clifford index 0..3")

    @property
    def kept_count(self) -> int:
        return sum(1 for a in self.assignment if a == KEPT)

    @property
    def replaced_count(self) -> int:
        return len(self.assignment) - self.kept_count

    def circuit(self) -> Circuit:
        positions = self.base.non_clifford_positions()
        swaps = {}
        for pos, a in zip(positions, self.assignment):
            if a != KEPT:
                swaps[pos] = rz(self.base.gates[pos].qubits[0], a * HALF_PI)
        return self.base.with_replaced(swaps)


class _SubstitutionSpace:
    """Weight table and fast exact-expectation evaluation for one base circuit.

    The surviving gates always keep their original angles, so each position's
    replacement weights never change; computing them once and renormalizing
    over the shrinking pool reproduces the per-round recomputation float for
    float.
    """

    def __init__(self, base: Circuit, sigma: float, observable: PauliObservable | None = None):
        if sigma <= 0:
            raise ConfigurationError(f"sigma must be positive, got {sigma}")
        self.base = base
        self.positions = base.non_clifford_positions()
        self.angles = np.array([base.gates[p].angle for p in self.positions])
        self.weights = np.array(
            [substitution_weights(float(th), sigma).weights for th in self.angles]
        ).reshape(len(self.positions), 4)
        self.observable = observable
        self._compiled = None
        if observable is not None:
            self._compiled = CompiledCircuit(base)
            self._base_angles = self._compiled.base_angles.copy()
            rz_seen = 0
            slot_of_position = {}
            for i, gate in enumerate(base.gates):
                if gate.kind == "RZ":
                    slot_of_position[i] = rz_seen
                    rz_seen += 1
            self._slots = np.array([slot_of_position[p] for p in self.positions], dtype=int)

    def sample_standard(self, n_target: int, rng: np.random.Generator) -> SubstitutionState:
        total = len(self.positions)
        if n_target < 0 or n_target > total:
            raise ConfigurationError(
                f"target non-Clifford count {n_target} outside [0, {total}]"
            )
        assignment = np.full(total, KEPT)
        alive = list(range(total))
        for _ in range(total - n_target):
            flat = self.weights[alive].ravel()
            choice = rng.choice(flat.size, p=flat / flat.sum())
            assignment[alive[choice // 4]] = choice % 4
            del alive[choice // 4]
        return SubstitutionState(self.base, tuple(int(a) for a in assignment))

    def propose(self, state: SubstitutionState, n_swap: int, rng: np.random.Generator) -> SubstitutionState:
        assignment = np.asarray(state.assignment)
        kept = np.flatnonzero(assignment == KEPT)
        replaced = np.flatnonzero(assignment != KEPT)
        if n_swap < 0:
            raise ConfigurationError(f"swap count must be >= 0, got {n_swap}")
        if n_swap > kept.size or n_swap > replaced.size:
            raise ConfigurationError(
                f"cannot swap {n_swap} positions with {kept.size} kept "
                f"and {replaced.size} replaced"
            )
        out = assignment.copy()
        newly_replaced = np.sort(rng.choice(kept, size=n_swap, replace=False))
        for position in newly_replaced:
            p = self.weights[position] / self.weights[position].sum()
            out[position] = rng.choice(4, p=p)
        newly_kept = np.sort(rng.choice(replaced, size=n_swap, replace=False))
        out[newly_kept] = KEPT
        return SubstitutionState(self.base, tuple(int(a) for a in out))

    def o_exact(self, state: SubstitutionState) -> float:
        if self._compiled is None:
            raise ConfigurationError("no observable attached to this space")
        angles = self._base_angles.copy()
        assignment = np.asarray(state.assignment)
        swapped = assignment != KEPT
        angles[self._slots[swapped]] = assignment[swapped] * HALF_PI
        psi = self._compiled.run(angles)
        return expectation_exact(StateVector(self.base.num_qubits, psi), self.observable)


def generate_standard(
    coi: Circuit, n_target: int, sigma: float = SIGMA_SUBSTITUTION, seed=0
) -> Circuit:
    """Replace non-Clifford gates one round at a time until `n_target` remain.

    Each round draws one (gate, Clifford index) pair from the joint
    distribution of all surviving gates' weights.
    """
    space = _SubstitutionSpace(coi, sigma)
    if n_target > len(space.positions):
        raise ConfigurationError(
            f"target count {n_target} exceeds the circuit's "
            f"{len(space.positions)} non-Clifford gates"
        )
    return space.sample_standard(n_target, as_rng(seed)).circuit()


def mcmc_propose(
    state: SubstitutionState, n_swap: int = 5, sigma: float = SIGMA_SUBSTITUTION, seed=0
) -> SubstitutionState:
    """Swap `n_swap` kept positions to Clifford replacements and `n_swap`
    replaced positions back to their original angles."""
    space = _SubstitutionSpace(state.base, sigma)
    return space.propose(state, n_swap, as_rng(seed))


def target_weight(o_exact: float, target: float, sigma_mcmc: float) -> float:
    """Unnormalized chain weight exp(-(O - y)^2 / sigma_mcmc^2)."""
    return math.exp(-((o_exact - target) ** 2) / sigma_mcmc**2)


@dataclass(frozen=True)
class McmcConfig:
    sigma_mcmc: float = 0.01
    n_swap: int = 5
    sigma_sub: float = SIGMA_SUBSTITUTION
    targets: tuple[float, ...] = ()
    max_steps: int = 20000
    restarts: int = 3
    epsilon_target: float = 0.03

    def __post_init__(self):
        if self.sigma_mcmc <= 0 or self.sigma_sub <= 0 or self.epsilon_target <= 0:
            raise ConfigurationError("sigma_mcmc, sigma_sub and epsilon_target must be positive")
        if self.n_swap <= 0 or self.max_steps <= 0:
            raise ConfigurationError("n_swap and max_steps must be positive")
        if self.restarts < 0:
            raise ConfigurationError("restarts must be >= 0")
        object.__setattr__(self, "targets", tuple(float(y) for y in self.targets))
        if any(abs(y) > 1 for y in self.targets):
            raise ConfigurationError("targets must lie in [-1, 1]")


@dataclass(frozen=True)
class ChainResult:
    circuit: Circuit
    state: SubstitutionState
    o_exact: float
    steps: int
    attempt: int
    target: float


def mcmc_chain_result(
    coi: Circuit,
    observable: PauliObservable,
    target: float,
    n_target: int,
    config: McmcConfig = McmcConfig(),
    seed=0,
) -> ChainResult:
    """Metropolis chain over substitution states, stopped at the first state
    whose exact expectation is within epsilon_target of `target`.

    The acceptance test u < w_cand/w_current is evaluated in log space; the
    weights underflow to zero long before the log form loses meaning.
    Exhausting max_steps restarts from a fresh standard draw, up to
    config.restarts extra attempts.
    """
    space = _SubstitutionSpace(coi, config.sigma_sub, observable)
    n_replaceable = len(space.positions)
    if n_target > n_replaceable:
        raise ConfigurationError(
            f"target count {n_target} exceeds {n_replaceable} non-Clifford gates"
        )
    if config.n_swap > n_target or config.n_swap > n_replaceable - n_target:
        raise ConfigurationError(
            f"n_swap {config.n_swap} too large for {n_target} kept / "
            f"{n_replaceable - n_target} replaced positions"
        )
    rng = as_rng(seed)
    best = math.inf
    for attempt in range(config.restarts + 1):
        state = space.sample_standard(n_target, rng)
        current = space.o_exact(state)
        if abs(current - target) <= config.epsilon_target:
            return ChainResult(state.circuit(), state, current, 0, attempt, target)
        best = min(best, abs(current - target))
        for step in range(1, config.max_steps + 1):
            candidate = space.propose(state, config.n_swap, rng)
            o_cand = space.o_exact(candidate)
            log_ratio = (
                (current - target) ** 2 - (o_cand - target) ** 2
            ) / config.sigma_mcmc**2
            if math.log(rng.uniform()) < log_ratio:
                state, current = candidate, o_cand
            best = min(best, abs(current - target))
            if abs(current - target) <= config.epsilon_target:
                return ChainResult(state.circuit(), state, current, step, attempt, target)
    raise McmcExhaustedError(
        f"no circuit within {config.epsilon_target} of target {target} after "
        f"{config.restarts + 1} attempts of {config.max_steps} steps; "
        f"best distance {best:.4f}",
        best_distance=best,
    )


def mcmc_chain(
    coi: Circuit,
    observable: PauliObservable,
    target: float,
    n_target: int,
    config: McmcConfig = McmcConfig(),
    seed=0,
) -> Circuit:
    return mcmc_chain_result(coi, observable, target, n_target, config, seed).circuit


def target_grid(n: int) -> tuple[float, ...]:
    """n targets evenly spaced over [-0.5, 0.5]."""
    if n < 2:
        raise ConfigurationError(f"grid needs at least 2 targets, got {n}")
    return tuple(-0.5 + i / (n - 1) for i in range(n))
