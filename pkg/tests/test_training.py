"""Training circuit generation: weighted replacement and the Metropolis chain."""
import math
from itertools import combinations, product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdr_forge.circuits import Circuit, PauliObservable, cnot, rz, rz_distance, sx
from cdr_forge.errors import ConfigurationError, McmcExhaustedError
from cdr_forge.seeding import as_rng
from cdr_forge.training import (
    KEPT,
    McmcConfig,
    SubstitutionState,
    _SubstitutionSpace,
    generate_standard,
    mcmc_chain,
    mcmc_chain_result,
    mcmc_propose,
    substitution_weights,
    target_grid,
    target_weight,
)

HALF_PI = math.pi / 2

# exp(-(2 -+ sqrt(2)) / 0.25), frozen from the closed form of |e^{i pi/4} - i^k|^2
W_NEAR = 0.0960250916311845
W_FAR = 1.1719350932929805e-06
P_NEAR = 0.49999389784081066
P_FAR = 6.102159189418557e-06


def _angles_circuit(angles, num_qubits=2):
    """RZ ladder with some interleaved SX/CNOT so states actually move."""
    gates = []
    for i, theta in enumerate(angles):
        q = i % num_qubits
        gates.append(rz(q, theta))
        if i % 3 == 1:
            gates.append(sx(q))
        if i % 4 == 3:
            gates.append(cnot(0, 1))
    return Circuit(num_qubits, tuple(gates))


class TestSubstitutionWeights:
    def test_pi_quarter_frozen_values(self):
        sw = substitution_weights(math.pi / 4)
        assert sw.weights == pytest.approx([W_NEAR, W_NEAR, W_FAR, W_FAR], rel=1e-12)
        assert sw.probabilities == pytest.approx([P_NEAR, P_NEAR, P_FAR, P_FAR], rel=1e-12)
        assert sw.weights[0] == pytest.approx(math.exp(-(2 - math.sqrt(2)) / 0.25), rel=1e-12)
        assert sw.weights[2] == pytest.approx(math.exp(-(2 + math.sqrt(2)) / 0.25), rel=1e-12)

    @given(st.floats(-10, 10), st.floats(0.1, 3))
    @settings(max_examples=60, deadline=None)
    def test_matches_distance_form(self, theta, sigma):
        sw = substitution_weights(theta, sigma)
        for k in range(4):
            assert sw.weights[k] == pytest.approx(
                math.exp(-rz_distance(theta, k) ** 2 / sigma**2), rel=1e-12
            )
        assert sw.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(sw.weights > 0)

    def test_quarter_turn_relabels_weights(self):
        # adding pi/2 to the angle shifts which Clifford index is closest
        theta = 0.37
        base = substitution_weights(theta).weights
        shifted = substitution_weights(theta + HALF_PI).weights
        assert shifted == pytest.approx(np.roll(base, 1), rel=1e-9)

    def test_sigma_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            substitution_weights(0.3, 0.0)


class TestSubstitutionState:
    def test_assignment_length_checked(self):
        base = _angles_circuit([0.3, 0.7, 1.1])
        with pytest.raises(ConfigurationError, match="does not match"):
            SubstitutionState(base, (KEPT, KEPT))

    def test_assignment_entries_checked(self):
        base = _angles_circuit([0.3, 0.7, 1.1])
        with pytest.raises(ConfigurationError, match="Clifford index"):
            SubstitutionState(base, (KEPT, 4, 0))

    def test_counts_and_replacement(self):
        base = Circuit(1, (rz(0, 0.3), sx(0), rz(0, 1.1)))
        state = SubstitutionState(base, (2, KEPT))
        assert state.kept_count == 1
        assert state.replaced_count == 1
        built = state.circuit()
        assert built.gates[0].angle == pytest.approx(2 * HALF_PI)
        assert built.gates[2].angle == 1.1
        assert built.gates[1] == base.gates[1]


class TestGenerateStandard:
    def test_full_target_returns_base(self):
        base = _angles_circuit([0.3, 0.7, 1.1, 2.0])
        out = generate_standard(base, base.non_clifford_count(), seed=3)
        assert out.gates == base.gates

    def test_zero_target_is_all_clifford(self):
        base = _angles_circuit([0.3, 0.7, 1.1, 2.0, 0.9])
        out = generate_standard(base, 0, seed=3)
        assert out.non_clifford_count() == 0
        assert len(out.gates) == len(base.gates)

    def test_survivors_keep_original_angles(self):
        angles = [0.3, 0.7, 1.1, 2.0, 0.9, 1.7, 0.4, 2.6, 1.3, 0.6, 2.2, 1.9]
        base = _angles_circuit(angles)
        out = generate_standard(base, 5, seed=9)
        survivors = 0
        for pos in base.non_clifford_positions():
            old, new = base.gates[pos].angle, out.gates[pos].angle
            if new == old:
                survivors += 1
            else:
                # replaced gates sit exactly on a quarter turn
                assert new / HALF_PI == pytest.approx(round(new / HALF_PI), abs=1e-12)
        assert survivors == 5
        assert out.non_clifford_count() == 5

    def test_deterministic(self):
        base = _angles_circuit([0.3, 0.7, 1.1, 2.0, 0.9, 1.7])
        a = generate_standard(base, 2, seed=42)
        b = generate_standard(base, 2, seed=42)
        assert a.gates == b.gates
        c = generate_standard(base, 2, seed=43)
        assert a.gates != c.gates

    def test_matches_per_round_recomputation(self):
        # cached weight rows must reproduce recomputing every round, float for
        # float, because survivors never change angle
        angles = [0.3, 0.7, 1.1, 2.0, 0.9, 1.7, 0.4, 2.6]
        base = _angles_circuit(angles)
        n_target = 3

        rng = as_rng(17)
        positions = base.non_clifford_positions()
        alive = list(range(len(positions)))
        assignment = {}
        for _ in range(len(positions) - n_target):
            flat = np.concatenate(
                [substitution_weights(base.gates[positions[i]].angle).weights for i in alive]
            )
            choice = rng.choice(flat.size, p=flat / flat.sum())
            assignment[alive[choice // 4]] = choice % 4
            del alive[choice // 4]
        swaps = {
            positions[i]: rz(base.gates[positions[i]].qubits[0], k * HALF_PI)
            for i, k in assignment.items()
        }
        expected = base.with_replaced(swaps)

        assert generate_standard(base, n_target, seed=17).gates == expected.gates

    def test_target_out_of_range(self):
        base = _angles_circuit([0.3, 0.7])
        with pytest.raises(ConfigurationError, match="exceeds"):
            generate_standard(base, 3)
        with pytest.raises(ConfigurationError):
            generate_standard(base, -1)

    def test_single_gate_replacement_statistics(self):
        # one pi/4 gate: the two nearest Clifford angles each carry p ~ 0.5,
        # the two far ones p ~ 6e-6
        base = Circuit(1, (rz(0, math.pi / 4),))
        rng = as_rng(8)
        counts = [0, 0, 0, 0]
        draws = 2000
        for _ in range(draws):
            out = generate_standard(base, 0, seed=rng)
            k = round(out.gates[0].angle / HALF_PI) % 4
            counts[k] += 1
        assert abs(counts[0] - draws / 2) < 4 * math.sqrt(draws * 0.25)
        assert abs(counts[1] - draws / 2) < 4 * math.sqrt(draws * 0.25)
        assert counts[2] + counts[3] <= 3


class TestTargetGrid:
    def test_values(self):
        assert target_grid(2) == (-0.5, 0.5)
        assert target_grid(3) == (-0.5, 0.0, 0.5)
        assert target_grid(5) == (-0.5, -0.25, 0.0, 0.25, 0.5)

    def test_needs_two_points(self):
        with pytest.raises(ConfigurationError):
            target_grid(1)


class TestMcmcPieces:
    def test_target_weight(self):
        assert target_weight(0.5, 0.5, 0.01) == 1.0
        assert target_weight(0.52, 0.5, 0.01) == pytest.approx(math.exp(-4.0), rel=1e-9)

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            McmcConfig(sigma_mcmc=0.0)
        with pytest.raises(ConfigurationError):
            McmcConfig(epsilon_target=-1)
        with pytest.raises(ConfigurationError):
            McmcConfig(n_swap=0)
        with pytest.raises(ConfigurationError):
            McmcConfig(max_steps=0)
        with pytest.raises(ConfigurationError):
            McmcConfig(restarts=-1)
        with pytest.raises(ConfigurationError):
            McmcConfig(targets=(0.0, 1.5))
        assert McmcConfig(targets=[0, 1]).targets == (0.0, 1.0)

    def test_propose_swaps_fixed_counts(self):
        base = _angles_circuit([0.3, 0.7, 1.1, 2.0, 0.9, 1.7, 0.4, 2.6])
        state = SubstitutionState(base, (KEPT, 0, KEPT, 1, KEPT, 2, KEPT, 3))
        out = mcmc_propose(state, n_swap=2, seed=5)
        assert out.kept_count == state.kept_count
        old = np.asarray(state.assignment)
        new = np.asarray(out.assignment)
        now_replaced = np.sum((old == KEPT) & (new != KEPT))
        now_kept = np.sum((old != KEPT) & (new == KEPT))
        assert now_replaced == 2
        assert now_kept == 2
        # every Clifford index has positive draw weight, so the reverse swap
        # is always proposable; that symmetry is what the acceptance rule needs
        assert all(np.all(substitution_weights(g.angle).probabilities > 0)
                   for g in base.gates if g.kind == "RZ")

    def test_propose_pool_errors(self):
        base = _angles_circuit([0.3, 0.7, 1.1])
        state = SubstitutionState(base, (KEPT, KEPT, 0))
        with pytest.raises(ConfigurationError, match="cannot swap"):
            mcmc_propose(state, n_swap=2)
        with pytest.raises(ConfigurationError):
            mcmc_propose(SubstitutionState(base, (KEPT, KEPT, KEPT)), n_swap=1)


class TestMcmcChain:
    ANGLES = [0.3, 0.7, 1.1, 2.0, 0.9, 1.7, 0.4, 2.6, 1.3, 0.6, 2.2, 1.9]

    def test_immediate_success_counts_zero_steps(self):
        base = _angles_circuit(self.ANGLES)
        obs = PauliObservable(2, "XX")
        cfg = McmcConfig(n_swap=1, epsilon_target=2.0)
        result = mcmc_chain_result(base, obs, 0.0, 4, cfg, seed=1)
        assert result.steps == 0
        assert result.attempt == 0
        assert result.target == 0.0
        assert result.circuit.non_clifford_count() == 4

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_reaches_target(self, seed):
        base = _angles_circuit(self.ANGLES)
        obs = PauliObservable(2, "XX")
        cfg = McmcConfig(sigma_mcmc=0.05, n_swap=2, max_steps=5000, restarts=2,
                         epsilon_target=0.08)
        result = mcmc_chain_result(base, obs, 0.2, 4, cfg, seed=seed)
        assert abs(result.o_exact - 0.2) <= 0.08
        assert result.steps <= 5000
        assert result.circuit.non_clifford_count() == 4
        assert result.state.kept_count == 4

    def test_deterministic(self):
        base = _angles_circuit(self.ANGLES)
        obs = PauliObservable(2, "XX")
        cfg = McmcConfig(sigma_mcmc=0.05, n_swap=2, max_steps=5000, epsilon_target=0.08)
        a = mcmc_chain_result(base, obs, 0.2, 4, cfg, seed=7)
        b = mcmc_chain_result(base, obs, 0.2, 4, cfg, seed=7)
        assert a.circuit.gates == b.circuit.gates
        assert (a.steps, a.attempt, a.o_exact) == (b.steps, b.attempt, b.o_exact)
        assert mcmc_chain(base, obs, 0.2, 4, cfg, seed=7).gates == a.circuit.gates

    def test_exhaustion_reports_best_distance(self):
        base = _angles_circuit(self.ANGLES)
        obs = PauliObservable(2, "XX")
        cfg = McmcConfig(sigma_mcmc=0.05, n_swap=2, max_steps=5, restarts=2,
                         epsilon_target=1e-4)
        with pytest.raises(McmcExhaustedError, match="3 attempts") as excinfo:
            mcmc_chain_result(base, obs, 0.95, 4, cfg, seed=0)
        assert excinfo.value.best_distance > 0

    def test_pool_size_validation(self):
        base = _angles_circuit([0.3, 0.7, 1.1, 2.0])
        obs = PauliObservable(2, "XX")
        with pytest.raises(ConfigurationError, match="exceeds"):
            mcmc_chain_result(base, obs, 0.0, 5, McmcConfig(n_swap=1))
        # n_swap must fit in both the kept and the replaced pool
        with pytest.raises(ConfigurationError, match="too large"):
            mcmc_chain_result(base, obs, 0.0, 4, McmcConfig(n_swap=1))
        with pytest.raises(ConfigurationError, match="too large"):
            mcmc_chain_result(base, obs, 0.0, 1, McmcConfig(n_swap=2))

    def test_stationary_distribution(self):
        # 4 substitutable pi/4 gates, 2 kept: 96 states, small enough to
        # enumerate. The chain kernel (propose + log-space acceptance, same
        # rule as the production loop) should equilibrate to
        # pi(s) ~ w_target(s) * prod_replaced p_k.
        base = Circuit(2, (rz(0, math.pi / 4), sx(0), rz(1, math.pi / 4), cnot(0, 1),
                           rz(0, math.pi / 4), rz(1, math.pi / 4)))
        obs = PauliObservable(2, "XX")
        space = _SubstitutionSpace(base, 0.5, obs)
        probs = substitution_weights(math.pi / 4).probabilities
        y, sigma = 0.2, 0.5

        stationary = {}
        for kept in combinations(range(4), 2):
            replaced = [i for i in range(4) if i not in kept]
            for ks in product(range(4), repeat=2):
                a = [KEPT] * 4
                a[replaced[0]], a[replaced[1]] = ks
                st_ = SubstitutionState(base, tuple(a))
                stationary[st_.assignment] = (
                    target_weight(space.o_exact(st_), y, sigma) * probs[ks[0]] * probs[ks[1]]
                )
        total = sum(stationary.values())
        stationary = {a: v / total for a, v in stationary.items()}

        rng = as_rng(5)
        state = space.sample_standard(2, rng)
        current = space.o_exact(state)
        counts: dict = {}
        burn, steps = 1000, 30000
        for step in range(burn + steps):
            cand = space.propose(state, 1, rng)
            o_cand = space.o_exact(cand)
            log_ratio = ((current - y) ** 2 - (o_cand - y) ** 2) / sigma**2
            if math.log(rng.uniform()) < log_ratio:
                state, current = cand, o_cand
            if step >= burn:
                counts[state.assignment] = counts.get(state.assignment, 0) + 1

        tv = 0.5 * sum(abs(counts.get(a, 0) / steps - p) for a, p in stationary.items())
        assert tv <= 0.05
