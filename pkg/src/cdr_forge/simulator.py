"""Statevector and density-matrix simulation of native-gate circuits.

Conventions
-----------
Qubit 0 is the most significant bit of a basis-state index, so reshaping a
state to shape (2,) * n puts qubit q on axis q.  Statevector runs are exact
and capped at 14 qubits; density-matrix runs apply the per-gate channels of a
noise model and are capped at 10 qubits.  RZ gates are always applied as
perfect unitaries in noisy runs; measurement-basis rotations are applied
noiselessly before sampling.

All shot sampling routes through one Philox stream per call, and every
observable in a call is evaluated on the same sample set, mirroring
simultaneous measurement of commuting Paulis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circuits import Circuit, Gate, PauliObservable
from .errors import CircuitError, ConfigurationError, SimulationError
from .seeding import rng_from, seed_fingerprint

MAX_STATEVECTOR_QUBITS = 14
MAX_DENSITY_QUBITS = 10

SX_MATRIX = 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=complex)
X_MATRIX = np.array([[0, 1], [1, 0]], dtype=complex)
H_MATRIX = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2.0)
SDG_MATRIX = np.array([[1, 0], [0, -1j]], dtype=complex)

# Rotations U with U P U^dag = Z, applied before sampling in basis P.
BASIS_ROTATIONS = {
    "X": H_MATRIX,
    "Y": H_MATRIX @ SDG_MATRIX,
    "Z": None,
}


@dataclass(frozen=True, eq=False)
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray  # shape (2**num_qubits,), complex128

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def validate(self, tol: float = 1e-10) -> None:
        if self.amplitudes.shape != (2**self.num_qubits,):
            raise SimulationError("statevector shape mismatch")
        if abs(self.norm() - 1.0) > tol:
            raise SimulationError(f"statevector norm drifted to {self.norm()}")


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    num_qubits: int
    matrix: np.ndarray  # shape (2**n, 2**n), complex128

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def validate(self, trace_tol: float = 1e-10, eig_tol: float = -1e-8) -> None:
        dim = 2**self.num_qubits
        if self.matrix.shape != (dim, dim):
            raise SimulationError("density matrix shape mismatch")
        herm = float(np.max(np.abs(self.matrix - self.matrix.conj().T)))
        if herm > 1e-10:
            raise SimulationError(f"density matrix not Hermitian (residual {herm:.2e})")
        if abs(self.trace() - 1.0) > trace_tol:
            raise SimulationError(f"density matrix trace drifted to {self.trace()}")
        lowest = float(np.linalg.eigvalsh(self.matrix)[0])
        if lowest < eig_tol:
            raise SimulationError(f"density matrix has eigenvalue {lowest:.2e}")


@dataclass(frozen=True)
class ShotEstimate:
    """Finite-shot mean of a +/-1 parity observable."""

    observable: str
    value: float
    shots: int
    seed: int


# ---------------------------------------------------------------------------
# Pauli bit masks
# ---------------------------------------------------------------------------


def _bit(num_qubits: int, qubit: int) -> int:
    return 1 << (num_qubits - 1 - qubit)


def pauli_masks(obs: PauliObservable) -> tuple[int, int, int]:
    """(x_mask, yz_mask, y_count) for P|a> = i^y (-1)^{|a & yz|} |a ^ x>."""
    x_mask = 0
    yz_mask = 0
    y_count = 0
    for q, letter in enumerate(obs.letters):
        if letter in "XY":
            x_mask |= _bit(obs.num_qubits, q)
        if letter in "YZ":
            yz_mask |= _bit(obs.num_qubits, q)
        if letter == "Y":
            y_count += 1
    return x_mask, yz_mask, y_count


_ARANGE_CACHE: dict[int, np.ndarray] = {}


def _arange(dim: int) -> np.ndarray:
    arr = _ARANGE_CACHE.get(dim)
    if arr is None:
        arr = np.arange(dim, dtype=np.uint64)
        _ARANGE_CACHE[dim] = arr
    return arr


def _parity_signs(indices: np.ndarray, mask: int) -> np.ndarray:
    parity = np.bitwise_count(indices & np.uint64(mask)).astype(np.int64) & 1
    return 1.0 - 2.0 * parity


# ---------------------------------------------------------------------------
# Statevector simulation
# ---------------------------------------------------------------------------


def _check_statevector_size(num_qubits: int) -> None:
    if num_qubits > MAX_STATEVECTOR_QUBITS:
        raise ConfigurationError(
            f"{num_qubits} qubits exceeds the statevector cap of {MAX_STATEVECTOR_QUBITS}"
        )


class CompiledCircuit:
    """Circuit lowered to a flat op list for fast repeated runs.

    RZ angles live in a separate slot array, so the same structure can be
    rerun with substituted or re-optimized angles without rebuilding.
    """

    def __init__(self, circuit: Circuit):
        _check_statevector_size(circuit.num_qubits)
        n = circuit.num_qubits
        self.num_qubits = n
        self.dim = 2**n
        ops: list[tuple] = []
        angles: list[float] = []
        for gate in circuit.gates:
            if gate.kind == "I":
                continue
            if gate.kind == "RZ":
                q = gate.qubits[0]
                ops.append(("rz", 2**q, 2 ** (n - 1 - q), len(angles)))
                angles.append(gate.angle)
            elif gate.kind in ("SX", "X"):
                q = gate.qubits[0]
                m = SX_MATRIX if gate.kind == "SX" else X_MATRIX
                ops.append(("1q", 2**q, 2 ** (n - 1 - q), m))
            else:  # CNOT
                c, t = gate.qubits
                lo, hi = (c, t) if c < t else (t, c)
                shape = (2**lo, 2, 2 ** (hi - lo - 1), 2, 2 ** (n - 1 - hi))
                ops.append(("cx", shape, c == lo))
        self.ops = ops
        self.base_angles = np.array(angles, dtype=float)

    def run(self, angles: np.ndarray | None = None) -> np.ndarray:
        """Flat final statevector from |0...0>, optionally with new RZ angles."""
        if angles is None:
            angles = self.base_angles
        elif len(angles) != len(self.base_angles):
            raise ConfigurationError(
                f"expected {len(self.base_angles)} angles, got {len(angles)}"
            )
        half = np.exp(np.asarray(angles, dtype=float) * -0.5j)
        psi = np.zeros(self.dim, dtype=complex)
        psi[0] = 1.0
        for op in self.ops:
            code = op[0]
            if code == "rz":
                _, a, b, slot = op
                p = psi.reshape(a, 2, b)
                p[:, 0, :] *= half[slot]
                p[:, 1, :] *= half[slot].conjugate()
            elif code == "1q":
                _, a, b, m = op
                p = psi.reshape(a, 2, b)
                t0 = m[0, 0] * p[:, 0, :] + m[0, 1] * p[:, 1, :]
                t1 = m[1, 0] * p[:, 0, :] + m[1, 1] * p[:, 1, :]
                p[:, 0, :] = t0
                p[:, 1, :] = t1
            else:
                _, shape, control_first = op
                p = psi.reshape(shape)
                v = p[:, 1] if control_first else p[:, :, :, 1]
                if control_first:
                    tmp = v[:, :, 0, :].copy()
                    v[:, :, 0, :] = v[:, :, 1, :]
                    v[:, :, 1, :] = tmp
                else:
                    tmp = v[:, 0, :, :].copy()
                    v[:, 0, :, :] = v[:, 1, :, :]
                    v[:, 1, :, :] = tmp
        return psi


def run_exact(circuit: Circuit) -> StateVector:
    """Exact statevector of the circuit applied to |0...0>."""
    psi = CompiledCircuit(circuit).run()
    state = StateVector(circuit.num_qubits, psi)
    state.validate(tol=1e-10)
    return state


def expectation_exact(state: StateVector, obs: PauliObservable) -> float:
    """<psi|P|psi> for a Pauli string, computed without forming the matrix."""
    if obs.num_qubits != state.num_qubits:
        raise ConfigurationError("observable qubit count does not match state")
    psi = state.amplitudes
    x_mask, yz_mask, y_count = pauli_masks(obs)
    idx = _arange(len(psi))
    signs = _parity_signs(idx, yz_mask)
    flipped = (idx ^ np.uint64(x_mask)).astype(np.int64)
    total = (1j**y_count) * np.sum(signs * np.conj(psi[flipped]) * psi)
    if abs(total.imag) > 1e-9:
        raise SimulationError(f"non-real Pauli expectation {total}")
    return float(total.real)


# ---------------------------------------------------------------------------
# Density-matrix simulation
# ---------------------------------------------------------------------------


def _apply_1q_superop(rho_t: np.ndarray, s4: np.ndarray, n: int, q: int) -> np.ndarray:
    out = np.tensordot(s4.reshape(2, 2, 2, 2), rho_t, axes=([2, 3], [q, n + q]))
    # Contiguity matters: the RZ fast path mutates reshaped views in place.
    return np.ascontiguousarray(np.moveaxis(out, (0, 1), (q, n + q)))


def _apply_2q_superop(
    rho_t: np.ndarray, s16: np.ndarray, n: int, a: int, b: int
) -> np.ndarray:
    s = s16.reshape(2, 2, 2, 2, 2, 2, 2, 2)
    out = np.tensordot(s, rho_t, axes=([4, 5, 6, 7], [a, b, n + a, n + b]))
    return np.ascontiguousarray(np.moveaxis(out, (0, 1, 2, 3), (a, b, n + a, n + b)))


def _apply_rz_density(rho_t: np.ndarray, n: int, q: int, angle: float) -> None:
    e0 = np.exp(-0.5j * angle)
    dim = 2**n
    a, b = 2**q, 2 ** (n - 1 - q)
    rows = rho_t.reshape(a, 2, b * dim)
    rows[:, 0, :] *= e0
    rows[:, 1, :] *= e0.conjugate()
    cols = rho_t.reshape(dim * a, 2, b)
    cols[:, 0, :] *= e0.conjugate()
    cols[:, 1, :] *= e0


def run_noisy(circuit: Circuit, noise_model) -> DensityMatrix:
    """Density-matrix propagation through the noise model's channels.

    Every SX/X/I/CNOT gate must be covered by a channel; RZ is perfect by
    construction.  An X gate without a dedicated channel is applied as two
    consecutive SX channels.
    """
    n = circuit.num_qubits
    if n > MAX_DENSITY_QUBITS:
        raise ConfigurationError(
            f"{n} qubits exceeds the density-matrix cap of {MAX_DENSITY_QUBITS}"
        )
    if noise_model.num_qubits != n:
        raise ConfigurationError(
            f"noise model covers {noise_model.num_qubits} qubits, circuit has {n}"
        )
    rho_t = noise_model.initial_density().reshape((2,) * (2 * n))
    for gate in circuit.gates:
        if gate.kind == "RZ":
            _apply_rz_density(rho_t, n, gate.qubits[0], gate.angle)
        elif gate.kind == "CNOT":
            chan = noise_model.two_qubit_channel(gate.qubits)
            rho_t = _apply_2q_superop(
                rho_t, chan.superoperator, n, gate.qubits[0], gate.qubits[1]
            )
        else:
            q = gate.qubits[0]
            chan = noise_model.one_qubit_channel(gate.kind, q)
            if chan is not None:
                rho_t = _apply_1q_superop(rho_t, chan.superoperator, n, q)
            elif gate.kind == "X":
                sx_chan = noise_model.one_qubit_channel("SX", q)
                if sx_chan is None:
                    raise ConfigurationError(f"no channel for X or SX on qubit {q}")
                s4 = sx_chan.superoperator
                rho_t = _apply_1q_superop(rho_t, s4, n, q)
                rho_t = _apply_1q_superop(rho_t, s4, n, q)
            else:
                raise ConfigurationError(f"no channel for {gate.kind} on qubit {q}")
    dim = 2**n
    rho = np.ascontiguousarray(rho_t.reshape(dim, dim))
    trace = float(np.trace(rho).real)
    if abs(trace - 1.0) > 1e-8:
        raise SimulationError(f"noisy run lost trace: {trace}")
    return DensityMatrix(n, rho)


def expectation_noisy(state: DensityMatrix, obs: PauliObservable) -> float:
    """Tr(rho P) for a Pauli string."""
    if obs.num_qubits != state.num_qubits:
        raise ConfigurationError("observable qubit count does not match state")
    rho = state.matrix
    x_mask, yz_mask, y_count = pauli_masks(obs)
    idx = _arange(rho.shape[0])
    signs = _parity_signs(idx, yz_mask)
    flipped = (idx ^ np.uint64(x_mask)).astype(np.int64)
    total = (1j**y_count) * np.sum(rho[idx.astype(np.int64), flipped] * signs)
    if abs(total.imag) > 1e-8:
        raise SimulationError(f"non-real Pauli expectation {total}")
    return float(total.real)


# ---------------------------------------------------------------------------
# Shot sampling
# ---------------------------------------------------------------------------


def _rotate_density(rho: np.ndarray, n: int, u: np.ndarray) -> np.ndarray:
    """Apply the same 1-qubit unitary to every qubit of rho, noiselessly."""
    rho_t = rho.reshape((2,) * (2 * n))
    uc = u.conj()
    for q in range(n):
        rho_t = np.moveaxis(np.tensordot(u, rho_t, axes=(1, q)), 0, q)
        rho_t = np.moveaxis(np.tensordot(uc, rho_t, axes=(1, n + q)), 0, n + q)
    return rho_t.reshape(rho.shape)


def sample_pauli_group(
    state: DensityMatrix,
    basis: str,
    observables: list[PauliObservable],
    shots: int,
    seed: int,
    sample_log=None,
) -> list[ShotEstimate]:
    """Sample all same-basis observables from one shared set of shots.

    The state is rotated (noiselessly) so the basis letter becomes Z, the
    diagonal is sampled `shots` times, and each observable's estimate is the
    mean +/-1 parity over its support, all on the identical sample set.
    `sample_log`, if given, is a writable text stream receiving one
    "shot,bitstring" CSV row per sample.
    """
    if basis not in BASIS_ROTATIONS:
        raise ConfigurationError(f"unknown measurement basis {basis!r}")
    if shots < 1:
        raise ConfigurationError("shots must be positive")
    n = state.num_qubits
    masks = []
    for obs in observables:
        if obs.num_qubits != n:
            raise ConfigurationError("observable qubit count does not match state")
        if obs.weight == 0:
            raise ConfigurationError("cannot sample the identity observable")
        if obs.basis_letter() != basis:
            raise ConfigurationError(
                f"observable {obs.label} is not diagonal in the {basis} basis"
            )
        mask = 0
        for q in obs.support:
            mask |= _bit(n, q)
        masks.append(mask)

    rotation = BASIS_ROTATIONS[basis]
    rho = state.matrix if rotation is None else _rotate_density(state.matrix, n, rotation)
    probs = np.real(np.diag(rho)).copy()
    lowest = float(probs.min())
    if lowest < -1e-8:
        raise SimulationError(f"negative sampling probability {lowest:.2e}")
    np.clip(probs, 0.0, None, out=probs)
    total = probs.sum()
    if abs(total - 1.0) > 1e-6:
        raise SimulationError(f"sampling probabilities sum to {total}")
    probs /= total

    seed_id = seed_fingerprint(seed)
    rng = rng_from(seed)
    outcomes = rng.choice(len(probs), size=shots, p=probs).astype(np.uint64)
    if sample_log is not None:
        for i, a in enumerate(outcomes):
            sample_log.write(f"{i},{int(a):0{n}b}\n")
    estimates = []
    for obs, mask in zip(observables, masks):
        signs = _parity_signs(outcomes, mask)
        estimates.append(
            ShotEstimate(obs.label, float(signs.mean()), shots, seed_id)
        )
    return estimates


# ---------------------------------------------------------------------------
# Adjoint-mode gradient for variational optimization
# ---------------------------------------------------------------------------


def _apply_op(psi: np.ndarray, op: tuple, half: np.ndarray, dagger: bool) -> None:
    code = op[0]
    if code == "rz":
        _, a, b, slot = op
        e = half[slot].conjugate() if dagger else half[slot]
        p = psi.reshape(a, 2, b)
        p[:, 0, :] *= e
        p[:, 1, :] *= e.conjugate()
    elif code == "1q":
        _, a, b, m = op
        if dagger:
            m = m.conj().T
        p = psi.reshape(a, 2, b)
        t0 = m[0, 0] * p[:, 0, :] + m[0, 1] * p[:, 1, :]
        t1 = m[1, 0] * p[:, 0, :] + m[1, 1] * p[:, 1, :]
        p[:, 0, :] = t0
        p[:, 1, :] = t1
    else:
        _, shape, control_first = op
        p = psi.reshape(shape)
        v = p[:, 1] if control_first else p[:, :, :, 1]
        if control_first:
            tmp = v[:, :, 0, :].copy()
            v[:, :, 0, :] = v[:, :, 1, :]
            v[:, :, 1, :] = tmp
        else:
            tmp = v[:, 0, :, :].copy()
            v[:, 0, :, :] = v[:, 1, :, :]
            v[:, 1, :, :] = tmp


def adjoint_gradient(
    compiled: CompiledCircuit,
    angles: np.ndarray,
    apply_operator,
) -> tuple[float, np.ndarray]:
    """Expectation of a Hermitian operator and its gradient w.r.t. RZ slots.

    `apply_operator(psi) -> O psi` supplies the operator.  One forward and one
    backward sweep give all slot derivatives exactly (no finite differences).
    """
    half = np.exp(np.asarray(angles, dtype=float) * -0.5j)
    psi = compiled.run(angles)
    lam = apply_operator(psi)
    value = float(np.vdot(psi, lam).real)
    grad = np.zeros(len(angles), dtype=float)
    for op in reversed(compiled.ops):
        _apply_op(psi, op, half, dagger=True)
        if op[0] == "rz":
            _, a, b, slot = op
            p = psi.reshape(a, 2, b)
            l3 = lam.reshape(a, 2, b)
            s0 = np.vdot(l3[:, 0, :], p[:, 0, :])
            s1 = np.vdot(l3[:, 1, :], p[:, 1, :])
            # dU/dtheta = (-i/2) Z RZ(theta)
            d = (-0.5j) * (half[slot] * s0 - half[slot].conjugate() * s1)
            grad[slot] = 2.0 * d.real
        _apply_op(lam, op, half, dagger=True)
    return value, grad
