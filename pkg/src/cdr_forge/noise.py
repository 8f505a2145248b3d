"""Noise channels as Pauli transfer matrices and per-device noise models.

A channel on n qubits (n = 1 or 2) is stored as its Pauli transfer matrix
R_ij = Tr[P_i Lambda(P_j)] / 2^n over the Pauli basis ordered I, X, Y, Z per
qubit (first qubit most significant).  Convex mixtures of channels are convex
mixtures of their transfer matrices, which is how device-strength noise is
dialed in: channel = p * base + (1 - p) * perfect, with p drawn per qubit or
per edge.

The built-in base family composes the perfect gate with depolarizing and
amplitude-damping noise; a channel file can replace any entry verbatim.
RZ gates carry no channel anywhere: they stay perfect in noisy runs.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError
from .seeding import rng_from

_PAULI_1Q = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)

TRACE_TOL = 1e-10
CHOI_EIG_TOL = -1e-8


def pauli_basis(num_qubits: int) -> list[np.ndarray]:
    """All 4^n Pauli strings, index in base 4, first qubit most significant."""
    mats = list(_PAULI_1Q)
    for _ in range(num_qubits - 1):
        mats = [np.kron(a, b) for a in mats for b in _PAULI_1Q]
    return mats


_PAULI_STACK_CACHE: dict[int, np.ndarray] = {}


def _pauli_stack(num_qubits: int) -> np.ndarray:
    """Row i is the row-major flattening of Pauli string i."""
    stack = _PAULI_STACK_CACHE.get(num_qubits)
    if stack is None:
        basis = pauli_basis(num_qubits)
        stack = np.stack([p.reshape(-1) for p in basis])
        _PAULI_STACK_CACHE[num_qubits] = stack
    return stack


@dataclass(frozen=True, eq=False)
class ProcessMatrix:
    """A quantum channel in Pauli-transfer form."""

    num_qubits: int
    ptm: np.ndarray

    def __post_init__(self):
        if self.num_qubits not in (1, 2):
            raise ConfigurationError("channels are 1- or 2-qubit only")
        dim = 4**self.num_qubits
        ptm = np.asarray(self.ptm, dtype=float)
        if ptm.shape != (dim, dim):
            raise ConfigurationError(f"transfer matrix must be {dim}x{dim}")
        object.__setattr__(self, "ptm", ptm)

    @cached_property
    def superoperator(self) -> np.ndarray:
        """Action on row-major vec(rho) in the computational basis."""
        stack = _pauli_stack(self.num_qubits)
        scale = 1.0 / 2**self.num_qubits
        return scale * (stack.T @ self.ptm.astype(complex) @ stack.conj())

    @cached_property
    def choi(self) -> np.ndarray:
        """Choi matrix sum_kl |k><l| (x) Lambda(|k><l|); PSD iff the channel is CP."""
        d = 2**self.num_qubits
        s4 = self.superoperator.reshape(d, d, d, d)
        return np.ascontiguousarray(s4.transpose(2, 0, 3, 1).reshape(d * d, d * d))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        d = 2**self.num_qubits
        return (self.superoperator @ rho.reshape(-1)).reshape(d, d)


@dataclass(frozen=True)
class CptpReport:
    trace_residual: float
    min_choi_eigenvalue: float

    @property
    def ok(self) -> bool:
        return self.trace_residual <= TRACE_TOL and self.min_choi_eigenvalue >= CHOI_EIG_TOL


def validate_cptp(channel: ProcessMatrix, strict: bool = False) -> CptpReport:
    """Check trace preservation (first PTM row) and complete positivity (Choi)."""
    dim = 4**channel.num_qubits
    expected = np.zeros(dim)
    expected[0] = 1.0
    trace_residual = float(np.max(np.abs(channel.ptm[0] - expected)))
    min_eig = float(np.linalg.eigvalsh(channel.choi)[0])
    report = CptpReport(trace_residual, min_eig)
    if strict and not report.ok:
        raise ConfigurationError(
            "channel is not CPTP: trace residual "
            f"{trace_residual:.3e}, min Choi eigenvalue {min_eig:.3e}"
        )
    return report


# ---------------------------------------------------------------------------
# Channel constructors
# ---------------------------------------------------------------------------


def ptm_from_unitary(u: np.ndarray) -> ProcessMatrix:
    n = round(math.log2(u.shape[0]))
    basis = pauli_basis(n)
    dim = len(basis)
    scale = 1.0 / 2**n
    ptm = np.empty((dim, dim))
    for j, pj in enumerate(basis):
        image = u @ pj @ u.conj().T
        for i, pi in enumerate(basis):
            ptm[i, j] = scale * np.trace(pi @ image).real
    return ProcessMatrix(n, ptm)


def ptm_from_kraus(kraus: list[np.ndarray]) -> ProcessMatrix:
    n = round(math.log2(kraus[0].shape[0]))
    basis = pauli_basis(n)
    dim = len(basis)
    scale = 1.0 / 2**n
    ptm = np.zeros((dim, dim))
    for k in kraus:
        kd = k.conj().T
        for j, pj in enumerate(basis):
            image = k @ pj @ kd
            for i, pi in enumerate(basis):
                ptm[i, j] += scale * np.trace(pi @ image).real
    return ProcessMatrix(n, ptm)


def depolarizing_ptm(num_qubits: int, rate: float) -> ProcessMatrix:
    """rho -> (1 - rate) rho + rate I / 2^n."""
    dim = 4**num_qubits
    diag = np.full(dim, 1.0 - rate)
    diag[0] = 1.0
    return ProcessMatrix(num_qubits, np.diag(diag))


def amplitude_damping_ptm(gamma: float) -> ProcessMatrix:
    s = math.sqrt(1.0 - gamma)
    ptm = np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, s, 0.0, 0.0],
            [0.0, 0.0, s, 0.0],
            [gamma, 0.0, 0.0, 1.0 - gamma],
        ]
    )
    return ProcessMatrix(1, ptm)


def compose(second: ProcessMatrix, first: ProcessMatrix) -> ProcessMatrix:
    """Channel equal to `first` followed by `second`."""
    if second.num_qubits != first.num_qubits:
        raise ConfigurationError("cannot compose channels of different arity")
    return ProcessMatrix(first.num_qubits, second.ptm @ first.ptm)


def kron_channels(a: ProcessMatrix, b: ProcessMatrix) -> ProcessMatrix:
    return ProcessMatrix(a.num_qubits + b.num_qubits, np.kron(a.ptm, b.ptm))


def mix_channel(base: ProcessMatrix, perfect: ProcessMatrix, p: float) -> ProcessMatrix:
    """Convex combination p * base + (1 - p) * perfect."""
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"mixing probability {p} outside [0, 1]")
    if base.num_qubits != perfect.num_qubits:
        raise ConfigurationError("mixing channels of different arity")
    return ProcessMatrix(base.num_qubits, p * base.ptm + (1.0 - p) * perfect.ptm)


# ---------------------------------------------------------------------------
# Noise models
# ---------------------------------------------------------------------------

_GATE_UNITARIES = {
    "SX": 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "I": np.eye(2, dtype=complex),
}

_CNOT_UNITARY = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)

NOISY_ONE_QUBIT_GATES = ("SX", "X", "I")


@dataclass(frozen=True)
class SurrogateSpec:
    """Strength of the built-in base channel family (before mixing)."""

    depolarizing_1q: float = 0.01
    depolarizing_2q: float = 0.1
    amplitude_damping: float = 0.01
    excited_population: float = 0.02  # |1><1| weight of the base initial state

    def base_one_qubit(self, kind: str) -> ProcessMatrix:
        gate = ptm_from_unitary(_GATE_UNITARIES[kind])
        depol = depolarizing_ptm(1, self.depolarizing_1q)
        damp = amplitude_damping_ptm(self.amplitude_damping)
        return compose(damp, compose(depol, gate))

    def base_cnot(self) -> ProcessMatrix:
        gate = ptm_from_unitary(_CNOT_UNITARY)
        depol = depolarizing_ptm(2, self.depolarizing_2q)
        damp1 = amplitude_damping_ptm(self.amplitude_damping)
        return compose(kron_channels(damp1, damp1), compose(depol, gate))

    def base_initial_state(self) -> np.ndarray:
        return np.diag(
            [1.0 - self.excited_population, self.excited_population]
        ).astype(complex)


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Per-qubit and per-edge channels plus a noisy initial product state."""

    num_qubits: int
    one_qubit: dict  # (gate kind, qubit) -> ProcessMatrix
    two_qubit: dict  # (control, target) -> ProcessMatrix
    initial_state: tuple  # per-qubit 2x2 density matrices
    mixing: dict = field(default_factory=dict)  # diagnostics: where each p landed
    # Qubits whose initial state was set explicitly (vs defaulted to |0><0|);
    # only these win when this model overrides another.
    initial_specified: tuple = ()

    def __post_init__(self):
        if len(self.initial_state) != self.num_qubits:
            raise ConfigurationError("initial state must cover every qubit")
        for (kind, q), chan in self.one_qubit.items():
            if kind not in NOISY_ONE_QUBIT_GATES or not 0 <= q < self.num_qubits:
                raise ConfigurationError(f"bad one-qubit channel key ({kind}, {q})")
            if chan.num_qubits != 1:
                raise ConfigurationError("one-qubit channel has wrong arity")
        for (c, t), chan in self.two_qubit.items():
            if c == t or not (0 <= c < self.num_qubits and 0 <= t < self.num_qubits):
                raise ConfigurationError(f"bad edge ({c}, {t})")
            if chan.num_qubits != 2:
                raise ConfigurationError("two-qubit channel has wrong arity")

    def one_qubit_channel(self, kind: str, qubit: int):
        return self.one_qubit.get((kind, qubit))

    def two_qubit_channel(self, qubits: tuple[int, int]) -> ProcessMatrix:
        chan = self.two_qubit.get((qubits[0], qubits[1]))
        if chan is None:
            raise ConfigurationError(f"no channel for CNOT on edge {qubits}")
        return chan

    def initial_density(self) -> np.ndarray:
        rho = np.array([[1.0]], dtype=complex)
        for site in self.initial_state:
            rho = np.kron(rho, site)
        return rho

    def validate(self, strict: bool = True) -> dict:
        reports = {}
        for key, chan in list(self.one_qubit.items()) + list(self.two_qubit.items()):
            reports[key] = validate_cptp(chan, strict=strict)
        for q, site in enumerate(self.initial_state):
            site = np.asarray(site)
            if abs(np.trace(site).real - 1.0) > TRACE_TOL:
                raise ConfigurationError(f"initial state of qubit {q} has bad trace")
            if np.max(np.abs(site - site.conj().T)) > 1e-10:
                raise ConfigurationError(f"initial state of qubit {q} not Hermitian")
            if np.linalg.eigvalsh(site)[0] < CHOI_EIG_TOL:
                raise ConfigurationError(f"initial state of qubit {q} not PSD")
        return reports

    def with_overrides(self, other: "NoiseModel") -> "NoiseModel":
        """This model with any channel or state present in `other` replacing ours."""
        if other.num_qubits != self.num_qubits:
            raise ConfigurationError("override model has different qubit count")
        one = dict(self.one_qubit)
        one.update(other.one_qubit)
        two = dict(self.two_qubit)
        two.update(other.two_qubit)
        mixing = dict(self.mixing)
        mixing.update(other.mixing)
        initial = list(self.initial_state)
        for q in other.initial_specified:
            initial[q] = other.initial_state[q]
        specified = tuple(sorted(set(self.initial_specified) | set(other.initial_specified)))
        return NoiseModel(self.num_qubits, one, two, tuple(initial), mixing, specified)


def ring_topology(num_qubits: int) -> list[tuple[int, int]]:
    if num_qubits < 2:
        return []
    if num_qubits == 2:
        return [(0, 1)]
    return [(i, (i + 1) % num_qubits) for i in range(num_qubits)]


def perfect_model(num_qubits: int, topology=None) -> NoiseModel:
    """All-perfect channels; noisy runs reproduce exact runs."""
    return build_random_model(num_qubits, (0.0, 0.0), seed=0, topology=topology)


def build_random_model(
    num_qubits: int,
    p_range: tuple[float, float] = (0.05, 0.15),
    seed: int = 0,
    topology: list[tuple[int, int]] | None = None,
    surrogate: SurrogateSpec | None = None,
) -> NoiseModel:
    """Draw per-qubit and per-edge mixing strengths and build all channels.

    Each qubit gets one p used for its SX, X and I channels and its initial
    state; each topology edge gets one p for its CNOT channel.  Draw order is
    qubits 0..n-1 then edges in topology order, so a fixed seed pins every
    channel regardless of later use.
    """
    lo, hi = p_range
    if not 0.0 <= lo <= hi <= 1.0:
        raise ConfigurationError(f"bad mixing range [{lo}, {hi}]")
    surrogate = surrogate or SurrogateSpec()
    topology = ring_topology(num_qubits) if topology is None else list(topology)
    rng = rng_from(seed)
    qubit_p = [float(rng.uniform(lo, hi)) for _ in range(num_qubits)]
    edge_p = [float(rng.uniform(lo, hi)) for _ in topology]

    one_qubit = {}
    mixing = {}
    ground = np.diag([1.0, 0.0]).astype(complex)
    base_state = surrogate.base_initial_state()
    initial = []
    for q in range(num_qubits):
        p = qubit_p[q]
        for kind in NOISY_ONE_QUBIT_GATES:
            perfect = ptm_from_unitary(_GATE_UNITARIES[kind])
            one_qubit[(kind, q)] = mix_channel(surrogate.base_one_qubit(kind), perfect, p)
        initial.append(p * base_state + (1.0 - p) * ground)
        mixing[f"qubit:{q}"] = p

    two_qubit = {}
    perfect_cnot = ptm_from_unitary(_CNOT_UNITARY)
    base_cnot = surrogate.base_cnot()
    for (c, t), p in zip(topology, edge_p):
        two_qubit[(c, t)] = mix_channel(base_cnot, perfect_cnot, p)
        mixing[f"edge:{c}-{t}"] = p

    model = NoiseModel(
        num_qubits, one_qubit, two_qubit, tuple(initial), mixing, tuple(range(num_qubits))
    )
    model.validate(strict=True)
    return model


# ---------------------------------------------------------------------------
# Channel files
# ---------------------------------------------------------------------------


def save_noise_model(model: NoiseModel, path) -> None:
    doc = {
        "qubits": model.num_qubits,
        "one_qubit": [
            {"gate": kind, "qubit": q, "ptm": chan.ptm.tolist()}
            for (kind, q), chan in sorted(model.one_qubit.items())
        ],
        "two_qubit": [
            {"edge": [c, t], "ptm": chan.ptm.tolist()}
            for (c, t), chan in sorted(model.two_qubit.items())
        ],
        "initial_state": [
            {
                "qubit": q,
                "rho": [[float(z.real), float(z.imag)] for z in np.asarray(site).reshape(-1)],
            }
            for q, site in enumerate(model.initial_state)
        ],
        "mixing": model.mixing,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_noise_model(path) -> NoiseModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"channel file {path} is not valid JSON: {exc}") from None
    try:
        num_qubits = int(doc["qubits"])
        one_qubit = {}
        for entry in doc.get("one_qubit", []):
            key = (entry["gate"], int(entry["qubit"]))
            one_qubit[key] = ProcessMatrix(1, np.array(entry["ptm"], dtype=float))
        two_qubit = {}
        for entry in doc.get("two_qubit", []):
            c, t = entry["edge"]
            two_qubit[(int(c), int(t))] = ProcessMatrix(2, np.array(entry["ptm"], dtype=float))
        initial = [np.diag([1.0, 0.0]).astype(complex) for _ in range(num_qubits)]
        specified = []
        for entry in doc.get("initial_state", []):
            flat = np.array(
                [complex(re, im) for re, im in entry["rho"]], dtype=complex
            )
            q = int(entry["qubit"])
            initial[q] = flat.reshape(2, 2)
            specified.append(q)
        mixing = doc.get("mixing", {})
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ConfigurationError(f"channel file {path} is malformed: {exc}") from None
    model = NoiseModel(
        num_qubits, one_qubit, two_qubit, tuple(initial), mixing, tuple(sorted(specified))
    )
    model.validate(strict=True)
    return model
