"""Circuit representation for the native gate set {X, SX, RZ, CNOT, I}.

Gates and circuits are immutable value objects.  RZ is the only parameterized
gate; it is Clifford exactly when its angle is an integer multiple of pi/2,
which is what the training-circuit machinery keys on.  The text format keeps
angles at full binary precision so parse/serialize round-trips are exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CircuitError

NATIVE_GATES = ("X", "SX", "RZ", "CNOT", "I")
ONE_QUBIT_GATES = ("X", "SX", "RZ", "I")
CLIFFORD_ANGLE_TOL = 1e-9

HALF_PI = math.pi / 2.0

# i**k for k = 0..3, exact; e^{i k pi/2} without trig roundoff.
_UNIT_PHASES = (1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j)


class CircuitParseError(CircuitError):
    """Text that does not parse as a circuit; carries the offending line."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class Gate:
    """One native gate.  `qubits` is (target,) or (control, target)."""

    kind: str
    qubits: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in NATIVE_GATES:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        arity = 2 if self.kind == "CNOT" else 1
        if len(self.qubits) != arity:
            raise CircuitError(f"{self.kind} takes {arity} qubit(s), got {self.qubits}")
        if any(q < 0 for q in self.qubits):
            raise CircuitError(f"negative qubit index in {self.qubits}")
        if self.kind == "CNOT" and self.qubits[0] == self.qubits[1]:
            raise CircuitError("CNOT control and target must differ")
        if self.kind == "RZ":
            if self.angle is None or not math.isfinite(self.angle):
                raise CircuitError("RZ requires a finite angle")
        elif self.angle is not None:
            raise CircuitError(f"{self.kind} takes no angle")


def rz(qubit: int, angle: float) -> Gate:
    return Gate("RZ", (qubit,), float(angle))


def sx(qubit: int) -> Gate:
    return Gate("SX", (qubit,))


def x(qubit: int) -> Gate:
    return Gate("X", (qubit,))


def cnot(control: int, target: int) -> Gate:
    return Gate("CNOT", (control, target))


@dataclass(frozen=True)
class Circuit:
    num_qubits: int
    gates: tuple[Gate, ...]

    def __post_init__(self):
        if self.num_qubits < 1:
            raise CircuitError("circuit needs at least one qubit")
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            if max(g.qubits) >= self.num_qubits:
                raise CircuitError(
                    f"gate {g.kind} on {g.qubits} out of range for {self.num_qubits} qubits"
                )

    def __len__(self) -> int:
        return len(self.gates)

    def non_clifford_positions(self, tol: float = CLIFFORD_ANGLE_TOL) -> tuple[int, ...]:
        return tuple(i for i, g in enumerate(self.gates) if not is_clifford(g, tol))

    def non_clifford_count(self, tol: float = CLIFFORD_ANGLE_TOL) -> int:
        return len(self.non_clifford_positions(tol))

    def with_replaced(self, replacements: dict[int, Gate]) -> "Circuit":
        """Copy with the gates at the given positions swapped out."""
        gates = list(self.gates)
        for pos, gate in replacements.items():
            gates[pos] = gate
        return Circuit(self.num_qubits, tuple(gates))


def is_clifford(gate: Gate, tol: float = CLIFFORD_ANGLE_TOL) -> bool:
    """X, SX, CNOT and I are Clifford; RZ(theta) only for theta = k*pi/2.

    Uses IEEE remainder against pi/2, so theta and theta + 2*pi agree exactly
    (2*pi is a power-of-two multiple of pi/2 in floats).
    """
    if gate.kind != "RZ":
        return True
    return abs(math.remainder(gate.angle, HALF_PI)) <= tol


def rz_distance(theta: float, k: int) -> float:
    """Phase-fixed Frobenius distance between RZ(theta) and RZ(k*pi/2).

    Both gates are first rescaled so their |0><0| entry is exactly 1, i.e.
    compared as diag(1, e^{i theta}) vs diag(1, e^{i k pi/2}); the distance is
    then |e^{i theta} - e^{i k pi/2}|, equal to 2|sin((theta - k pi/2)/2)|.
    """
    if not isinstance(k, (int, np.integer)):
        raise CircuitError(f"k must be an integer, got {k!r}")
    return abs(complex(math.cos(theta), math.sin(theta)) - _UNIT_PHASES[int(k) % 4])


@dataclass(frozen=True)
class PauliObservable:
    """Tensor product of single-qubit Paulis, stored as a letter per qubit."""

    num_qubits: int
    letters: str

    def __post_init__(self):
        if len(self.letters) != self.num_qubits:
            raise CircuitError(
                f"need {self.num_qubits} letters, got {len(self.letters)}"
            )
        bad = set(self.letters) - set("IXYZ")
        if bad:
            raise CircuitError(f"invalid Pauli letters {sorted(bad)}")

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(q for q, c in enumerate(self.letters) if c != "I")

    @property
    def weight(self) -> int:
        return len(self.support)

    @property
    def label(self) -> str:
        """Compact 1-indexed name, e.g. 'X1X4' for X on qubits 0 and 3."""
        if not self.support:
            return "Id"
        return "".join(f"{self.letters[q]}{q + 1}" for q in self.support)

    def basis_letter(self) -> str:
        """The single non-I letter, if there is exactly one kind."""
        kinds = sorted(set(self.letters) - {"I"})
        if len(kinds) != 1:
            raise CircuitError(f"observable {self.label} mixes letters {kinds}")
        return kinds[0]


def pauli_on(num_qubits: int, assignments: dict[int, str]) -> PauliObservable:
    """Build an observable from {qubit: letter}, identities elsewhere."""
    letters = ["I"] * num_qubits
    for q, letter in assignments.items():
        if not 0 <= q < num_qubits:
            raise CircuitError(f"qubit {q} out of range")
        letters[q] = letter
    return PauliObservable(num_qubits, "".join(letters))


# ---------------------------------------------------------------------------
# Text format
#
#   qubits 6
#   RZ 0 0.7853981633974483
#   SX 1
#   CNOT 0 1        # comment
#
# Angles are written with repr(), the shortest string that round-trips the
# exact float, so serialize/parse is lossless.
# ---------------------------------------------------------------------------


def serialize_circuit(circuit: Circuit) -> str:
    lines = [f"qubits {circuit.num_qubits}"]
    for g in circuit.gates:
        if g.kind == "RZ":
            lines.append(f"RZ {g.qubits[0]} {g.angle!r}")
        elif g.kind == "CNOT":
            lines.append(f"CNOT {g.qubits[0]} {g.qubits[1]}")
        else:
            lines.append(f"{g.kind} {g.qubits[0]}")
    return "\n".join(lines) + "\n"


def parse_circuit(text: str) -> Circuit:
    num_qubits = None
    gates: list[Gate] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if num_qubits is None:
            if fields[0] != "qubits" or len(fields) != 2:
                raise CircuitParseError("expected header 'qubits <n>'", line_no)
            try:
                num_qubits = int(fields[1])
            except ValueError:
                raise CircuitParseError(f"bad qubit count {fields[1]!r}", line_no) from None
            if num_qubits < 1:
                raise CircuitParseError("qubit count must be positive", line_no)
            continue
        kind = fields[0]
        try:
            if kind == "RZ":
                if len(fields) != 3:
                    raise CircuitError("RZ takes a qubit and an angle")
                gate = rz(_parse_qubit(fields[1], num_qubits), float(fields[2]))
            elif kind == "CNOT":
                if len(fields) != 3:
                    raise CircuitError("CNOT takes two qubits")
                gate = cnot(
                    _parse_qubit(fields[1], num_qubits),
                    _parse_qubit(fields[2], num_qubits),
                )
            elif kind in ("X", "SX", "I"):
                if len(fields) != 2:
                    raise CircuitError(f"{kind} takes one qubit")
                gate = Gate(kind, (_parse_qubit(fields[1], num_qubits),))
            else:
                raise CircuitError(f"unknown gate {kind!r}")
        except (CircuitError, ValueError) as exc:
            raise CircuitParseError(str(exc), line_no) from None
        gates.append(gate)
    if num_qubits is None:
        raise CircuitParseError("empty circuit text, no 'qubits' header", 1)
    return Circuit(num_qubits, tuple(gates))


def _parse_qubit(token: str, num_qubits: int) -> int:
    q = int(token)
    if not 0 <= q < num_qubits:
        raise CircuitError(f"qubit {q} out of range [0, {num_qubits})")
    return q


def load_circuit(path) -> Circuit:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_circuit(fh.read())


def save_circuit(circuit: Circuit, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_circuit(circuit))
