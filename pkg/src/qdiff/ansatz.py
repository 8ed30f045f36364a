"""Circuit families and classical-to-quantum encoders."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .sim import DTYPE, CircuitTemplate, Gate, GateKind, Param, Statevector, apply_gate


class Family(str, enum.Enum):
    STRONGLY_ENTANGLING = "strongly_entangling"
    QMLP = "qmlp"
    C14 = "c14"
    OPTIC = "optic"
    QUANTUMNAT = "quantumnat"


BASELINE_QUBITS = 6

# (single-qubit gate, ring entangler) per layer
_BASELINE_LAYOUT = {
    Family.QMLP: (GateKind.ROT, GateKind.CRX),
    Family.C14: (GateKind.RY, GateKind.CRX),
    Family.OPTIC: (GateKind.ROT, GateKind.CNOT),
    Family.QUANTUMNAT: (GateKind.U3, GateKind.CU3),
}


@dataclass(frozen=True)
class AnsatzSpec:
    family: Family
    num_qubits: int
    num_layers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))

    @property
    def num_params(self) -> int:
        if self.family is Family.STRONGLY_ENTANGLING:
            return 3 * self.num_qubits * self.num_layers
        rot, ent = _BASELINE_LAYOUT[self.family]
        return self.num_qubits * (rot.num_params + ent.num_params) * self.num_layers

    def to_dict(self):
        return {"family": self.family.value, "num_qubits": self.num_qubits, "num_layers": self.num_layers}

    @classmethod
    def from_dict(cls, d):
        return cls(Family(d["family"]), int(d["num_qubits"]), int(d["num_layers"]))


class _Counter:
    def __init__(self):
        self.next = 0

    def take(self, n):
        out = tuple(Param(self.next + i) for i in range(n))
        self.next += n
        return out


def _ring(q):
    # qubit i controls qubit (i + 1) mod q; a single qubit has no ring
    return [(i, (i + 1) % q) for i in range(q)] if q > 1 else []


def build_strongly_entangling(spec: AnsatzSpec) -> CircuitTemplate:
    """ROT on every qubit, then a CNOT ring, repeated ``num_layers`` times."""
    if spec.family is not Family.STRONGLY_ENTANGLING:
        raise ConfigurationError(f"expected STRONGLY_ENTANGLING, got {spec.family.name}")
    if spec.num_layers < 1:
        raise InvalidInputError(f"num_layers must be >= 1, got {spec.num_layers}")
    q = spec.num_qubits
    counter = _Counter()
    gates = []
    for _ in range(spec.num_layers):
        for i in range(q):
            gates.append(Gate(GateKind.ROT, (i,), counter.take(3)))
        for c, t in _ring(q):
            gates.append(Gate(GateKind.CNOT, (c, t)))
    return CircuitTemplate(q, gates)


def build_baseline_qnn(spec: AnsatzSpec) -> CircuitTemplate:
    """One of the four six-qubit classifier circuits, ring-entangled per layer."""
    if spec.family not in _BASELINE_LAYOUT:
        raise ConfigurationError(f"{spec.family.name} is not a baseline QNN family")
    if spec.num_qubits != BASELINE_QUBITS:
        raise InvalidInputError(
            f"{spec.family.name} is defined on {BASELINE_QUBITS} qubits, got {spec.num_qubits}"
        )
    if spec.num_layers < 1:
        raise InvalidInputError(f"num_layers must be >= 1, got {spec.num_layers}")
    rot, ent = _BASELINE_LAYOUT[spec.family]
    q = spec.num_qubits
    counter = _Counter()
    gates = []
    for _ in range(spec.num_layers):
        for i in range(q):
            gates.append(Gate(rot, (i,), counter.take(rot.num_params)))
        for c, t in _ring(q):
            gates.append(Gate(ent, (c, t), counter.take(ent.num_params)))
    return CircuitTemplate(q, gates)


def build(spec: AnsatzSpec) -> CircuitTemplate:
    if spec.family is Family.STRONGLY_ENTANGLING:
        return build_strongly_entangling(spec)
    return build_baseline_qnn(spec)


# --- encoders ----------------------------------------------------------------


def normalized_amplitudes(pixels) -> np.ndarray:
    """Validated, unit-norm real amplitude vector for ``pixels``."""
    x = np.asarray(pixels, dtype=np.float64).reshape(-1)
    d = x.shape[0]
    if d < 2 or d & (d - 1):
        raise InvalidInputError(f"pixel count {d} is not a power of two")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("pixels must be finite")
    if np.any(x < 0):
        raise InvalidInputError("amplitude encoding needs nonnegative pixels")
    norm = np.linalg.norm(x)
    if norm == 0.0:
        raise InvalidInputError("all-zero pixel vector has no quantum state")
    return x / norm


def amplitude_encode(pixels) -> Statevector:
    return Statevector(normalized_amplitudes(pixels))


@dataclass(frozen=True)
class LabelEmbedding:
    """RX(2*pi*y/n) on ``label_qubit`` encodes class ``y`` of ``num_classes``."""

    num_classes: int
    label_qubit: int

    def __post_init__(self):
        if self.num_classes < 1:
            raise InvalidInputError(f"num_classes must be positive, got {self.num_classes}")

    def angle(self, label: int) -> float:
        if not 0 <= label < self.num_classes:
            raise InvalidInputError(f"label {label} outside 0..{self.num_classes - 1}")
        return 2 * math.pi * label / self.num_classes


def append_label_qubit(state: Statevector) -> Statevector:
    """``state`` tensored with a fresh ``|0>`` as the new least significant qubit."""
    amps = np.zeros(2 * len(state), dtype=DTYPE)
    amps[0::2] = state.amplitudes
    return Statevector(amps)


def embed_label(state: Statevector, emb: LabelEmbedding, label: int) -> Statevector:
    """Rotate the label qubit of ``state`` in place; the qubit must start in ``|0>``."""
    theta = emb.angle(label)
    q = emb.label_qubit
    if not 0 <= q < state.num_qubits:
        raise ConfigurationError(f"label qubit {q} out of range for {state.num_qubits} qubits")
    amps = state.amplitudes.reshape((2,) * state.num_qubits)
    excited = np.take(amps, 1, axis=q)
    if np.vdot(excited, excited).real > 1e-12:
        raise InvalidInputError("label qubit is not in |0>")
    return apply_gate(state, Gate(GateKind.RX, (q,), (theta,)))
