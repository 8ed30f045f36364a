"""Dense statevector simulation.

Conventions used throughout the package:

* qubit 0 is the most significant bit of a basis-state index, so for three
  qubits ``|q0 q1 q2>`` = ``|101>`` is index 5;
* amplitudes are ``complex128``;
* :func:`apply_gate` mutates the state it is given and returns it.
  :func:`run_circuit` copies its input first, so callers' states survive.

All kernels operate on arrays shaped ``(batch, 2**q)``. A batch row can carry
its own parameter values, which is how parameter-shift gradients evaluate
every shifted circuit in a single sweep.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence, Union

import numba
import numpy as np

from .errors import ConfigurationError, InvalidInputError

MAX_QUBITS = 12
DTYPE = np.complex128


class ShiftRule(enum.Enum):
    """Exact parameter-shift recipe for one angle slot of a gate."""

    TWO_TERM = 2  # generator eigenvalues {+-1/2} (or {0, 1}): one frequency
    FOUR_TERM = 4  # controlled rotations: eigenvalues {0, +-1/2}, two frequencies


class GateKind(enum.Enum):
    RX = "rx"
    RY = "ry"
    RZ = "rz"
    ROT = "rot"
    U3 = "u3"
    CRX = "crx"
    CRY = "cry"
    CRZ = "crz"
    CU3 = "cu3"
    CNOT = "cnot"
    X = "x"
    H = "h"

    @property
    def arity(self) -> int:
        return _SHAPES[self][0]

    @property
    def num_params(self) -> int:
        return _SHAPES[self][1]

    @property
    def shift_rules(self) -> tuple:
        return _SHAPES[self][2]

    @property
    def controlled(self) -> bool:
        return self.arity == 2


_TWO, _FOUR = ShiftRule.TWO_TERM, ShiftRule.FOUR_TERM
# kind -> (qubit count, parameter count, shift rule per parameter slot)
_SHAPES = {
    GateKind.RX: (1, 1, (_TWO,)),
    GateKind.RY: (1, 1, (_TWO,)),
    GateKind.RZ: (1, 1, (_TWO,)),
    GateKind.ROT: (1, 3, (_TWO,) * 3),
    GateKind.U3: (1, 3, (_TWO,) * 3),
    GateKind.CRX: (2, 1, (_FOUR,)),
    GateKind.CRY: (2, 1, (_FOUR,)),
    GateKind.CRZ: (2, 1, (_FOUR,)),
    # theta sits inside a controlled RY; phi and lambda are controlled phases
    GateKind.CU3: (2, 3, (_FOUR, _TWO, _TWO)),
    GateKind.CNOT: (2, 0, ()),
    GateKind.X: (1, 0, ()),
    GateKind.H: (1, 0, ()),
}


@dataclass(frozen=True)
class Param:
    """Trainable slot: the angle is read from ``params[index]`` at run time."""

    index: int


Angle = Union[float, Param]


@dataclass(frozen=True)
class Gate:
    """A gate placement. For controlled kinds ``qubits`` is ``(control, target)``.

    ``params`` holds floats for a concrete gate, or :class:`Param` markers when
    the gate sits in a :class:`CircuitTemplate`.
    """

    kind: GateKind
    qubits: tuple
    params: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "params", tuple(self.params))
        if len(self.qubits) != self.kind.arity:
            raise ConfigurationError(
                f"{self.kind.name} acts on {self.kind.arity} qubit(s), got {self.qubits}"
            )
        if len(set(self.qubits)) != len(self.qubits):
            raise ConfigurationError(f"control and target must differ: {self.qubits}")
        if any(q < 0 for q in self.qubits):
            raise ConfigurationError(f"negative qubit index in {self.qubits}")
        if len(self.params) != self.kind.num_params:
            raise ConfigurationError(
                f"{self.kind.name} takes {self.kind.num_params} angle(s), got {len(self.params)}"
            )

    @property
    def is_bound(self) -> bool:
        return not any(isinstance(p, Param) for p in self.params)


# --- gate matrices -----------------------------------------------------------


def _empty(shape):
    return np.empty(tuple(shape) + (2, 2), dtype=DTYPE)


def rotation_matrix(kind: GateKind, angles: Sequence) -> np.ndarray:
    """Single-qubit unitary of ``kind`` (the target block for controlled kinds).

    ``angles`` entries may be scalars or equal-shape arrays; the result has
    shape ``angles_shape + (2, 2)``.
    """
    if kind in (GateKind.X, GateKind.CNOT):
        return np.array([[0, 1], [1, 0]], dtype=DTYPE)
    if kind is GateKind.H:
        return np.array([[1, 1], [1, -1]], dtype=DTYPE) / np.sqrt(2.0)

    angles = [np.asarray(a, dtype=np.float64) for a in angles]
    shape = np.broadcast_shapes(*(a.shape for a in angles))
    m = _empty(shape)
    if kind in (GateKind.RX, GateKind.CRX):
        c, s = np.cos(angles[0] / 2), np.sin(angles[0] / 2)
        m[..., 0, 0] = c
        m[..., 0, 1] = -1j * s
        m[..., 1, 0] = -1j * s
        m[..., 1, 1] = c
    elif kind in (GateKind.RY, GateKind.CRY):
        c, s = np.cos(angles[0] / 2), np.sin(angles[0] / 2)
        m[..., 0, 0] = c
        m[..., 0, 1] = -s
        m[..., 1, 0] = s
        m[..., 1, 1] = c
    elif kind in (GateKind.RZ, GateKind.CRZ):
        half = angles[0] / 2
        m[..., 0, 0] = np.exp(-1j * half)
        m[..., 0, 1] = 0
        m[..., 1, 0] = 0
        m[..., 1, 1] = np.exp(1j * half)
    elif kind is GateKind.ROT:
        # RZ(omega) RY(theta) RZ(phi)
        phi, theta, omega = angles
        c, s = np.cos(theta / 2), np.sin(theta / 2)
        m[..., 0, 0] = np.exp(-0.5j * (phi + omega)) * c
        m[..., 0, 1] = -np.exp(0.5j * (phi - omega)) * s
        m[..., 1, 0] = np.exp(-0.5j * (phi - omega)) * s
        m[..., 1, 1] = np.exp(0.5j * (phi + omega)) * c
    elif kind in (GateKind.U3, GateKind.CU3):
        theta, phi, lam = angles
        c, s = np.cos(theta / 2), np.sin(theta / 2)
        m[..., 0, 0] = c
        m[..., 0, 1] = -np.exp(1j * lam) * s
        m[..., 1, 0] = np.exp(1j * phi) * s
        m[..., 1, 1] = np.exp(1j * (phi + lam)) * c
    else:  # pragma: no cover - enum is closed
        raise ConfigurationError(f"no matrix for {kind}")
    return m


def gate_matrix(gate: Gate) -> np.ndarray:
    """Full unitary of a bound gate on its own qubits, in ``gate.qubits`` order."""
    if not gate.is_bound:
        raise ConfigurationError("cannot build the matrix of an unbound gate")
    u = rotation_matrix(gate.kind, gate.params)
    if not gate.kind.controlled:
        return u
    full = np.eye(4, dtype=DTYPE)
    full[2:, 2:] = u
    return full


def inverse(gate: Gate) -> Gate:
    """The bound gate undoing ``gate``."""
    k, p = gate.kind, gate.params
    if k in (GateKind.CNOT, GateKind.X, GateKind.H):
        return gate
    if k is GateKind.ROT:
        return Gate(k, gate.qubits, (-p[2], -p[1], -p[0]))
    if k in (GateKind.U3, GateKind.CU3):
        return Gate(k, gate.qubits, (-p[0], -p[2], -p[1]))
    return Gate(k, gate.qubits, (-p[0],))


# --- kernels -----------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _mix_kernel(arr, mats, target_bit, control_bit):
    """In place: 2x2 ``mats[b]`` (or ``mats[0]`` for all rows) on one qubit.

    Pairs ``(i, i | target_bit)`` are mixed only where ``i & control_bit``
    equals ``control_bit`` (``control_bit == 0`` means uncontrolled).
    """
    rows, dim = arr.shape
    per_row = mats.shape[0] > 1
    for b in range(rows):
        k = b if per_row else 0
        m00 = mats[k, 0, 0]
        m01 = mats[k, 0, 1]
        m10 = mats[k, 1, 0]
        m11 = mats[k, 1, 1]
        for i in range(dim):
            if i & target_bit or (i & control_bit) != control_bit:
                continue
            j = i | target_bit
            a0 = arr[b, i]
            a1 = arr[b, j]
            arr[b, i] = m00 * a0 + m01 * a1
            arr[b, j] = m10 * a0 + m11 * a1


@numba.njit(cache=True, nogil=True)
def _swap_kernel(arr, target_bit, control_bit):
    rows, dim = arr.shape
    for b in range(rows):
        for i in range(dim):
            if i & target_bit or (i & control_bit) != control_bit:
                continue
            j = i | target_bit
            tmp = arr[b, i]
            arr[b, i] = arr[b, j]
            arr[b, j] = tmp


def _bit(num_qubits, qubit):
    # qubit 0 is the most significant bit
    return 1 << (num_qubits - 1 - qubit)


def apply_to_batch(arr: np.ndarray, num_qubits: int, kind: GateKind, qubits, angles=()):
    """In-place kernel on a C-contiguous ``(batch, 2**q)`` array.

    ``angles`` entries are scalars or ``(batch,)`` arrays.
    """
    if kind.controlled:
        control_bit, target_bit = _bit(num_qubits, qubits[0]), _bit(num_qubits, qubits[1])
    else:
        control_bit, target_bit = 0, _bit(num_qubits, qubits[0])
    if kind in (GateKind.X, GateKind.CNOT):
        _swap_kernel(arr, target_bit, control_bit)
        return arr
    m = rotation_matrix(kind, angles)
    if m.ndim == 2:
        m = m[None]
    _mix_kernel(arr, np.ascontiguousarray(m), target_bit, control_bit)
    return arr


# --- public state API --------------------------------------------------------


class Statevector:
    """Mutable pure state over ``num_qubits`` qubits."""

    __slots__ = ("num_qubits", "amplitudes")

    def __init__(self, amplitudes, num_qubits: int | None = None):
        amps = np.array(amplitudes, dtype=DTYPE).reshape(-1)
        dim = amps.shape[0]
        q = int(dim).bit_length() - 1
        if dim < 1 or (1 << q) != dim:
            raise InvalidInputError(f"amplitude count {dim} is not a power of two")
        if num_qubits is not None and num_qubits != q:
            raise InvalidInputError(f"{dim} amplitudes do not describe {num_qubits} qubits")
        if q > MAX_QUBITS:
            raise ConfigurationError(f"{q} qubits exceeds the supported maximum of {MAX_QUBITS}")
        self.num_qubits = q
        self.amplitudes = amps

    @classmethod
    def zero(cls, num_qubits: int) -> "Statevector":
        return cls.basis(num_qubits, 0)

    @classmethod
    def basis(cls, num_qubits: int, index: int) -> "Statevector":
        amps = np.zeros(1 << num_qubits, dtype=DTYPE)
        amps[index] = 1.0
        return cls(amps)

    def copy(self) -> "Statevector":
        return Statevector(self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def __len__(self):
        return self.amplitudes.shape[0]

    def __repr__(self):
        return f"Statevector(num_qubits={self.num_qubits})"


def _check_qubits(qubits, num_qubits):
    for q in qubits:
        if not 0 <= q < num_qubits:
            raise ConfigurationError(f"qubit index {q} out of range for {num_qubits} qubits")


def _check_angles(angles):
    if not np.all(np.isfinite(np.asarray(angles, dtype=np.float64))):
        raise InvalidInputError(f"non-finite gate angle in {angles}")


def apply_gate(state: Statevector, gate: Gate) -> Statevector:
    """Apply a bound gate to ``state`` in place and return the same object."""
    if not gate.is_bound:
        raise ConfigurationError("gate has unbound trainable slots; use run_circuit")
    _check_qubits(gate.qubits, state.num_qubits)
    _check_angles(gate.params)
    apply_to_batch(state.amplitudes[None, :], state.num_qubits, gate.kind, gate.qubits, gate.params)
    return state


@dataclass(frozen=True)
class CircuitTemplate:
    """Ordered gate list whose angle slots are constants or :class:`Param` markers."""

    num_qubits: int
    gates: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if not 1 <= self.num_qubits <= MAX_QUBITS:
            raise ConfigurationError(f"unsupported qubit count {self.num_qubits}")
        seen = []
        for g in self.gates:
            _check_qubits(g.qubits, self.num_qubits)
            seen.extend(p.index for p in g.params if isinstance(p, Param))
        if sorted(seen) != list(range(len(seen))):
            raise ConfigurationError("trainable indices must cover 0..P-1 exactly once each")
        object.__setattr__(self, "_num_params", len(seen))

    @property
    def num_params(self) -> int:
        return self._num_params

    def bind(self, params) -> list:
        params = _as_param_vector(params, self.num_params)
        return [
            Gate(g.kind, g.qubits, tuple(params[p.index] if isinstance(p, Param) else p for p in g.params))
            for g in self.gates
        ]

    def trainable_slots(self):
        """Yield ``(param_index, gate, slot_position)`` for each trainable slot."""
        for g in self.gates:
            for pos, p in enumerate(g.params):
                if isinstance(p, Param):
                    yield p.index, g, pos


def _as_param_vector(params, expected):
    params = np.asarray(params, dtype=np.float64).reshape(-1)
    if params.shape[0] != expected:
        raise InvalidInputError(f"expected {expected} parameters, got {params.shape[0]}")
    return params


def run_batch(template: CircuitTemplate, param_matrix, inputs) -> np.ndarray:
    """Run ``template`` once per row of ``param_matrix``.

    ``inputs`` is one amplitude vector shared by all rows, or a ``(batch, 2**q)``
    array. Returns a fresh ``(batch, 2**q)`` array; inputs are not modified.
    """
    pm = np.asarray(param_matrix, dtype=np.float64)
    if pm.ndim == 1:
        pm = pm[None, :]
    if pm.shape[1] != template.num_params:
        raise InvalidInputError(f"expected {template.num_params} parameters, got {pm.shape[1]}")
    if not np.all(np.isfinite(pm)):
        raise InvalidInputError("non-finite circuit parameters")
    dim = 1 << template.num_qubits
    inputs = np.asarray(inputs, dtype=DTYPE)
    if inputs.shape[-1] != dim:
        raise InvalidInputError(f"input has {inputs.shape[-1]} amplitudes, circuit needs {dim}")
    batch = pm.shape[0] if inputs.ndim == 1 else max(pm.shape[0], inputs.shape[0])
    arr = np.ascontiguousarray(np.broadcast_to(inputs, (batch, dim))).copy()
    shared = pm.shape[0] == 1
    q = template.num_qubits
    for g in template.gates:
        angles = []
        for p in g.params:
            if isinstance(p, Param):
                col = pm[:, p.index]
                angles.append(col[0] if shared else col)
            else:
                angles.append(p)
        apply_to_batch(arr, q, g.kind, g.qubits, angles)
    return arr


def run_circuit(template: CircuitTemplate, params, input: Statevector) -> Statevector:
    """Return ``template(params)|input>`` as a new state; ``input`` is left untouched."""
    params = _as_param_vector(params, template.num_params)
    if input.num_qubits != template.num_qubits:
        raise InvalidInputError(
            f"state has {input.num_qubits} qubits, template has {template.num_qubits}"
        )
    out = run_batch(template, params, input.amplitudes)
    return Statevector(out[0])


# --- readouts ----------------------------------------------------------------


def marginal_probabilities(amps: np.ndarray, num_qubits: int, keep) -> np.ndarray:
    """Marginal outcome probabilities of the ``keep`` qubits for ``(..., 2**q)`` amplitudes.

    Outcomes are indexed with ``keep[0]`` as the most significant bit.
    """
    keep = tuple(int(k) for k in keep)
    if not keep:
        raise InvalidInputError("keep_qubits must be non-empty")
    if len(set(keep)) != len(keep):
        raise InvalidInputError(f"keep_qubits has duplicates: {keep}")
    _check_qubits(keep, num_qubits)
    amps = np.asarray(amps)
    lead = amps.shape[:-1]
    probs = (amps.real**2 + amps.imag**2).reshape(lead + (2,) * num_qubits)
    off = len(lead)
    traced = tuple(off + q for q in range(num_qubits) if q not in keep)
    if traced:
        probs = probs.sum(axis=traced)
    # remaining axes are in ascending qubit order; reorder to follow ``keep``
    order = sorted(keep)
    perm = tuple(range(off)) + tuple(off + order.index(k) for k in keep)
    probs = np.transpose(probs, perm)
    return probs.reshape(lead + (1 << len(keep),))


def basis_probabilities(state: Statevector, keep_qubits) -> np.ndarray:
    return marginal_probabilities(state.amplitudes, state.num_qubits, keep_qubits)


def z_expectations(amps: np.ndarray, num_qubits: int, qubits) -> np.ndarray:
    """<Z> for each of ``qubits``; result shape ``amps.shape[:-1] + (len(qubits),)``."""
    _check_qubits(qubits, num_qubits)
    amps = np.asarray(amps)
    lead = amps.shape[:-1]
    probs = (amps.real**2 + amps.imag**2).reshape(lead + (2,) * num_qubits)
    off = len(lead)
    out = []
    for q in qubits:
        other = tuple(off + k for k in range(num_qubits) if k != q)
        pq = probs.sum(axis=other) if other else probs
        out.append(pq[..., 0] - pq[..., 1])
    return np.stack(out, axis=-1)


def pauli_z_expectation(state: Statevector, qubit: int) -> float:
    value = z_expectations(state.amplitudes, state.num_qubits, (qubit,))[0]
    return float(np.clip(value, -1.0, 1.0))
