"""Circuit gradients: exact parameter-shift rules and a central-difference oracle."""
from __future__ import annotations

import math

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .sim import (
    DTYPE,
    CircuitTemplate,
    Param,
    ShiftRule,
    Statevector,
    apply_to_batch,
    marginal_probabilities,
    run_batch,
    z_expectations,
)

HALF_PI = math.pi / 2

# Two-frequency rule for generators with eigenvalues {0, +-1/2}.
_C_NEAR = (math.sqrt(2) + 1) / (4 * math.sqrt(2))
_C_FAR = (math.sqrt(2) - 1) / (4 * math.sqrt(2))

_RULES = {
    ShiftRule.TWO_TERM: ((HALF_PI, 0.5), (-HALF_PI, -0.5)),
    ShiftRule.FOUR_TERM: (
        (HALF_PI, _C_NEAR),
        (-HALF_PI, -_C_NEAR),
        (3 * HALF_PI, -_C_FAR),
        (-3 * HALF_PI, _C_FAR),
    ),
}


class ZReadout:
    """<Z> on one qubit (scalar) or on a tuple of qubits (vector)."""

    def __init__(self, num_qubits, qubits):
        self.num_qubits = num_qubits
        self.scalar = isinstance(qubits, (int, np.integer))
        self.qubits = (int(qubits),) if self.scalar else tuple(qubits)

    def __call__(self, amps):
        out = z_expectations(amps, self.num_qubits, self.qubits)
        return out[..., 0] if self.scalar else out


class ProbabilityReadout:
    """Marginal basis-state probabilities of ``keep`` qubits."""

    def __init__(self, num_qubits, keep):
        self.num_qubits = num_qubits
        self.keep = tuple(keep)

    def __call__(self, amps):
        return marginal_probabilities(amps, self.num_qubits, self.keep)


def _input_amplitudes(input):
    return input.amplitudes if isinstance(input, Statevector) else np.asarray(input)


class ShiftPlan:
    """Shifted-circuit rows for a template, ordered by the gate each row perturbs.

    Row ``r`` evaluates the circuit with ``params[index[r]] += shift[r]``;
    the gradient is ``sum_r coeff[r] * f(row r)`` accumulated into ``index[r]``.
    ``gate_end[g]`` is one past the last row belonging to gates ``0..g``.
    """

    def __init__(self, template: CircuitTemplate):
        index, shift, coeff, gate_end = [], [], [], []
        for gate in template.gates:
            for pos, p in enumerate(gate.params):
                if not isinstance(p, Param):
                    continue
                rules = gate.kind.shift_rules
                if pos >= len(rules) or rules[pos] not in _RULES:
                    raise ConfigurationError(f"no shift rule for slot {pos} of {gate.kind.name}")
                for s, c in _RULES[rules[pos]]:
                    index.append(p.index)
                    shift.append(s)
                    coeff.append(c)
            gate_end.append(len(index))
        self.template = template
        self.index = np.array(index, dtype=np.int64)
        self.shift = np.array(shift, dtype=np.float64)
        self.coeff = np.array(coeff, dtype=np.float64)
        self.gate_end = gate_end

    @property
    def num_rows(self):
        return self.index.shape[0]

    def evaluate(self, params, input_amps):
        """Final states for every shifted row, plus the unshifted circuit as row 0.

        Rows start from the unshifted state just before their own gate, so the
        common prefix is simulated once.
        """
        t = self.template
        q = t.num_qubits
        rows = self.num_rows
        arr = np.empty((rows + 1, 1 << q), dtype=DTYPE)
        arr[0] = input_amps
        shifted = params[self.index] + self.shift
        active = 1
        for g, gate in enumerate(t.gates):
            end = self.gate_end[g] + 1
            if end > active:
                arr[active:end] = arr[0]
            view = arr[:end]
            angles = []
            for p in gate.params:
                if not isinstance(p, Param):
                    angles.append(p)
                    continue
                col = np.full(end, params[p.index])
                mine = np.flatnonzero(self.index[: end - 1] == p.index) + 1
                col[mine] = shifted[mine - 1]
                angles.append(col)
            apply_to_batch(view, q, gate.kind, gate.qubits, angles)
            active = end
        return arr


def parameter_shift_gradient(template: CircuitTemplate, params, input, readout, plan=None, return_value=False):
    """Exact gradient of ``readout(template(params)|input>)``.

    Scalar readouts give a length-P vector; vector readouts give the ``(P, K)``
    Jacobian. With ``return_value`` the unshifted readout is returned as well.
    """
    params = np.asarray(params, dtype=np.float64).reshape(-1)
    if params.shape[0] != template.num_params:
        raise InvalidInputError(f"expected {template.num_params} parameters, got {params.shape[0]}")
    if not np.all(np.isfinite(params)):
        raise InvalidInputError("non-finite circuit parameters")
    plan = plan if plan is not None else ShiftPlan(template)
    values = np.asarray(readout(plan.evaluate(params, _input_amplitudes(input))), dtype=np.float64)
    grad = np.zeros((template.num_params,) + values.shape[1:])
    weights = plan.coeff.reshape((-1,) + (1,) * (values.ndim - 1))
    np.add.at(grad, plan.index, weights * values[1:])
    return (grad, values[0]) if return_value else grad


def finite_difference_gradient(template: CircuitTemplate, params, input, readout, h=1e-5):
    """Central differences ``(f(theta + h) - f(theta - h)) / 2h`` per parameter."""
    if not 1e-7 <= h <= 1e-3:
        raise InvalidInputError(f"step h={h} outside [1e-7, 1e-3]")
    params = np.asarray(params, dtype=np.float64).reshape(-1)
    p = template.num_params
    if params.shape[0] != p:
        raise InvalidInputError(f"expected {p} parameters, got {params.shape[0]}")
    if p == 0:
        return np.zeros(0)
    pm = np.tile(params, (2 * p, 1))
    ar = np.arange(p)
    pm[ar, ar] += h
    pm[p + ar, ar] -= h
    values = np.asarray(readout(run_batch(template, pm, _input_amplitudes(input))), dtype=np.float64)
    return (values[:p] - values[p:]) / (2 * h)
