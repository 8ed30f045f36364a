import math

import numpy as np
import pytest

import oracles
from qdiff.ansatz import AnsatzSpec, Family, build
from qdiff.errors import ConfigurationError, InvalidInputError, TrainingDivergenceError
from qdiff.grad import ProbabilityReadout, ShiftPlan, ZReadout, finite_difference_gradient, parameter_shift_gradient
from qdiff.optim import (
    AdamState,
    adam_step,
    cross_entropy_grad,
    cross_entropy_loss,
    log_softmax,
    mse_loss,
    mse_loss_grad,
)
from qdiff.sim import CircuitTemplate, Gate, GateKind, Param, Statevector, run_batch

FAMILIES = {
    Family.STRONGLY_ENTANGLING: 3,
    Family.QMLP: 6,
    Family.C14: 6,
    Family.OPTIC: 6,
    Family.QUANTUMNAT: 6,
}


def rx_template():
    return CircuitTemplate(1, (Gate(GateKind.RX, (0,), (Param(0),)),))


def random_state(rng, q):
    v = rng.normal(size=2**q) + 1j * rng.normal(size=2**q)
    return v / np.linalg.norm(v)


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))


def test_cosine_gradient_examples():
    t, z = rx_template(), ZReadout(1, 0)
    psi = Statevector.zero(1)
    assert abs(parameter_shift_gradient(t, [0.0], psi, z)[0]) <= 1e-15
    assert abs(parameter_shift_gradient(t, [math.pi / 2], psi, z)[0] + 1) <= 1e-14


def test_finite_difference_cosine():
    g = finite_difference_gradient(rx_template(), [1.0], Statevector.zero(1), ZReadout(1, 0), h=1e-5)
    assert abs(g[0] + math.sin(1.0)) <= 1e-8


def test_finite_difference_constant_readout():
    # the RX acts on qubit 1; <Z> of qubit 0 cannot depend on it
    t = CircuitTemplate(2, (Gate(GateKind.RX, (1,), (Param(0),)),))
    g = finite_difference_gradient(t, [0.4], Statevector.zero(2), ZReadout(2, 0))
    np.testing.assert_array_equal(g, [0.0])


def test_finite_difference_step_range():
    with pytest.raises(InvalidInputError):
        finite_difference_gradient(rx_template(), [0.0], Statevector.zero(1), ZReadout(1, 0), h=1e-2)


@pytest.mark.parametrize("kind", [GateKind.CRX, GateKind.CRY, GateKind.CRZ, GateKind.CU3], ids=lambda k: k.value)
def test_controlled_rules_exact(kind):
    rng = np.random.default_rng(0)
    t = CircuitTemplate(
        2,
        (
            Gate(GateKind.H, (0,)),
            Gate(GateKind.RY, (1,), (0.3,)),
            Gate(kind, (0, 1), tuple(Param(i) for i in range(kind.num_params))),
            Gate(GateKind.H, (1,)),
        ),
    )
    for _ in range(10):
        p = rng.uniform(-math.pi, math.pi, kind.num_params)
        ps = parameter_shift_gradient(t, p, Statevector.zero(2), ZReadout(2, 1))
        fd = finite_difference_gradient(t, p, Statevector.zero(2), ZReadout(2, 1), h=1e-5)
        assert rel_err(ps, fd) <= 1e-8


def test_unsupported_trainable_gate():
    # a trainable slot on a gate with no shift rule cannot be differentiated
    t = CircuitTemplate(1, (Gate(GateKind.RX, (0,), (Param(0),)),))
    object.__setattr__(t.gates[0], "kind", GateKind.H)
    with pytest.raises(ConfigurationError):
        ShiftPlan(t)


@pytest.mark.parametrize("family", list(FAMILIES), ids=lambda f: f.value)
def test_shift_matches_finite_difference(family):
    q = FAMILIES[family]
    spec = AnsatzSpec(family, q, 1)
    t = build(spec)
    plan = ShiftPlan(t)
    rng = np.random.default_rng(list(FAMILIES).index(family))
    readout = ZReadout(q, tuple(range(min(q, 3))))
    for _ in range(50):
        p = rng.uniform(0, 2 * math.pi, spec.num_params)
        psi = random_state(rng, q)
        ps = parameter_shift_gradient(t, p, psi, readout, plan=plan)
        fd = finite_difference_gradient(t, p, psi, readout, h=1e-5)
        assert rel_err(ps, fd) <= 1e-4


def test_probability_readout_jacobian_and_value():
    spec = AnsatzSpec(Family.STRONGLY_ENTANGLING, 3, 2)
    t = build(spec)
    rng = np.random.default_rng(9)
    p = rng.uniform(0, 2 * math.pi, spec.num_params)
    psi = random_state(rng, 3)
    readout = ProbabilityReadout(3, (0, 1))
    jac, value = parameter_shift_gradient(t, p, psi, readout, return_value=True)
    assert jac.shape == (spec.num_params, 4)
    np.testing.assert_allclose(value, readout(run_batch(t, p, psi))[0], atol=1e-15)
    np.testing.assert_allclose(jac.sum(axis=1), 0.0, atol=1e-12)  # probabilities stay normalised
    assert rel_err(jac, finite_difference_gradient(t, p, psi, readout)) <= 1e-4


def test_shift_plan_rows_reuse_prefix():
    t = build(AnsatzSpec(Family.QMLP, 6, 1))
    plan = ShiftPlan(t)
    # 6 ROT x 3 slots x 2 terms + 6 CRX x 4 terms
    assert plan.num_rows == 36 + 24
    rng = np.random.default_rng(1)
    p = rng.uniform(0, 2 * math.pi, t.num_params)
    psi = random_state(rng, 6)
    rows = plan.evaluate(p, psi)
    pm = np.tile(p, (plan.num_rows, 1))
    pm[np.arange(plan.num_rows), plan.index] += plan.shift
    np.testing.assert_allclose(rows[1:], run_batch(t, pm, psi), atol=1e-13)
    np.testing.assert_allclose(rows[0], run_batch(t, p, psi)[0], atol=1e-13)


# --- losses ------------------------------------------------------------------


def test_mse_examples():
    assert mse_loss([1, 2], [1, 2]).value == 0.0
    assert mse_loss([1, 0], [0, 0]).value == 0.5
    a, b = np.random.default_rng(0).normal(size=(2, 64))
    assert abs(mse_loss(a, b).value - sum((x - y) ** 2 for x, y in zip(a, b)) / 64) <= 1e-12
    with pytest.raises(InvalidInputError):
        mse_loss([1, 2], [1])


def test_mse_gradient_matches_differences():
    a, b = np.random.default_rng(1).normal(size=(2, 8))
    g = mse_loss_grad(a, b)
    h = 1e-6
    for i in range(8):
        e = np.eye(8)[i] * h
        assert abs(g[i] - (mse_loss(a + e, b).value - mse_loss(a - e, b).value) / (2 * h)) <= 1e-8


def test_cross_entropy_examples():
    assert abs(cross_entropy_loss([0.3, 0.3], 0).value - math.log(2)) <= 1e-15
    assert cross_entropy_loss([10, -10], 0).value <= 1e-8
    z = np.random.default_rng(2).normal(size=5)
    ref = -z[3] + math.log(sum(math.exp(v) for v in z))
    assert abs(cross_entropy_loss(z, 3).value - ref) <= 1e-12
    with pytest.raises(InvalidInputError):
        cross_entropy_loss([0.0, 1.0], 2)
    with pytest.raises(InvalidInputError):
        cross_entropy_loss([0.0], 0)


def test_cross_entropy_stable_for_large_logits():
    rng = np.random.default_rng(3)
    for _ in range(100):
        z = rng.uniform(-500, 500, 4)
        v = cross_entropy_loss(z, int(rng.integers(4))).value
        assert math.isfinite(v) and v >= 0
        assert np.all(np.isfinite(log_softmax(z)))


def test_cross_entropy_gradient():
    z = np.array([0.2, -1.0, 0.7])
    g = cross_entropy_grad(z, 1)
    h = 1e-6
    for i in range(3):
        e = np.eye(3)[i] * h
        fd = (cross_entropy_loss(z + e, 1).value - cross_entropy_loss(z - e, 1).value) / (2 * h)
        assert abs(g[i] - fd) <= 1e-8


# --- Adam --------------------------------------------------------------------


def test_adam_zero_gradient_leaves_params():
    s = AdamState(3)
    p = np.array([1.0, -2.0, 0.5])
    np.testing.assert_array_equal(adam_step(s, p, np.zeros(3)), p)


def test_adam_first_step_is_learning_rate():
    s = AdamState(4, learning_rate=0.001)
    out = adam_step(s, np.zeros(4), np.ones(4))
    np.testing.assert_allclose(out, -0.001, atol=1e-6)
    assert s.step == 1


def test_adam_matches_reference_trajectory():
    grads = np.random.default_rng(4).normal(size=25)
    s = AdamState(1, learning_rate=0.01)
    x = np.zeros(1)
    got = []
    for g in grads:
        x = adam_step(s, x, np.array([g]))
        got.append(x[0])
    np.testing.assert_allclose(got, oracles.adam_reference(grads, lr=0.01), rtol=0, atol=1e-15)


def test_adam_deterministic():
    def run():
        s, x = AdamState(2), np.array([0.5, 0.5])
        for g in np.random.default_rng(5).normal(size=(10, 2)):
            x = adam_step(s, x, g)
        return x.tobytes()

    assert run() == run()


def test_adam_reduces_convex_quadratic():
    target = np.array([1.0, -2.0, 3.0])
    s, x = AdamState(3, learning_rate=0.1), np.zeros(3)
    start = np.sum((x - target) ** 2)
    for _ in range(100):
        x = adam_step(s, x, 2 * (x - target))
    assert np.sum((x - target) ** 2) <= 0.1 * start


def test_adam_rejects_non_finite_gradient():
    s = AdamState(2)
    with pytest.raises(TrainingDivergenceError) as err:
        adam_step(s, np.zeros(2), np.array([0.0, np.inf]))
    assert err.value.iteration == 1
    assert s.step == 0
    with pytest.raises(InvalidInputError):
        adam_step(s, np.zeros(2), np.zeros(3))
