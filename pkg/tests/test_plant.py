import numpy as np
import pytest

from nnobserver import nn, plant
from nnobserver.nn import NeuralNetwork
from nnobserver.plant import BoundingDecomposition, InputMode, LipschitzSystem, Scenario

from conftest import reference_forward


def zero_net(n_in, n_out):
    return NeuralNetwork.from_arrays([np.zeros((n_out, n_in))], [np.zeros(n_out)], ["purelin"])


def test_linear_part_only():
    system = LipschitzSystem([[-2, 1], [3, -5]], [[0, 1]], ("0", "0"), 0.0, zero_net(3, 2))
    np.testing.assert_array_equal(plant.eval_dynamics(system, [1, 0], [0.0]), [-2, 3])


def test_superposition_when_f_and_nn_vanish():
    system = LipschitzSystem([[-2, 1], [3, -5]], [[0, 1]], ("0", "0"), 0.0, zero_net(3, 2))
    rng = np.random.default_rng(0)
    x1, x2 = rng.normal(size=2), rng.normal(size=2)
    lhs = plant.eval_dynamics(system, 2 * x1 - 3 * x2, [0.0])
    rhs = 2 * plant.eval_dynamics(system, x1, [0.0]) - 3 * plant.eval_dynamics(system, x2, [0.0])
    np.testing.assert_allclose(lhs, rhs, atol=1e-14)


def test_example1_fixture(example1):
    system, decomp, scenario = example1
    np.testing.assert_array_equal(system.a_matrix, [[-2, 1], [3, -5]])
    np.testing.assert_array_equal(system.c_matrix, [[0, 1]])
    assert system.f_is_zero and decomp.is_zero
    assert system.state_driven and system.n_u == 1
    args = ([plant.EXAMPLE1_W1, plant.EXAMPLE1_W2], [plant.EXAMPLE1_B1, plant.EXAMPLE1_B2], ["tanh", "purelin"])
    expect = np.array([[-2, 1], [3, -5]]) @ np.zeros(2) + reference_forward(*args, [0, 0, 0])
    np.testing.assert_allclose(plant.eval_dynamics(system, [0, 0], [0.0]), expect, atol=1e-14)
    for x in np.random.default_rng(1).normal(size=(5, 3)):
        np.testing.assert_allclose(system.nn(x), reference_forward(*args, x), atol=1e-14)
    assert scenario.t_end == 10 and scenario.dt == 1e-3
    np.testing.assert_array_equal(scenario.u_lower, [-10])
    np.testing.assert_array_equal(scenario.u_upper, [10])
    np.testing.assert_array_equal(scenario.x0_lower, [-1, -1])
    np.testing.assert_array_equal(scenario.x0_upper, [1, 1])
    assert scenario.u_at(0.1)[0] == pytest.approx(10 * np.sin(0.5))
    np.testing.assert_array_equal(system.f_value(np.array([3.0, -4.0])), [0, 0])


def test_acc_fixture(acc):
    system, decomp, scenario = acc
    np.testing.assert_array_equal(system.a_matrix, plant.ACC_A)
    np.testing.assert_array_equal(system.c_matrix, plant.ACC_C)
    assert not system.state_driven and system.n_u == 3
    # f(y) with y = (v_e, d_rel, v_rel) = (10, 50, 2): lead-car drag uses v_l = y1 + y3
    x = np.array([60.0, 12.0, 0.0, 10.0, 10.0, 0.0])
    y = system.output(x)
    np.testing.assert_array_equal(y, [10, 50, 2])
    f = system.f_value(x, y)
    np.testing.assert_allclose(f, [0, 0, -0.0144, 0, 0, -0.01], atol=1e-15)
    assert scenario.u_lower[0] == -3 and scenario.u_upper[0] == 2
    assert scenario.t_end == 100 and scenario.dt == 1e-2


def test_acc_equilibrium():
    system, _, _ = plant.fixture_acc()
    # zero state, zero lead acceleration and zero set speed give a zero control
    np.testing.assert_allclose(plant.eval_dynamics(system, np.zeros(6), [0.0, 0.0, 1.4]), np.zeros(6), atol=1e-15)


def test_acc_controller_law():
    net = plant.acc_controller()
    v_e, d_rel, v_rel, v_set, t_gap = 20.0, 35.0, -1.0, 30.0, 1.4
    expect = 2 * np.tanh(0.05 * (d_rel - t_gap * v_e) + 0.3 * v_rel + 0.2 * (v_set - v_e))
    assert net([v_e, d_rel, v_rel, 0.7, v_set, t_gap])[0] == pytest.approx(expect, abs=1e-14)


def test_eval_bounds():
    system, decomp, _ = plant.fixture_acc()
    y = np.array([10.0, 50.0, 2.0])
    lo, hi = plant.eval_bounds(decomp, np.zeros(6), np.ones(6), y)
    np.testing.assert_array_equal(lo, hi)
    np.testing.assert_allclose(lo, system.f_value(np.zeros(6), y))
    zero = BoundingDecomposition.zero(2).bind(plant.fixture_example1()[0])
    lo, hi = plant.eval_bounds(zero, [0, 0], [1, 1])
    np.testing.assert_array_equal(lo, 0)
    np.testing.assert_array_equal(hi, 0)
    with pytest.raises(ValueError):
        plant.eval_bounds(zero, [1, 0], [0, 1])


def test_degenerate_box_bounds_valid():
    sq = LipschitzSystem([[0.0]], [[1.0]], ("-x1^2",), 1.0, zero_net(1, 1))
    decomp = BoundingDecomposition(("-(xu1^2)",), ("0",), 1.0, 1.0, 1.0, 1.0).bind(sq)
    for x in (0.0, 0.5, 0.9):
        lo, hi = plant.eval_bounds(decomp, [x], [x])
        f = sq.f_value(np.array([x]))
        assert lo[0] <= f[0] <= hi[0]


def test_validate_decomposition_cases():
    system, decomp, _ = plant.fixture_example1()
    rep = plant.validate_decomposition(system, decomp, 10_000)
    assert rep.passed and rep.worst_margin == 0.0
    wrong = BoundingDecomposition(("1", "0"), ("0", "0")).bind(system)
    rep = plant.validate_decomposition(system, wrong, 1000)
    assert not rep.passed and rep.counterexample is not None
    assert rep.counterexample["f_lower"][0] == 1.0
    acc_sys, acc_dec, _ = plant.fixture_acc()
    assert plant.validate_decomposition(acc_sys, acc_dec, 10_000).passed
    with pytest.raises(ValueError):
        plant.validate_decomposition(system, decomp, 0)


def test_validate_catches_missing_growth_bound():
    # -x^2 is bracketed below by -max(xl^2, xu^2) but the gap grows with the box
    sq = LipschitzSystem([[0.0]], [[1.0]], ("-x1^2",), 1.0, zero_net(1, 1))
    lower = "-(xl1^2+xu1^2)"
    ok = BoundingDecomposition((lower,), ("0",)).bind(sq)
    rep = plant.validate_decomposition(sq, ok, 2000, scale=1.0)
    assert rep.assumption2_margin >= 0
    assert not rep.passed and rep.assumption3_margin < 0


def test_system_validation():
    with pytest.raises(ValueError, match="square"):
        LipschitzSystem([[1, 2]], [[1, 0]], ("0",), 0.0, zero_net(2, 1))
    with pytest.raises(ValueError, match="columns"):
        LipschitzSystem([[1, 0], [0, 1]], [[1]], ("0", "0"), 0.0, zero_net(3, 2))
    with pytest.raises(ValueError, match="smaller"):
        LipschitzSystem([[1, 0], [0, 1]], [[1, 0]], ("0", "0"), 0.0, zero_net(1, 2))
    with pytest.raises(ValueError, match="embedding"):
        LipschitzSystem([[1, 0], [0, 1]], [[1, 0]], ("0", "0"), 0.0, zero_net(3, 1))
    with pytest.raises(ValueError, match="unknown symbols|unknown symbol"):
        LipschitzSystem([[1, 0], [0, 1]], [[1, 0]], ("xl1", "0"), 0.0, zero_net(3, 2))
    with pytest.raises(ValueError, match="beta"):
        LipschitzSystem([[1, 0], [0, 1]], [[1, 0]], ("0", "0"), -1.0, zero_net(3, 2))


def test_output_driven_embedding():
    system, _, _ = plant.fixture_acc()
    eff = system.effective_network
    assert eff.output_dim == 6 and eff.depth == system.nn.depth + 1
    x = np.array([60.0, 25.0, 0.0, 10.0, 22.0, 0.0])
    u = np.array([0.5, 30.0, 1.4])
    phi = system.nn(system.nn_input(x, u))
    out = plant.eval_dynamics(system, x, u)
    expect = np.array(plant.ACC_A) @ x + system.f_value(x) + np.array([0, 0, 2 * u[0], 0, 0, 0])
    expect[5] += phi[0]
    np.testing.assert_allclose(out, expect, atol=1e-14)


def test_scenario_invariants():
    kw = dict(x0=[0.0], x0_lower=[-1.0], x0_upper=[1.0], t_end=1.0, dt=0.1)
    sc = Scenario(("sin(t)",), [-1.0], [1.0], **kw)
    assert sc.n_steps == 10 and len(sc.times) == 11
    with pytest.raises(ValueError, match="leaves its envelope"):
        Scenario(("2*sin(t+1)",), [-1.0], [1.0], **kw)
    with pytest.raises(ValueError, match="inside"):
        Scenario(("0",), [0.0], [0.0], x0=[2.0], x0_lower=[-1.0], x0_upper=[1.0], t_end=1.0, dt=0.1)
    with pytest.raises(ValueError, match="dt"):
        Scenario(("0",), [0.0], [0.0], **{**kw, "dt": 0.0})
    with pytest.raises(ValueError, match="t_end"):
        Scenario(("0",), [0.0], [0.0], **{**kw, "t_end": 0.01})
    with pytest.raises(ValueError):
        Scenario(("0",), [1.0], [0.0], **kw)
    assert sc.with_dt(0.05).n_steps == 20


def test_every_fixture_validates():
    for fixture in (plant.fixture_example1, plant.fixture_acc):
        system, decomp, _ = fixture()
        assert plant.validate_decomposition(system, decomp, 10_000).passed
