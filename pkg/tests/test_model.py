import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from switchocp.model import ModelError, ProblemSpec, Subsystem, SwitchedModel, check_derivatives, eval_hamiltonian
from switchocp.problems import example1, example1_model, example2, example2_model

finite = st.floats(-2.0, 2.0, allow_nan=False)


def test_hamiltonian_example1_stage_cost():
    # 0.5 * (3 - 2)^2 with zero input and zero costate
    assert eval_hamiltonian(example1_model(), 1, [2.0, 3.0], [0.0], [0.0, 0.0]) == pytest.approx(0.5)


def test_hamiltonian_zero_cost_zero_costate():
    zero = Subsystem(
        f=lambda x, u: x, f_x=lambda x, u: np.eye(1), f_u=lambda x, u: np.zeros((1, 1)),
        L=lambda x, u: 0.0, L_x=lambda x, u: np.zeros(1), L_u=lambda x, u: np.zeros(1),
        L_xx=lambda x, u: np.zeros((1, 1)), L_xu=lambda x, u: np.zeros((1, 1)),
        L_uu=lambda x, u: np.zeros((1, 1)), fxx_lam=lambda x, u, l: np.zeros((1, 1)),
        fxu_lam=lambda x, u, l: np.zeros((1, 1)), fuu_lam=lambda x, u, l: np.zeros((1, 1)),
        phi=lambda x: 0.0, phi_x=lambda x: np.zeros(1), phi_xx=lambda x: np.zeros((1, 1)))
    model = SwitchedModel(n_x=1, n_u=1, subsystems=(zero,))
    assert eval_hamiltonian(model, 1, [3.0], [1.0], [0.0]) == 0.0


def test_hamiltonian_example2_hand_value():
    # f1 = [2 + 0, -3 - 0], L = 0.5 * (1 + 16) = 8.5, lam . f = -1
    assert eval_hamiltonian(example2_model(), 1, [2.0, 3.0], [0.0], [1.0, 1.0]) == pytest.approx(7.5)


def test_hamiltonian_rejects_bad_shapes():
    with pytest.raises(ModelError):
        eval_hamiltonian(example1_model(), 1, [2.0, 3.0, 1.0], [0.0], [0.0, 0.0])
    with pytest.raises(ModelError):
        example1_model().subsystem(3)


def test_fd_linear_example_exact():
    rep = check_derivatives(example1(), [0.3, -0.7], [0.2], [0.4, -1.1])
    assert rep.max_error() <= 1e-9


@pytest.mark.parametrize("lam", [[0.0, 0.0], [1.0, -2.0]])
def test_fd_example2_all_blocks(lam):
    rep = check_derivatives(example2(), [0.3, -0.7], [0.2], lam, h=1e-5)
    assert rep.max_error() <= 1e-6, rep.worst()


def test_fd_detects_corrupted_input_jacobian():
    model = example2_model()
    s1 = model.subsystem(1)
    bad = dataclasses.replace(s1, f_u=lambda x, u: s1.f_u(x, u) + np.array([[0.1], [0.0]]))
    broken = SwitchedModel(n_x=2, n_u=1, subsystems=(bad,) + model.subsystems[1:], vectorized=True)
    rep = check_derivatives(broken, [0.3, -0.7], [0.2], [0.0, 0.0])
    assert rep.errors[1]["f_u"] == pytest.approx(0.1, abs=1e-8)
    assert rep.worst()[:2] == (1, "f_u")
    assert rep.errors[2]["f_u"] <= 1e-9


def test_fd_error_is_second_order_in_step():
    x, u, lam = [0.3, -0.7], [0.2], [1.0, -2.0]
    e1 = check_derivatives(example2(), x, u, lam, h=1e-2).errors[1]["f_x"]
    e2 = check_derivatives(example2(), x, u, lam, h=5e-3).errors[1]["f_x"]
    assert 3.0 < e1 / e2 < 5.0


@given(st.lists(finite, min_size=2, max_size=2), finite, st.lists(finite, min_size=2, max_size=2),
       st.integers(1, 3))
def test_example2_hessians_symmetric(x, u, lam, q):
    model = example2_model()
    ev = model.evaluate(q, np.array([x]), np.array([[u]]), np.array([lam]))
    np.testing.assert_allclose(ev.Hxx[0], ev.Hxx[0].T, atol=1e-14)
    model.validate(x, [u], lam)


def test_finite_difference_fallback_matches_analytic():
    s = example2_model().subsystem(2)
    fd = Subsystem.finite_difference(s.f, s.L, s.phi, step=1e-6)
    x, u, lam = np.array([0.3, -0.7]), np.array([0.2]), np.array([1.0, -2.0])
    np.testing.assert_allclose(fd.f_x(x, u), s.f_x(x, u), atol=1e-7)
    np.testing.assert_allclose(fd.fxx_lam(x, u, lam), s.fxx_lam(x, u, lam), atol=1e-4)
    # a pointwise model built from the fallback passes the validator too
    model = SwitchedModel(n_x=2, n_u=1, subsystems=(fd,))
    assert check_derivatives(model, x, u, lam, h=1e-4).max_error() < 1e-3


def test_problem_spec_invariants():
    m = example1_model()
    with pytest.raises(ValueError):
        ProblemSpec(model=m, t0=1.0, tf=1.0, N=10, sigma=(1, 2), x_init=np.zeros(2))
    with pytest.raises(ValueError):
        ProblemSpec(model=m, t0=0.0, tf=1.0, N=10, sigma=(1, 3), x_init=np.zeros(2))
    with pytest.raises(ValueError):
        ProblemSpec(model=m, t0=0.0, tf=1.0, N=1, sigma=(1, 2), x_init=np.zeros(2))
    spec = example1()
    assert spec.dtau == pytest.approx(2 / 175)
    (lo, hi), = spec.bounds()
    assert 0.0 < lo < 1e-4 and 2.0 - 1e-4 < hi < 2.0
