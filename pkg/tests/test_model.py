import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viralcomp.errors import ValidationError
from viralcomp.model import (
    CostWeights,
    Dynamics,
    Efficacy,
    Phenotype,
    ScalarField,
    control_derivative,
    cost_integrand,
    jacobian,
    rhs_controlled,
    rhs_free,
    state_cost_gradient,
)

P = Phenotype(3.0, 1.0, 10.0, 12.0)
E = Efficacy(0.9, 0.5)

pos = st.floats(0.1, 10.0)
density = st.floats(0.0, 20.0)
dose = st.floats(0.0, 1.0)


@st.composite
def phenotypes(draw):
    k_a = draw(st.floats(1.0, 20.0))
    return Phenotype(draw(pos), draw(pos), k_a, k_a * draw(st.floats(1.01, 3.0)))


@st.composite
def efficacies(draw):
    c_a = draw(st.floats(0.01, 1.0))
    return Efficacy(c_a, c_a * draw(st.floats(0.0, 0.99)))


def test_rhs_free_examples():
    np.testing.assert_array_equal(rhs_free(P, (0.0, 0.0)), [0.0, 0.0])
    np.testing.assert_array_equal(rhs_free(P, (10.0, 0.0)), [0.0, 0.0])
    np.testing.assert_allclose(rhs_free(P, (1.0, 1.0)), [2.4, 0.8333333], atol=1e-7)


def test_rhs_controlled_examples():
    np.testing.assert_allclose(rhs_controlled(P, E, (1.0, 1.0), 0.0), [2.4, 0.8333333], atol=1e-7)
    np.testing.assert_allclose(rhs_controlled(P, E, (1.0, 1.0), 1.0), [1.5, 0.3333333], atol=1e-7)
    np.testing.assert_array_equal(rhs_controlled(P, E, (0.0, 0.0), 0.5), [0.0, 0.0])


@pytest.mark.parametrize("u", [-0.1, 1.5, math.nan])
def test_rhs_controlled_rejects_bad_control(u):
    with pytest.raises(ValidationError):
        rhs_controlled(P, E, (1.0, 1.0), u)


def test_jacobian_examples():
    np.testing.assert_array_equal(jacobian(P, None, (0.0, 0.0), 0.0), [[3.0, 0.0], [0.0, 1.0]])
    eig = np.sort(np.linalg.eigvals(jacobian(P, None, (0.0, 12.0), 0.0)).real)
    np.testing.assert_allclose(eig, [-1.0, -0.6], atol=1e-12)


def test_jacobian_matches_central_difference_at_example_point():
    s, u, h = np.array([2.0, 3.0]), 0.4, 1e-6
    J = jacobian(P, E, s, u)
    for j in range(2):
        d = np.zeros(2)
        d[j] = h
        col = (rhs_controlled(P, E, s + d, u) - rhs_controlled(P, E, s - d, u)) / (2 * h)
        np.testing.assert_allclose(J[:, j], col, rtol=1e-6)


@settings(max_examples=100, deadline=None)
@given(p=phenotypes(), e=efficacies(), a=st.floats(0.1, 20.0), b=st.floats(0.1, 20.0), u=dose)
def test_jacobian_matches_finite_differences(p, e, a, b, u):
    s = np.array([a, b])
    J = jacobian(p, e, s, u)
    scale = max(1.0, float(np.max(np.abs(J))))
    for j in range(2):
        d = np.zeros(2)
        d[j] = 1e-6 * max(1.0, s[j])
        col = (rhs_controlled(p, e, s + d, u) - rhs_controlled(p, e, s - d, u)) / (2 * d[j])
        np.testing.assert_allclose(J[:, j], col, rtol=1e-5, atol=1e-5 * scale)


@given(p=phenotypes(), e=efficacies(), a=density, b=density)
def test_zero_control_is_bit_exact_free_system(p, e, a, b):
    np.testing.assert_array_equal(rhs_controlled(p, e, (a, b), 0.0), rhs_free(p, (a, b)))


@given(p=phenotypes())
def test_free_fixed_points_have_zero_residual(p):
    for s in [(0.0, 0.0), (p.k_a, 0.0), (0.0, p.k_b)]:
        assert np.max(np.abs(rhs_free(p, s))) == 0.0


@given(p=phenotypes(), e=efficacies(), v=density, u=dose)
def test_axes_are_invariant(p, e, v, u):
    assert rhs_controlled(p, e, (0.0, v), u)[0] == 0.0
    assert rhs_controlled(p, e, (v, 0.0), u)[1] == 0.0


@given(p=phenotypes(), a=st.floats(0.01, 30.0), b=st.floats(0.01, 30.0))
def test_crowded_populations_both_decline(p, a, b):
    if a + b <= p.k_b * (1 + 1e-9):
        return
    assert np.all(rhs_free(p, (a, b)) < 0.0)


def test_cost_integrand_examples():
    w = CostWeights(10.0)
    assert cost_integrand((10.0, 0.0), 0.0, w) == 0.0
    assert cost_integrand((0.0, 0.0), 1.0, w) == 101.0
    wp = CostWeights(10.0, penalty_xi=0.1, penalty_mu=100.0)
    assert cost_integrand((10.0, 0.2), 0.0, wp) == pytest.approx(1.04, rel=1e-12)


@given(a=density, b=density, u=dose, xi=st.floats(0.01, 5.0), mu=st.floats(0.0, 1e4))
def test_cost_integrand_nonnegative_and_zero_only_at_target(a, b, u, xi, mu):
    w = CostWeights(10.0, xi, mu)
    c = cost_integrand((a, b), u, w)
    assert c >= 0.0
    if c == 0.0:
        assert (a, b, u) == (10.0, 0.0, 0.0)


def test_penalty_gradient_matches_difference():
    w = CostWeights(10.0, 0.5, 1e3)
    s, h = np.array([3.0, 0.7]), 1e-6
    g = state_cost_gradient(s, w)
    from viralcomp.model import state_cost

    for j in range(2):
        d = np.zeros(2)
        d[j] = h
        fd = (state_cost(s + d, w) - state_cost(s - d, w)) / (2 * h)
        assert g[j] == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("args", [(0.0, 1.0, 10.0, 12.0), (3.0, -1.0, 10.0, 12.0),
                                  (3.0, 1.0, 12.0, 10.0), (3.0, 1.0, 10.0, 10.0),
                                  (3.0, 1.0, math.inf, 12.0)])
def test_phenotype_validation(args):
    with pytest.raises(ValidationError):
        Phenotype(*args)


def test_phenotype_ordering_message():
    with pytest.raises(ValidationError, match="k_a must be < k_b"):
        Phenotype(3.0, 1.0, 12.0, 10.0)


@pytest.mark.parametrize("args", [(0.5, 0.5), (0.5, 0.9), (1.2, 0.5), (0.9, -0.1)])
def test_efficacy_validation(args):
    with pytest.raises(ValidationError):
        Efficacy(*args)


def test_cost_weight_validation():
    with pytest.raises(ValidationError):
        CostWeights(10.0, penalty_xi=0.0)
    with pytest.raises(ValidationError):
        CostWeights(10.0, penalty_mu=-1.0)
    assert CostWeights.for_phenotype(P).target_a == P.k_a
    assert not CostWeights(10.0, penalty_mu=5.0).penalty_active
    assert CostWeights(10.0).with_penalty(0.5, 10.0).penalty_active


def test_dynamics_wrapper():
    dyn = Dynamics(P, E)
    s = np.array([2.0, 3.0])
    np.testing.assert_array_equal(dyn(s, 0.3), rhs_controlled(P, E, s, 0.3))
    np.testing.assert_array_equal(dyn.jac(s, 0.3), jacobian(P, E, s, 0.3))
    np.testing.assert_array_equal(dyn.du(s), control_derivative(E, s))


@given(p=phenotypes(), e=efficacies(), a=density, b=density, u=dose)
def test_scalar_field_agrees_with_array_functions(p, e, a, b, u):
    w = CostWeights(p.k_a, 0.5, 100.0)
    fld = ScalarField(p, e, w)
    np.testing.assert_allclose(fld.f(a, b, u), rhs_controlled(p, e, (a, b), u), rtol=1e-14, atol=1e-14)
    np.testing.assert_allclose(np.reshape(fld.jac(a, b, u), (2, 2)), jacobian(p, e, (a, b), u),
                               rtol=1e-14, atol=1e-13)
    np.testing.assert_allclose(fld.cost_grad(a, b), state_cost_gradient((a, b), w), rtol=1e-14)
