"""Constraint geometry, forces, and initial-state balancing."""
import numpy as np
import pytest

from balanced_da.models import (
    ConvergenceError,
    SingularConfigurationError,
    StateVector,
    StiffSystem,
    balance_initial_state,
    coupled_oscillator,
    double_pendulum,
    elliptic_pendulum,
    eval_constraint,
    eval_hessian_action,
    eval_jacobian,
    eval_stiff_force,
    harmonic_oscillator,
    lagrange_multiplier,
    soft_constraint_residual,
    tangential_projector,
)


def random_state(rng, system, spread=0.5):
    q = np.array([1.0, 0.2, 1.9, 0.1]) if system.n_dof == 4 else np.array([1.0, 0.1])[: system.n_dof]
    q = q + spread * rng.standard_normal(system.n_dof)
    p = rng.standard_normal(system.n_dof)
    return StateVector(q, p)


def fd_jacobian(system, q, delta=1e-7):
    G = np.empty((system.n_constraints, system.n_dof))
    for i in range(system.n_dof):
        shift = np.zeros(system.n_dof)
        shift[i] = delta
        G[:, i] = (eval_constraint(system, q + shift) - eval_constraint(system, q - shift)) / (
            2 * delta
        )
    return G


class TestStateVector:
    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            StateVector(np.zeros(3), np.zeros(2))

    def test_batched_shapes(self):
        z = StateVector(np.zeros((5, 3)), np.ones((5, 3)))
        assert z.n_dof == 3
        copy = z.copy()
        copy.q[0, 0] = 9.0
        assert z.q[0, 0] == 0.0


class TestStiffSystemValidation:
    def test_nonpositive_stiffness_rejected(self):
        with pytest.raises(ValueError):
            double_pendulum(1e-3, stiffness=(1.0, 0.0))

    def test_thermostat_parameters_paired(self):
        with pytest.raises(ValueError):
            elliptic_pendulum(1e-3, gamma=1.0)
        with pytest.raises(ValueError):
            elliptic_pendulum(1e-3, kbt=2.0)
        sys_ok = elliptic_pendulum(1e-3, gamma=1.0, kbt=2.0)
        assert sys_ok.has_thermostat

    def test_fast_frequency_scale(self):
        system = double_pendulum(1e-3, stiffness=(1.0, 0.04))
        assert system.fast_frequency_scale == pytest.approx(1000.0)


@pytest.mark.parametrize("factory", [lambda: double_pendulum(1e-3), lambda: elliptic_pendulum(1e-3)])
def test_jacobian_matches_finite_differences(factory):
    system = factory()
    rng = np.random.default_rng(11)
    for _ in range(20):
        z = random_state(rng, system, spread=0.3)
        G = eval_jacobian(system, z.q)
        np.testing.assert_allclose(G, fd_jacobian(system, z.q), rtol=1e-5, atol=1e-6)


@pytest.mark.parametrize("factory", [lambda: double_pendulum(1e-3), lambda: elliptic_pendulum(1e-3)])
def test_hessian_action_matches_fd_fallback(factory):
    system = factory()
    generic = StiffSystem(
        name=system.name,
        n_dof=system.n_dof,
        n_constraints=system.n_constraints,
        epsilon=system.epsilon,
        stiffness=system.stiffness,
        constraint=system.constraint,
        jacobian=system.jacobian,
        grad_potential=system.grad_potential,
        potential=system.potential,
    )
    rng = np.random.default_rng(12)
    for _ in range(20):
        z = random_state(rng, system, spread=0.3)
        analytic = eval_hessian_action(system, z.q, z.p)
        numeric = eval_hessian_action(generic, z.q, z.p)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-5)


def test_stiff_force_assembly():
    system = double_pendulum(1e-2)
    rng = np.random.default_rng(13)
    z = random_state(rng, system, spread=0.2)
    g = eval_constraint(system, z.q)
    G = eval_jacobian(system, z.q)
    expected = -G.T @ (system.stiffness * g) / system.epsilon**2 - system.grad_potential(z.q)
    np.testing.assert_allclose(eval_stiff_force(system, z.q), expected, rtol=1e-12)


def test_coupled_oscillator_force_is_hamiltonian_gradient():
    # H = (p1^2 + p2^2)/2 + k (q1 - q2)^2 / 2 + q2^2 / 2
    k = 3.0
    system = coupled_oscillator(k)
    rng = np.random.default_rng(14)
    for _ in range(10):
        q = rng.standard_normal(2)
        expected = np.array([-k * (q[0] - q[1]), k * (q[0] - q[1]) - q[1]])
        np.testing.assert_allclose(eval_stiff_force(system, q), expected, rtol=1e-12, atol=1e-12)


def test_harmonic_oscillator_force():
    system = harmonic_oscillator(2.5)
    q = np.array([1.2])
    np.testing.assert_allclose(eval_stiff_force(system, q), [-2.5 * 1.2], rtol=1e-14)


class TestLagrangeMultiplier:
    def test_solves_stated_linear_system(self):
        system = double_pendulum(1e-3)
        rng = np.random.default_rng(15)
        for _ in range(10):
            z = random_state(rng, system, spread=0.2)
            lam = lagrange_multiplier(system, z)
            G = eval_jacobian(system, z.q)
            rhs = eval_hessian_action(system, z.q, z.p) - G @ system.grad_potential(z.q)
            lhs = (G @ G.T) * system.stiffness @ lam
            np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-12)

    def test_batched_matches_loop(self):
        system = elliptic_pendulum(1e-3)
        rng = np.random.default_rng(16)
        q = np.array([1.0, 0.1]) + 0.2 * rng.standard_normal((7, 2))
        p = rng.standard_normal((7, 2))
        batched = lagrange_multiplier(system, StateVector(q, p))
        for i in range(7):
            single = lagrange_multiplier(system, StateVector(q[i], p[i]))
            np.testing.assert_allclose(batched[i], single, rtol=1e-13)

    def test_soft_constraint_is_g_minus_eps2_lambda(self):
        system = elliptic_pendulum(1e-2)
        rng = np.random.default_rng(17)
        z = random_state(rng, system, spread=0.2)
        expected = eval_constraint(system, z.q) - system.epsilon**2 * lagrange_multiplier(system, z)
        np.testing.assert_allclose(soft_constraint_residual(system, z), expected, rtol=1e-13)


class TestTangentialProjector:
    @pytest.mark.parametrize(
        "factory", [lambda: double_pendulum(1e-3), lambda: elliptic_pendulum(1e-3)]
    )
    def test_projector_properties(self, factory):
        system = factory()
        rng = np.random.default_rng(18)
        for _ in range(10):
            z = random_state(rng, system, spread=0.3)
            P = tangential_projector(system, z.q)
            G = eval_jacobian(system, z.q)
            np.testing.assert_allclose(P @ P, P, atol=1e-12)
            np.testing.assert_allclose(P, P.T, atol=1e-12)
            np.testing.assert_allclose(G @ P, np.zeros_like(G), atol=1e-12)


class TestBalanceInitialState:
    def test_lands_on_tangent_manifold(self):
        system = double_pendulum(1e-3)
        rng = np.random.default_rng(19)
        for _ in range(10):
            z = balance_initial_state(system, random_state(rng, system, spread=0.3))
            assert np.max(np.abs(eval_constraint(system, z.q))) <= 1e-12
            G = eval_jacobian(system, z.q)
            assert np.max(np.abs(G @ z.p)) <= 1e-12

    def test_canonical_state_already_balanced(self):
        system = double_pendulum(1e-3)
        z0 = StateVector(np.array([1.0, 0.0, 2.0, 0.0]), np.array([0.0, 1.0, 0.0, 2.0]))
        z = balance_initial_state(system, z0)
        np.testing.assert_allclose(z.q, z0.q, atol=1e-14)
        np.testing.assert_allclose(z.p, z0.p, atol=1e-14)

    def test_idempotent(self):
        system = elliptic_pendulum(1e-3)
        rng = np.random.default_rng(20)
        z1 = balance_initial_state(system, random_state(rng, system, spread=0.3))
        z2 = balance_initial_state(system, z1)
        np.testing.assert_allclose(z2.q, z1.q, atol=1e-13)
        np.testing.assert_allclose(z2.p, z1.p, atol=1e-13)

    def test_batched_matches_loop(self):
        system = double_pendulum(1e-3)
        rng = np.random.default_rng(21)
        q = np.array([1.0, 0.0, 2.0, 0.0]) + 0.2 * rng.standard_normal((6, 4))
        p = rng.standard_normal((6, 4))
        batched = balance_initial_state(system, StateVector(q, p))
        for i in range(6):
            single = balance_initial_state(system, StateVector(q[i], p[i]))
            np.testing.assert_allclose(batched.q[i], single.q, atol=1e-11)
            np.testing.assert_allclose(batched.p[i], single.p, atol=1e-11)

    def test_unreachable_tolerance_raises(self):
        system = double_pendulum(1e-3)
        z = StateVector(np.array([1.0, 0.3, 2.0, 0.4]), np.zeros(4))
        with pytest.raises(ConvergenceError):
            balance_initial_state(system, z, tol=0.0, max_iter=3)


class TestSingularConfigurations:
    def test_double_pendulum_collapsed_rod(self):
        system = double_pendulum(1e-3)
        with pytest.raises(SingularConfigurationError):
            eval_constraint(system, np.array([0.0, 0.0, 1.0, 0.0]))

    def test_elliptic_origin(self):
        system = elliptic_pendulum(1e-3)
        with pytest.raises(SingularConfigurationError):
            eval_jacobian(system, np.array([0.0, 0.0]))


def test_wrong_dof_count_rejected():
    system = elliptic_pendulum(1e-3)
    with pytest.raises(ValueError):
        eval_constraint(system, np.zeros(3))
