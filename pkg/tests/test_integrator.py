"""Leapfrog step, Hamiltonian, acceptance forms, and the flow oracle."""

import math

import numpy as np
import pytest

from malakit.integrator import (
    NumericFailure,
    PhaseState,
    exact_quadratic_flow,
    hamiltonian,
    kinetic_error_bound,
    leapfrog_step,
    log_accept_energy,
    log_accept_proposal_form,
)
from malakit.rng import chain_rng
from malakit.targets import TargetModel, make_gaussian, make_logistic_regression, sample_sphere_dataset


def flat_target(d):
    return TargetModel(
        dimension=d,
        potential=lambda x: np.zeros(np.asarray(x, dtype=float).shape[:-1]),
        gradient=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        name=f"flat-{d}",
    )


class TestHamiltonian:
    def test_flat_zero(self):
        assert hamiltonian(flat_target(2), PhaseState(np.ones(2), np.zeros(2))) == 0.0

    def test_kinetic_only(self):
        g = make_gaussian(1, 1.0)
        assert hamiltonian(g, PhaseState(np.zeros(1), np.ones(1))) == pytest.approx(0.5)

    def test_both_terms(self):
        g = make_gaussian(1, 1.0)
        assert hamiltonian(g, PhaseState(np.array([3.0]), np.array([4.0]))) == pytest.approx(12.5)

    def test_dimension_mismatch(self):
        g = make_gaussian(2, [1.0, 1.0])
        with pytest.raises(ValueError):
            hamiltonian(g, PhaseState(np.zeros(3), np.zeros(3)))


class TestLeapfrogStep:
    def test_free_particle_exact(self):
        t = flat_target(3)
        state = PhaseState(np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.1, -0.7]))
        res = leapfrog_step(t, state, 0.25)
        assert np.array_equal(res.proposal.position, state.position + 0.25 * state.velocity)
        assert np.array_equal(res.proposal.velocity, state.velocity)
        assert res.energy_error == 0.0

    def test_unit_gaussian_hand_values(self):
        g = make_gaussian(1, 1.0)
        res = leapfrog_step(g, PhaseState(np.zeros(1), np.ones(1)), 0.1)
        assert float(res.proposal.position[0]) == pytest.approx(0.1, rel=1e-15)
        assert float(res.proposal.velocity[0]) == pytest.approx(0.995, rel=1e-15)
        assert res.energy_error == pytest.approx(1.25e-5, rel=1e-9)
        assert res.gradient_evals == 2

    def test_error_shrinks_like_eta_cubed_or_better(self):
        g = make_gaussian(1, 1.0)
        res = leapfrog_step(g, PhaseState(np.zeros(1), np.ones(1)), 0.01)
        assert res.energy_error == pytest.approx(1.25e-9, rel=1e-6)

    def test_nonfinite_gradient_raises(self):
        bad = TargetModel(
            dimension=2,
            potential=lambda x: np.zeros(np.asarray(x).shape[:-1]),
            gradient=lambda x: np.array([np.nan, 0.0]),
            name="broken",
        )
        with pytest.raises(NumericFailure) as err:
            leapfrog_step(bad, PhaseState(np.zeros(2), np.zeros(2)), 0.1)
        assert 0 in err.value.coordinates

    def test_reversibility(self):
        data = sample_sphere_dataset(4, 20, np.array([1.0, 0, 0, 0]), 0.7, 3)
        t = make_logistic_regression(data, 1.0)
        rng = chain_rng(7)
        for _ in range(50):
            state = PhaseState(rng.standard_normal(4), rng.standard_normal(4))
            fwd = leapfrog_step(t, state, 0.2)
            back = leapfrog_step(t, PhaseState(fwd.proposal.position, -fwd.proposal.velocity), 0.2)
            assert np.max(np.abs(back.proposal.position - state.position)) <= 1e-10
            assert np.max(np.abs(back.proposal.velocity + state.velocity)) <= 1e-10


class TestExactFlow:
    def test_identity_at_zero(self):
        g = make_gaussian(2, [1.0, 4.0])
        s = PhaseState(np.array([1.0, 2.0]), np.array([-1.0, 0.5]))
        out = exact_quadratic_flow(g, s, 0.0)
        assert np.allclose(out.position, s.position)
        assert np.allclose(out.velocity, s.velocity)

    def test_quarter_rotation(self):
        g = make_gaussian(1, 1.0)
        out = exact_quadratic_flow(g, PhaseState(np.zeros(1), np.ones(1)), math.pi / 2.0)
        assert float(out.position[0]) == pytest.approx(1.0, abs=1e-12)
        assert float(out.velocity[0]) == pytest.approx(0.0, abs=1e-12)

    def test_conserves_hamiltonian(self):
        g = make_gaussian(3, [0.5, 1.0, 2.0])
        rng = chain_rng(5)
        for _ in range(40):
            s = PhaseState(rng.standard_normal(3), rng.standard_normal(3))
            t = float(rng.random() * 10.0)
            before = hamiltonian(g, s)
            after = hamiltonian(g, exact_quadratic_flow(g, s, t))
            assert abs(after - before) <= 1e-12 * (1.0 + abs(before))

    def test_requires_analytic_flow(self):
        with pytest.raises(ValueError):
            exact_quadratic_flow(flat_target(1), PhaseState(np.zeros(1), np.zeros(1)), 1.0)

    def test_leapfrog_tracks_flow_at_third_order(self):
        g = make_gaussian(1, 1.0)
        rng = chain_rng(6)
        for eta in (0.1, 0.05, 0.025):
            for _ in range(20):
                s = PhaseState(rng.standard_normal(1), rng.standard_normal(1))
                approx = leapfrog_step(g, s, eta).proposal
                exact = exact_quadratic_flow(g, s, eta)
                scale = 1.0 + float(np.linalg.norm(np.concatenate([s.position, s.velocity])))
                err = max(float(np.max(np.abs(approx.position - exact.position))),
                          float(np.max(np.abs(approx.velocity - exact.velocity))))
                assert err <= 10.0 * eta**3 * scale


class TestAcceptanceForms:
    def test_log_accept_energy_values(self):
        assert log_accept_energy(0.0) == 0.0
        assert log_accept_energy(1.25e-5) == pytest.approx(-1.25e-5)
        assert log_accept_energy(-3.0) == 0.0

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            log_accept_energy(float("nan"))

    def test_identity_proposal(self):
        g = make_gaussian(1, 1.0)
        assert log_accept_proposal_form(g, np.array([0.7]), np.array([0.7]), 0.3) == 0.0

    def test_matches_energy_form_on_hand_example(self):
        g = make_gaussian(1, 1.0)
        res = leapfrog_step(g, PhaseState(np.zeros(1), np.ones(1)), 0.1)
        a = log_accept_energy(res.energy_error)
        b = log_accept_proposal_form(g, np.zeros(1), res.proposal.position, 0.1)
        assert a == pytest.approx(-1.25e-5, rel=1e-9)
        assert abs(a - b) <= 1e-10

    def test_forms_agree_on_random_instances(self):
        # smaller version of the acceptance gate; the 1e4-instance run lives there
        data = sample_sphere_dataset(5, 20, np.eye(5)[0], 0.7, 2)
        targets = [make_gaussian(5, [0.5, 1.0, 2.0, 1.0, 1.0]), make_logistic_regression(data, 1.0)]
        rng = chain_rng(17)
        for _ in range(500):
            t = targets[int(rng.integers(2))]
            x, v = rng.standard_normal(5), rng.standard_normal(5)
            eta = 0.01 + 0.49 * float(rng.random())
            res = leapfrog_step(t, PhaseState(x, v), eta)
            a = log_accept_energy(res.energy_error)
            b = log_accept_proposal_form(t, x, res.proposal.position, eta)
            assert abs(a - b) <= 1e-10


class TestKineticErrorBound:
    def test_zero_constants(self):
        assert kinetic_error_bound(0.0, 0.0, np.eye(3), np.ones(3), 0.5) == 0.0

    def test_hand_value(self):
        # 1D, X = [1], v = 2: eta^3 * 1 * 4 * 2 = 0.008
        assert kinetic_error_bound(1.0, 0.0, np.eye(1), np.array([2.0]), 0.1) == pytest.approx(0.008)

    def test_cubic_homogeneity(self):
        v = np.array([0.3, -1.2])
        small = kinetic_error_bound(2.0, 0.0, np.eye(2), v, 0.1)
        large = kinetic_error_bound(2.0, 0.0, np.eye(2), v, 0.2)
        assert large == pytest.approx(8.0 * small, rel=1e-12)

    def test_rejects_negative_constants(self):
        with pytest.raises(ValueError):
            kinetic_error_bound(-1.0, 0.0, np.eye(1), np.ones(1), 0.1)
