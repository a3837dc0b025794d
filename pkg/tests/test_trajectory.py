import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats
from hypothesis import given, settings
from hypothesis import strategies as st

import qdiscrim.trajectory as tr
from qdiscrim.closed_form import FeedbackLaw, feedback_tan_theta, p1_cdf_fb
from qdiscrim.qubit import BlochState, coding_states
from qdiscrim.weak import ContinuumSchedule, sample_weak_sequence
from qdiscrim.trajectory import (
    ROTATION_SIGN,
    SimConfig,
    StepError,
    asymmetry,
    bayes_increment,
    coding_state_increment,
    feedback_angle,
    feedback_hamiltonian_coeff,
    record_increment,
    simulate,
    sme_increment,
    sme_increment_matrix,
    symmetrizing_angle,
    trajectory_rng,
)


def _bloch_from_matrix(d):
    return 2 * d[0, 1].real, (d[0, 0] - d[1, 1]).real


class TestIncrements:
    @pytest.mark.parametrize("x", [1.0, -1.0])
    @pytest.mark.parametrize("dW", [0.03, -0.2])
    def test_eigenstates_fixed(self, x, dW):
        assert sme_increment(x, 0.0, dW, 1e-4, 1.0) == (0.0, 0.0)

    def test_matrix_and_bloch_agree(self):
        rho = BlochState(0, 0, 1).density_matrix()
        d = sme_increment_matrix(rho, 0.01, 1e-4, 1.0)
        dx, dz = sme_increment(0.0, 1.0, 0.01, 1e-4, 1.0)
        assert np.allclose(_bloch_from_matrix(d), (dx, dz), atol=1e-12, rtol=0)

    @given(
        st.floats(0, 2 * math.pi),
        st.floats(0, 1),
        st.floats(-0.1, 0.1),
        st.floats(1e-6, 1e-3),
        st.floats(0.1, 5),
    )
    def test_matrix_and_bloch_agree_everywhere(self, ang, r, dW, dt, gamma):
        x, z = r * math.sin(ang), r * math.cos(ang)
        d = sme_increment_matrix(BlochState(x, 0, z).density_matrix(), dW, dt, gamma)
        assert np.allclose(_bloch_from_matrix(d), sme_increment(x, z, dW, dt, gamma), atol=1e-12, rtol=0)
        assert abs(np.trace(d)) < 1e-15

    def test_record(self):
        assert record_increment(1.0, 0.0, 1e-4, 1.0) == 1e-4
        assert record_increment(0.0, 0.05, 1e-4, 1.0) == pytest.approx(0.05 / math.sqrt(8))
        assert record_increment(0.5, 0.02, 1e-3, 2.0) == pytest.approx(5.5e-3, abs=1e-15)

    def test_coding_state_equals_receiver_when_identical(self):
        got = coding_state_increment(0.3, 0.9, 0.3, 0.02, 1e-4, 1.3)
        assert got == sme_increment(0.3, 0.9, 0.02, 1e-4, 1.3)

    def test_coding_state_eigenstate_fixed(self):
        assert coding_state_increment(1.0, 0.0, -0.4, 0.05, 1e-4, 1.0) == (0.0, 0.0)

    def test_coding_states_drift_together(self):
        # with no noise, the x-z component equations give
        #   dx_i = 8 gamma (1 - x_i^2)(x_mix - x_i) dt
        #   dz_i = -4 gamma z_i dt - 8 gamma x_i z_i (x_mix - x_i) dt
        ens = coding_states(math.pi / 4)
        dt, g = 1e-4, 1.0
        for r in (ens.rho1, ens.rho2):
            dx, dz = coding_state_increment(r.x, r.z, 0.0, 0.0, dt, g)
            assert dx == pytest.approx(8 * g * (1 - r.x**2) * (0 - r.x) * dt, abs=1e-16)
            assert dz == pytest.approx((-4 * g * r.z - 8 * g * r.x * r.z * (0 - r.x)) * dt, abs=1e-16)
        assert coding_state_increment(ens.rho1.x, ens.rho1.z, 0.0, 0.0, dt, g)[0] < 0
        assert coding_state_increment(ens.rho2.x, ens.rho2.z, 0.0, 0.0, dt, g)[0] > 0

    def test_bayes(self):
        assert bayes_increment(0.4, 0.2, 0.2, 0.1, 1.0) == 0.0
        assert bayes_increment(0.0, 0.9, -0.3, 0.1, 1.0) == 0.0
        assert bayes_increment(0.5, 1.0, 0.0, 0.01, 1.0) == pytest.approx(0.0141421, abs=5e-8)

    @given(st.floats(0, 1), st.floats(0, math.pi / 2), st.floats(-0.1, 0.1))
    def test_bayes_conserves_total(self, p1, theta, dW):
        s = math.sin(theta)
        xm = p1 * s - (1 - p1) * s
        total = bayes_increment(p1, s, xm, dW, 1.0) + bayes_increment(1 - p1, -s, xm, dW, 1.0)
        assert total == pytest.approx(0.0, abs=1e-15)


def _exact_angle(x, z, p1, p2, dW, dt, g):
    xm = (p1 - p2) * x
    a = coding_state_increment(x, z, xm, dW, dt, g)
    b = coding_state_increment(-x, z, xm, dW, dt, g)
    return symmetrizing_angle(x + a[0], z + a[1], -x + b[0], z + b[1])


class TestFeedback:
    def test_symmetric_no_kick(self):
        assert feedback_angle(0.6, 0.8, 0.5, 0.5, 0.0, 1e-4, 1.0) == 0.0

    def test_identical_states(self):
        assert feedback_angle(0.0, 1.0, 0.9, 0.1, 0.03, 1e-4, 2.0) == pytest.approx(4 * 0.03)

    def test_reference_configuration(self):
        s = math.sqrt(0.5)
        phi = feedback_angle(s, s, 0.6, 0.4, 0.03, 1e-3, 1.0)
        assert phi == pytest.approx(math.sqrt(8) * s * 0.03 + 8 * 0.5 * 0.2 * 1e-3, abs=1e-15)
        assert phi == pytest.approx(_exact_angle(s, s, 0.6, 0.4, 0.03, 1e-3, 1.0), abs=2e-4)

    def test_matches_exact_angle_to_three_halves_order(self):
        x, z, p1, p2 = math.sin(0.6), math.cos(0.6), 0.6, 0.4
        errs = []
        for dt in (1e-4, 1e-5, 1e-6):
            dW = 0.8 * math.sqrt(dt)
            errs.append(abs(feedback_angle(x, z, p1, p2, dW, dt, 1.0) - _exact_angle(x, z, p1, p2, dW, dt, 1.0)))
        orders = np.log10(np.array(errs[:-1]) / errs[1:])
        assert np.all(orders > 1.4)

    def test_angle_without_z_factor_is_first_order_wrong(self):
        # dropping z from the noise term leaves an O(sqrt(dt)) error
        x, z, p1, p2, dt = math.sin(0.6), math.cos(0.6), 0.6, 0.4, 1e-6
        dW = math.sqrt(dt)
        naive = math.sqrt(8) * dW + 8 * z * x * (p1 - p2) * dt
        assert abs(naive - _exact_angle(x, z, p1, p2, dW, dt, 1.0)) > 100 * abs(
            feedback_angle(x, z, p1, p2, dW, dt, 1.0) - _exact_angle(x, z, p1, p2, dW, dt, 1.0)
        )

    def test_hamiltonian(self):
        assert feedback_hamiltonian_coeff(0.0, 1.0, 1.0) == 0.0
        assert feedback_hamiltonian_coeff(0.3, 1.0, 1.0) == pytest.approx(2.4)

    @given(st.floats(0.05, 1.5), st.floats(0, 1), st.floats(-0.05, 0.05))
    def test_hamiltonian_integrates_to_angle(self, theta, p1, dW):
        x, z, dt, g = math.sin(theta), math.cos(theta), 1e-4, 1.0
        dy = record_increment((2 * p1 - 1) * x, dW, dt, g)
        assert feedback_hamiltonian_coeff(dy / dt, z, g) * dt == pytest.approx(
            feedback_angle(x, z, p1, 1 - p1, dW, dt, g), abs=1e-14
        )

    def test_rotation_sign(self):
        assert ROTATION_SIGN == 1.0
        x, z = math.sin(0.5), math.cos(0.5)
        a = coding_state_increment(x, z, 0.0, 0.01, 1e-4, 1.0)
        b = coding_state_increment(-x, z, 0.0, 0.01, 1e-4, 1.0)
        x1, z1, x2, z2 = x + a[0], z + a[1], -x + b[0], z + b[1]
        r1, r2 = math.hypot(x1, z1), math.hypot(x2, z2)
        x1, z1, x2, z2 = x1 / r1, z1 / r1, x2 / r2, z2 / r2
        phi = ROTATION_SIGN * symmetrizing_angle(x1, z1, x2, z2)
        assert asymmetry(*tr.rotate_components(x1, z1, phi), *tr.rotate_components(x2, z2, phi)) < 1e-15
        assert asymmetry(*tr.rotate_components(x1, z1, -phi), *tr.rotate_components(x2, z2, -phi)) > 1e-2


class TestConfig:
    def test_step_limit(self):
        with pytest.raises(ValueError):
            SimConfig(gamma=2.0, dt=0.01)

    @pytest.mark.parametrize("field, value", [("n_traj", 0), ("t_max", -1.0), ("scheme", "rk4"), ("save_every", 0)])
    def test_invalid(self, field, value):
        with pytest.raises(ValueError):
            replace(SimConfig(), **{field: value})

    def test_scheme_resolution(self):
        assert SimConfig().resolved_scheme == "kraus"
        assert SimConfig(feedback=True).resolved_scheme == "kraus"
        assert SimConfig(scheme="euler").to_dict()["resolved_scheme"] == "euler"

    def test_save_steps_include_end(self):
        cfg = SimConfig(dt=1e-3, t_max=0.0105, save_every=4)
        assert cfg.n_steps == 10
        assert list(cfg.save_steps()) == [0, 4, 8, 10]


class TestSimulation:
    def test_noiseless_feedback_follows_ode(self):
        errs = []
        for dt in (2e-5, 1e-5):
            cfg = SimConfig(dt=dt, t_max=1.0, theta0=math.pi / 4, feedback=True, save_every=10000)
            b = simulate(cfg, increments=np.zeros((cfg.n_steps, 1)))
            ratio = b.tan_theta()[:, 0] / feedback_tan_theta(cfg.theta0, 1.0, b.t)
            errs.append(np.abs(ratio - 1).max())
            assert b.max_asymmetry[0] < 1e-12
        assert errs[1] < 1e-3
        assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.05)  # first order in dt

    def test_feedback_trajectory_is_deterministic_in_theta(self):
        cfg = SimConfig(dt=1e-5, t_max=1.0, theta0=math.pi / 4, feedback=True, n_traj=3, seed=4, save_every=25000)
        b = simulate(cfg)
        ode = feedback_tan_theta(cfg.theta0, 1.0, b.t)[:, None]
        assert np.abs(b.tan_theta() / ode - 1).max() < 1e-3

    @pytest.mark.parametrize("feedback", [False, True])
    def test_kraus_keeps_mixture_exact(self, feedback):
        b = simulate(SimConfig(dt=1e-4, t_max=0.5, n_traj=50, seed=3, feedback=feedback))
        assert b.max_mixture_error.max() < 1e-10

    def test_euler_mixture_error_is_half_order(self):
        errs = [
            simulate(SimConfig(dt=dt, t_max=0.5, n_traj=100, seed=3, scheme="euler")).max_mixture_error.mean()
            for dt in (4e-4, 1e-4)
        ]
        assert math.log(errs[0] / errs[1], 4) == pytest.approx(0.5, abs=0.2)

    @pytest.mark.parametrize("scheme", ["kraus", "euler"])
    def test_feedback_schemes_agree_on_angle(self, scheme):
        cfg = SimConfig(dt=1e-5, t_max=1.0, feedback=True, n_traj=2, seed=8, scheme=scheme, save_every=50000)
        b = simulate(cfg)
        assert np.abs(b.tan_theta()[-1] / feedback_tan_theta(cfg.theta0, 1.0, 1.0) - 1).max() < 1e-3
        assert b.max_asymmetry.max() < 1e-12

    def test_feedback_posterior_law(self):
        cfg = SimConfig(dt=1e-4, t_max=1.0, feedback=True, n_traj=2000, seed=14, save_every=5000)
        b = simulate(cfg)
        law = FeedbackLaw(cfg.theta0, 1.0, 1.0)
        ks = stats.kstest(b.p1[-1], lambda p: p1_cdf_fb(law, p)).statistic
        assert ks < stats.kstwo.ppf(0.99, 2000)

    def test_ito_correction_matters(self, monkeypatch):
        # without the opening-angle reset the Kraus step scatters tan(theta) at O(sqrt(t dt))
        monkeypatch.setattr(tr, "_ito_opening", lambda x, z, x1, z1, x2, z2, p1, p2, *a: (x, z, x1, z1, x2, z2, p1, p2))
        cfg = SimConfig(dt=1e-4, t_max=1.0, feedback=True, n_traj=20, seed=8, save_every=10000)
        b = simulate(cfg)
        assert np.abs(b.tan_theta()[-1] / feedback_tan_theta(cfg.theta0, 1.0, 1.0) - 1).max() > 5e-3

    def test_orthogonal_states_resolve(self):
        b = simulate(SimConfig(dt=1e-3, t_max=5.0, theta0=math.pi / 2, n_traj=40, seed=1, save_every=5000))
        assert np.all(np.minimum(b.p1[-1], 1 - b.p1[-1]) < 1e-6)

    def test_martingale(self):
        b = simulate(SimConfig(dt=1e-3, t_max=1.0, n_traj=2000, seed=11, save_every=100))
        se = b.p1.std(axis=1, ddof=1) / math.sqrt(2000)
        dev = np.abs(b.p1.mean(axis=1) - 0.5)
        assert np.all(dev[1:] <= 3 * se[1:])

    def test_saved_initial_state(self):
        b = simulate(SimConfig(theta0=0.4, p1=0.3, t_max=0.01, save_every=10, n_traj=2))
        ens = coding_states(0.4, 0.3)
        assert b.t[0] == 0.0
        assert np.all(b.x1[0] == ens.rho1.x) and np.all(b.p1[0] == 0.3) and np.all(b.y[0] == 0)

    def test_at_time(self):
        b = simulate(SimConfig(t_max=0.01, save_every=10))
        assert b.t[b.at_time(0.005)] == pytest.approx(0.005)
        with pytest.raises(KeyError):
            b.at_time(0.0055)

    def test_increments_shape_checked(self):
        with pytest.raises(ValueError):
            simulate(SimConfig(t_max=0.01), increments=np.zeros((3, 1)))

    def test_euler_blowup_reported(self):
        cfg = SimConfig(dt=1e-4, t_max=0.01, scheme="euler", n_traj=2)
        dW = np.zeros((cfg.n_steps, 2))
        dW[5, 1] = 3.0  # absurd kick
        with pytest.raises(StepError) as info:
            simulate(cfg, increments=dW)
        assert info.value.trajectory == 1


class TestReproducibility:
    def test_stream_independent_of_batch(self):
        a = simulate(SimConfig(t_max=0.05, n_traj=3, seed=9))
        b = simulate(SimConfig(t_max=0.05, n_traj=7, seed=9))
        assert np.array_equal(a.p1, b.p1[:, :3])

    def test_stream_independent_of_noise_chunking(self, monkeypatch):
        cfg = SimConfig(t_max=0.05, n_traj=4, seed=2)
        a = simulate(cfg)
        monkeypatch.setattr(tr, "NOISE_CHUNK", 7)
        b = simulate(cfg)
        assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)

    def test_rng_is_counter_based(self):
        first = trajectory_rng(5, 3).standard_normal(10)
        again = trajectory_rng(5, 3).standard_normal(10)
        other = trajectory_rng(5, 4).standard_normal(10)
        assert np.array_equal(first, again) and not np.array_equal(first, other)

    @pytest.mark.parametrize("feedback", [False, True])
    def test_worker_count_invariance(self, feedback):
        cfg = SimConfig(dt=1e-4, t_max=0.005, n_traj=tr.BLOCK_SIZE + 5, seed=21, feedback=feedback, save_every=10)
        one = simulate(cfg, workers=1)
        two = simulate(cfg, workers=2)
        for f in tr.FIELDS[1:]:
            assert getattr(one, f).tobytes() == getattr(two, f).tobytes()

    def test_seed_override(self):
        cfg = SimConfig(t_max=0.01, seed=1)
        assert np.array_equal(simulate(cfg, seed=2).y, simulate(replace(cfg, seed=2)).y)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_same_seed_same_bytes(self, seed):
        cfg = SimConfig(t_max=0.002, n_traj=2, seed=seed, save_every=5)
        assert simulate(cfg).p1.tobytes() == simulate(cfg).p1.tobytes()


def test_weak_sequence_matches_sme():
    """Discrete weak measurements at matched strength give the SME's law of P1."""
    n, t, n_steps = 10_000, 0.5, 2000
    sme = simulate(SimConfig(dt=1e-4, t_max=t, theta0=math.pi / 8, n_traj=n, seed=31, save_every=5000)).p1[-1]
    sched = ContinuumSchedule.for_gamma(1.0, t / n_steps)
    weak = sample_weak_sequence(coding_states(math.pi / 8), sched.k, n_steps, n, np.random.default_rng(32))
    res = stats.ks_2samp(weak, sme)
    assert res.statistic < stats.kstwo.ppf(0.99, n // 2)
