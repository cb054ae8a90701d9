import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vmfaoa._validation import DegenerateWeightsError, FilterError
from vmfaoa.directional import kappa_to_sigma, random_rotation, to_angles, wrap_angle
from vmfaoa.filters import (
    VARIANTS,
    FilterConfig,
    GaussianBelief,
    ParticleSet,
    StateSpaceModel,
    ekf_update_ae,
    ekf_update_vmf,
    effective_sample_size,
    kalman_update,
    maybe_resample,
    pf_update_ae,
    pf_update_vmf,
    predict,
    resample,
    run_filter,
    sigma_points,
    ukf_update_ae,
    ukf_update_vmf,
    unscented_update,
    vmf_loglik,
)
from vmfaoa.sensors import AdaptiveStdTable, AeNoiseParams, Anchor, Measurements, ae_predict

ORIGIN = Anchor(np.zeros(3))
FOUR_ANCHORS = [Anchor(np.array(p)) for p in ([-3.0, -3, 1], [8, -3, -1], [8, 8, 2], [-3, 8, -2])]


def meas_of(theta, anchors):
    az, el = zip(*(ae_predict(theta, a) for a in anchors))
    return Measurements(np.array(az, float), np.array(el, float))


def flat_table(sa, se):
    return AdaptiveStdTable(np.array([-90.0, 0, 90]), np.full(3, sa), np.full(3, se))


def assert_valid_cov(P):
    assert np.max(np.abs(P - P.T)) < 1e-9
    assert np.linalg.eigvalsh(P).min() > -1e-12


class TestPredict:
    def test_identity(self):
        b = GaussianBelief(np.array([1.0, 2, 3]), np.diag([1.0, 2, 3]))
        out = predict(b, np.eye(3), np.zeros((3, 3)))
        np.testing.assert_array_equal(out.mean, b.mean)
        np.testing.assert_array_equal(out.cov, b.cov)

    def test_trace_grows(self):
        b = GaussianBelief(np.zeros(3), np.eye(3))
        out = predict(b, np.eye(3), 0.2 * np.eye(3))
        assert np.trace(out.cov) == pytest.approx(3 + 3 * 0.2)

    def test_particles_without_noise(self, rng):
        A = random_rotation(rng) * 2
        p = ParticleSet(rng.normal(size=(50, 3)), np.full(50, 1 / 50))
        out = predict(p, A, np.zeros((3, 3)), rng)
        np.testing.assert_allclose(out.states, p.states @ A.T)
        np.testing.assert_array_equal(out.weights, p.weights)

    def test_particle_noise_covariance(self):
        Q = np.array([[0.5, 0.1, 0], [0.1, 0.2, 0], [0, 0, 0]])
        p = ParticleSet(np.zeros((200_000, 3)), np.full(200_000, 1 / 200_000))
        out = predict(p, np.eye(3), Q, 3)
        np.testing.assert_allclose(np.cov(out.states.T), Q, atol=0.01)
        assert np.all(out.states[:, 2] == 0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            predict(GaussianBelief(np.zeros(3), np.eye(3)), np.eye(2), np.eye(2))


class TestParticleUpdates:
    def test_vmf_hand_case(self):
        # particle directions at cos = 1, 0, -1 from u = [1, 0, 0]
        p = ParticleSet(np.array([[1.0, 0, 0], [0, 1, 0], [-1, 0, 0]]), np.full(3, 1 / 3))
        out = pf_update_vmf(p, Measurements(np.array([0.0]), np.array([0.0])), [ORIGIN], 2.0)
        expected = np.exp([2.0, 0.0, -2.0])
        np.testing.assert_allclose(out.weights, expected / expected.sum(), rtol=1e-14)

    def test_vmf_log_ratio(self):
        p = ParticleSet(np.array([[3.0, 0, 0], [0, 0, 5]]), np.array([0.5, 0.5]))
        kappa = 7.5
        out = pf_update_vmf(p, Measurements(np.array([0.0]), np.array([0.0])), [ORIGIN], kappa)
        assert np.log(out.weights[0] / out.weights[1]) == pytest.approx(kappa, rel=1e-12)

    def test_vmf_zero_kappa(self, rng):
        w = rng.dirichlet(np.ones(20))
        p = ParticleSet(rng.normal(size=(20, 3)), w)
        out = pf_update_vmf(p, Measurements(np.array([0.3]), np.array([0.1])), [ORIGIN], 0.0)
        np.testing.assert_allclose(out.weights, w, rtol=1e-14)

    def test_vmf_large_exponent(self, rng):
        p = ParticleSet(rng.normal(size=(100, 3)), np.full(100, 0.01))
        out = pf_update_vmf(p, Measurements(np.zeros(4), np.zeros(4)), FOUR_ANCHORS, 1e6)
        assert np.all(np.isfinite(out.weights))
        assert abs(out.weights.sum() - 1) < 1e-10

    def test_ae_zero_residuals(self):
        states = np.array([[1.0, 0, 0], [2, 0, 0], [5, 0, 0]])
        out = pf_update_ae(ParticleSet(states, np.full(3, 1 / 3)), Measurements(np.zeros(1), np.zeros(1)),
                           [ORIGIN], AeNoiseParams(0.1, 0.2))
        np.testing.assert_allclose(out.weights, 1 / 3, rtol=1e-14)

    @pytest.mark.parametrize("which", [0, 1])
    def test_ae_one_sigma(self, which):
        sigma = AeNoiseParams(0.1, 0.2)
        s = (sigma.sigma_azi, sigma.sigma_ele)[which]
        angles = [(0.0, 0.0), (s, 0.0) if which == 0 else (0.0, s)]
        states = np.array([np.array([np.cos(a) * np.cos(e), np.sin(a) * np.cos(e), np.sin(e)]) for a, e in angles])
        out = pf_update_ae(ParticleSet(states, np.array([0.5, 0.5])), Measurements(np.zeros(1), np.zeros(1)),
                           [ORIGIN], sigma)
        assert np.log(out.weights[0] / out.weights[1]) == pytest.approx(0.5, rel=1e-10)

    def test_ae_wrap(self):
        eps = 0.05
        states = np.array([[np.cos(-eps), np.sin(-eps), 0], [np.cos(eps), np.sin(eps), 0]])
        # measured azimuth pi: residuals pi + eps and pi - eps wrap to -(pi - eps) and pi - eps
        out = pf_update_ae(ParticleSet(states, np.array([0.5, 0.5])), Measurements(np.array([np.pi]), np.zeros(1)),
                           [ORIGIN], AeNoiseParams(0.5, 0.5))
        assert out.weights[0] == pytest.approx(out.weights[1], rel=1e-12)

    def test_adaptive_uses_predicted_elevation(self):
        grid = np.arange(-90.0, 91.0, 45.0)
        tab = AdaptiveStdTable(grid, np.array([1.0, 1, 0.1, 1, 1]), np.full(5, 0.1))
        states = np.array([[1.0, 0.05, 0], [1, 0.05, 0.8]])
        ll_flat = pf_update_ae(ParticleSet(states, np.array([0.5, 0.5])),
                               Measurements(np.zeros(1), np.zeros(1)), [ORIGIN], AeNoiseParams(0.1, 0.1))
        ll_tab = pf_update_ae(ParticleSet(states, np.array([0.5, 0.5])),
                              Measurements(np.zeros(1), np.zeros(1)), [ORIGIN], tab)
        # the high-elevation particle gets a 10x broader azimuth density from the table
        assert ll_tab.weights[1] != pytest.approx(ll_flat.weights[1])

    def test_degenerate_weights(self):
        p = ParticleSet(np.ones((3, 3)), np.zeros(3))
        with pytest.raises(DegenerateWeightsError):
            pf_update_ae(p, Measurements(np.zeros(1), np.zeros(1)), [ORIGIN], AeNoiseParams(0.1, 0.1))

    def test_weight_rotation_invariance(self, rng):
        # rotating the world together with the anchors leaves the weights unchanged
        for _ in range(10):
            G = random_rotation(rng)
            anchors = [Anchor(rng.normal(size=3) * 3, random_rotation(rng)) for _ in range(3)]
            rotated = [Anchor(G @ a.position, a.orientation @ G.T) for a in anchors]
            states = rng.normal(size=(100, 3)) * 4
            az = rng.uniform(-np.pi, np.pi, 3)
            el = rng.uniform(-1.5, 1.5, 3)
            m = Measurements(az, el)
            a = vmf_loglik(states, m, anchors, 33.0)
            b = vmf_loglik(states @ G.T, m, rotated, 33.0)
            np.testing.assert_allclose(a, b, atol=1e-10, rtol=0)


class TestResampling:
    def test_ess(self):
        assert effective_sample_size(np.full(8, 1 / 8)) == pytest.approx(8)
        assert effective_sample_size([1.0, 0, 0]) == 1.0
        assert effective_sample_size([0.5, 0.25, 0.25]) == pytest.approx(8 / 3)

    @settings(max_examples=100)
    @given(st.integers(0, 2**32 - 1))
    def test_rational_weights(self, seed):
        p = ParticleSet(np.array([[1.0], [2.0], [3.0], [4.0]]), np.array([0.75, 0.25, 0.0, 0.0]))
        out = resample(p, seed)
        assert np.sum(out.states == 1.0) == 3 and np.sum(out.states == 2.0) == 1
        np.testing.assert_array_equal(out.weights, 0.25)

    def test_single_mass(self):
        p = ParticleSet(np.arange(10.0)[:, None], np.eye(10)[0])
        assert np.all(resample(p, 1).states == 0.0)

    def test_uniform_input(self, rng):
        p = ParticleSet(np.arange(10.0)[:, None], np.full(10, 0.1))
        out = resample(p, rng)
        assert sorted(out.states[:, 0]) == list(range(10))

    @settings(max_examples=100)
    @given(st.integers(0, 2**32 - 1))
    def test_copy_counts(self, seed):
        rng = np.random.default_rng(seed)
        n = 37
        w = rng.dirichlet(np.full(n, 0.3))
        out = resample(ParticleSet(np.arange(n, dtype=float)[:, None], w), rng)
        counts = np.bincount(out.states[:, 0].astype(int), minlength=n)
        assert np.all(np.abs(counts - n * w) < 1)

    def test_trigger_exactly_below_fraction(self):
        n = 100
        for ess_target, expect in ((9.99, True), (10.0, False), (10.01, False)):
            # weights with ESS equal to ess_target: m equal weights then zeros is too coarse,
            # so mix one heavy particle with uniform mass
            def ess_of(a):
                w = np.full(n, (1 - a) / (n - 1))
                w[0] = a
                return w, effective_sample_size(w)
            lo, hi = 0.01, 1.0
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if ess_of(mid)[1] > ess_target:
                    lo = mid
                else:
                    hi = mid
            w = ess_of(hi)[0] if expect else ess_of(lo)[0]
            _, did = maybe_resample(ParticleSet(np.zeros((n, 1)), w), 0.1, 0)
            assert did == (effective_sample_size(w) < 10.0) == expect


class TestKalman:
    def belief(self):
        return GaussianBelief(np.array([0.3, -0.3, -2.0]), 0.75**2 * np.eye(3))

    def test_ekf_vmf_zero_innovation(self):
        b = self.belief()
        m = Measurements(*(np.atleast_1d(v) for v in ae_predict(b.mean, ORIGIN)))
        out = ekf_update_vmf(b, m, [ORIGIN], 131.3)
        np.testing.assert_allclose(out.mean, b.mean, atol=1e-12)
        assert np.trace(out.cov) < np.trace(b.cov)
        assert_valid_cov(out.cov)

    def test_ekf_vmf_vanishing_kappa(self):
        b = self.belief()
        m = Measurements(np.array([1.0]), np.array([0.5]))
        out = ekf_update_vmf(b, m, [ORIGIN], 1e-12)
        np.testing.assert_allclose(out.mean, b.mean, atol=1e-9)
        np.testing.assert_allclose(out.cov, b.cov, atol=1e-9)
        assert ekf_update_vmf(b, m, [ORIGIN], 0.0) is b

    def test_ukf_weights(self):
        _, w = sigma_points(self.belief(), 0.5)
        np.testing.assert_allclose(w, 1 / 7, rtol=1e-15)

    def test_ukf_vmf_zero_innovation(self):
        # symmetric sigma points around a direction straight down the z axis
        b = GaussianBelief(np.array([0.0, 0, -2]), np.eye(3) * 0.1)
        m = Measurements(np.array([0.0]), np.array([-np.pi / 2]))
        out = ukf_update_vmf(b, m, [ORIGIN], 131.3)
        np.testing.assert_allclose(out.mean, b.mean, atol=1e-12)
        assert_valid_cov(out.cov)

    def test_unscented_linear_exactness(self, rng):
        for _ in range(20):
            n, m = 4, 3
            A = rng.normal(size=(n, n))
            b = GaussianBelief(rng.normal(size=n), A @ A.T + 0.1 * np.eye(n))
            H = rng.normal(size=(m, n))
            c = rng.normal(size=m)
            B = rng.normal(size=(m, m))
            R = B @ B.T + 0.1 * np.eye(m)
            z = rng.normal(size=m)
            ukf = unscented_update(b, z, lambda X: X @ H.T + c, R, lam=0.5)
            kf = kalman_update(b, z - (H @ b.mean + c), H, R)
            np.testing.assert_allclose(ukf.mean, kf.mean, atol=1e-10)
            np.testing.assert_allclose(ukf.cov, kf.cov, atol=1e-10)

    def test_ekf_ae_zero_innovation_and_wrap(self):
        b = self.belief()
        az, el = ae_predict(b.mean, ORIGIN)
        sig = AeNoiseParams.from_degrees(5, 5)
        out = ekf_update_ae(b, Measurements(np.array([az]), np.array([el])), [ORIGIN], sig)
        np.testing.assert_allclose(out.mean, b.mean, atol=1e-12)
        wrapped = ekf_update_ae(b, Measurements(np.array([az + 2 * np.pi]), np.array([el])), [ORIGIN], sig)
        np.testing.assert_allclose(wrapped.mean, out.mean, atol=1e-12)
        np.testing.assert_allclose(wrapped.cov, out.cov, atol=1e-12)

    def test_ekf_ae_pole_fallback(self):
        b = GaussianBelief(np.array([0.0, 0, -2]), np.eye(3))
        out = ekf_update_ae(b, Measurements(np.array([1.0]), np.array([-1.2])), [ORIGIN], AeNoiseParams(0.1, 0.1))
        assert np.all(np.isfinite(out.mean))
        # only the elevation row is used, and it is zero in x and y at the pole
        np.testing.assert_allclose(out.mean[:2], 0.0, atol=1e-12)

    def test_ukf_ae_zero_innovation(self):
        b = GaussianBelief(np.array([2.0, 0.5, 0.3]), 0.01 * np.eye(3))
        m = meas_of(b.mean, [ORIGIN])
        out = ukf_update_ae(b, m, [ORIGIN], AeNoiseParams(0.1, 0.1))
        # the circular mean of sigma-point angles sits close to, not exactly at, the mean's angles
        assert np.linalg.norm(out.mean - b.mean) < 1e-3
        assert_valid_cov(out.cov)

    def test_ukf_ae_circular_mean_across_wrap(self):
        # mean straight along -x: sigma-point azimuths straddle +-pi
        b = GaussianBelief(np.array([-2.0, 0, 0]), 0.05 * np.eye(3))
        seen = {}

        def spy(Z, w):
            from vmfaoa.filters import _ae_mean
            seen["zhat"] = _ae_mean(Z, w)
            return _ae_mean(Z, w)

        from vmfaoa.filters import _ae_residual
        X, _ = sigma_points(b, 0.5)
        az = to_angles(X)[0]
        assert az.max() > 2.5 and az.min() < -2.5
        unscented_update(b, np.array([np.pi, 0.0]), lambda X: np.column_stack(to_angles(X)),
                         np.eye(2) * 0.01, 0.5, mean_fn=spy, residual_fn=_ae_residual)
        assert abs(seen["zhat"][0]) == pytest.approx(np.pi, abs=1e-12)
        out = ukf_update_ae(b, Measurements(np.array([np.pi]), np.array([0.0])), [ORIGIN], AeNoiseParams(0.1, 0.1))
        np.testing.assert_allclose(out.mean, b.mean, atol=1e-9)

    def test_ukf_ae_adaptive_matches_flat_table(self):
        b = GaussianBelief(np.array([2.0, 0.5, 0.3]), 0.2 * np.eye(3))
        m = Measurements(np.array([0.4]), np.array([0.1]))
        flat = ukf_update_ae(b, m, [ORIGIN], AeNoiseParams(0.1, 0.2))
        tab = ukf_update_ae(b, m, [ORIGIN], flat_table(0.1, 0.2))
        np.testing.assert_allclose(tab.mean, flat.mean, atol=1e-14)
        np.testing.assert_allclose(tab.cov, flat.cov, atol=1e-14)

    def test_ukf_ae_linear_regime(self):
        # far anchor, tiny covariance: angles are nearly linear in position, UKF ~ EKF
        b = GaussianBelief(np.array([100.0, 20, 10]), 1e-4 * np.eye(3))
        m = Measurements(np.array([0.2]), np.array([0.1]))
        sig = AeNoiseParams(1e-3, 1e-3)
        np.testing.assert_allclose(ukf_update_ae(b, m, [ORIGIN], sig).mean,
                                   ekf_update_ae(b, m, [ORIGIN], sig).mean, atol=1e-4)


def make_config(variant, kappa, sigma):
    noise = flat_table(sigma, sigma) if variant.endswith("adaptive") else AeNoiseParams(sigma, sigma)
    return FilterConfig(variant, kappa=kappa, noise=noise, n_particles=2000)


class TestRunFilter:
    model = StateSpaceModel(np.eye(3), 0.01 * np.eye(3))
    truth = np.array([2.0, 1.5, 0.3])

    def test_zero_epochs(self):
        cfg = make_config("pf-vmf", 10.0, 0.1)
        est = run_filter(cfg, self.model, GaussianBelief(np.zeros(3), np.eye(3)),
                         Measurements(np.empty((0, 4)), np.empty((0, 4))), FOUR_ANCHORS, 0)
        assert est.shape == (0, 3)

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_noiseless_convergence(self, variant):
        kappa = 1e8
        sigma = kappa_to_sigma(kappa)[0]
        K = 25
        az, el = zip(*(ae_predict(np.tile(self.truth, (K, 1)), a) for a in FOUR_ANCHORS))
        meas = Measurements(np.stack(az, -1), np.stack(el, -1))
        prior = GaussianBelief(self.truth + [0.5, -0.4, 0.3], np.eye(3))
        est = run_filter(make_config(variant, kappa, sigma), self.model, prior, meas, FOUR_ANCHORS, 1)
        assert np.all(np.linalg.norm(est[19:] - self.truth, axis=1) < 0.1)

    @pytest.mark.parametrize("variant", ["pf-vmf", "ukf-ae"])
    def test_determinism(self, variant):
        rng = np.random.default_rng(0)
        meas = Measurements(rng.uniform(-3, 3, (10, 4)), rng.uniform(-1, 1, (10, 4)))
        prior = GaussianBelief(np.zeros(3), np.eye(3))
        a = run_filter(make_config(variant, 30.0, 0.2), self.model, prior, meas, FOUR_ANCHORS, 9)
        b = run_filter(make_config(variant, 30.0, 0.2), self.model, prior, meas, FOUR_ANCHORS, 9)
        assert a.tobytes() == b.tobytes()

    def test_error_carries_epoch(self):
        # the motion model drives the mean onto the anchor at the second epoch
        prior = GaussianBelief(np.array([-1.0, 0, 0]), np.eye(3))
        model = StateSpaceModel(np.stack([np.eye(3), np.zeros((3, 3))]), np.zeros((2, 3, 3)))
        meas = Measurements(np.zeros((2, 1)), np.zeros((2, 1)))
        cfg = FilterConfig("ekf-ae", noise=AeNoiseParams(0.1, 0.1))
        with pytest.raises(FilterError) as info:
            run_filter(cfg, model, prior, meas, [ORIGIN], 0)
        assert info.value.epoch == 2
        assert str(info.value).startswith("epoch 2")

    def test_covariance_stays_valid(self, rng):
        b = GaussianBelief(np.zeros(3), np.eye(3))
        anchors = FOUR_ANCHORS
        for k in range(30):
            b = predict(b, np.eye(3), 0.01 * np.eye(3))
            m = Measurements(rng.uniform(-np.pi, np.pi, 4), rng.uniform(-1, 1, 4))
            for upd in (lambda b: ekf_update_vmf(b, m, anchors, 131.0),
                        lambda b: ukf_update_vmf(b, m, anchors, 131.0),
                        lambda b: ekf_update_ae(b, m, anchors, AeNoiseParams(0.1, 0.1)),
                        lambda b: ukf_update_ae(b, m, anchors, AeNoiseParams(0.1, 0.1))):
                assert_valid_cov(upd(b).cov)
            b = ukf_update_vmf(b, m, anchors, 131.0)

    def test_equatorial_pf_agreement(self):
        # all elevations near zero and small noise: PF-AE and PF-VMF behave alike
        rng = np.random.default_rng(21)
        anchors = [Anchor(np.array(p)) for p in ([-4.0, -4, 0], [9, -4, 0], [9, 9, 0], [-4, 9, 0])]
        kappa = 400.0
        sigma = kappa_to_sigma(kappa)[0]
        K, reps = 40, 8
        model = StateSpaceModel(np.eye(3), np.diag([0.05, 0.05, 1e-4]))
        err = {"pf-ae": [], "pf-vmf": []}
        for r in range(reps):
            steps = rng.normal(0, np.sqrt([0.05, 0.05, 1e-4]), (K, 3))
            track = np.cumsum(steps, axis=0) + [2.5, 2.5, 0]
            az, el = zip(*(ae_predict(track, a) for a in anchors))
            noise = rng.normal(0, sigma, (2, K, 4))
            meas = Measurements(wrap_angle(np.stack(az, -1) + noise[0]), np.stack(el, -1) + noise[1])
            prior = GaussianBelief(track[0], 0.1 * np.eye(3))
            for v in err:
                est = run_filter(make_config(v, kappa, sigma), model, prior, meas, anchors, r)
                err[v].append(np.sqrt(np.mean(np.sum((est - track) ** 2, axis=1))))
        ratio = np.mean(err["pf-ae"]) / np.mean(err["pf-vmf"])
        assert abs(ratio - 1) < 0.1


class TestConfig:
    def test_unknown_variant(self):
        with pytest.raises(ValueError, match="choose from"):
            FilterConfig("kf-vmf", kappa=1.0)

    def test_missing_parameters(self):
        with pytest.raises(ValueError):
            FilterConfig("pf-vmf")
        with pytest.raises(ValueError):
            FilterConfig("ekf-ae-adaptive", noise=AeNoiseParams(0.1, 0.1))

    def test_too_few_particles(self):
        with pytest.raises(ValueError):
            FilterConfig("pf-vmf", kappa=1.0, n_particles=5)
