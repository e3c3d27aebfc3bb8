import numpy as np
import pytest

from hukf.errors import InvalidInput, NumericalFailure
from hukf.filters import (
    HUKF,
    UKF,
    FilterConfig,
    MeasurementPrediction,
    filter_sequence,
    measurement_update_higher,
    measurement_update_linear,
    time_update,
)
from hukf.sde import SeededRng, simulate
from hukf.sigma import GaussianBelief, SigmaKind, unit_sigma_points
from hukf.ssm import EulerGrid, StateSpaceModel, augment_with_parameters, linear_model, ou_model

from oracles import kalman_filter, simulate_linear

A = np.array([[-0.3, 0.2], [-0.1, -0.6]])
G = np.array([[0.5, 0.0], [0.2, 0.4]])
C = np.array([[1.0, 0.5]])
R = np.array([[0.2]])
DT = 0.5

CONFIGS = [
    FilterConfig(UKF, SigmaKind.degree3(0.0)),
    FilterConfig(UKF, SigmaKind.degree3(1.0)),
    FilterConfig(UKF, SigmaKind.degree5()),
]


def linear_case(n=100, seed=0):
    model = linear_model(A, G, C, R)
    F = np.eye(2) + A * DT
    Qd = G @ G.T * DT
    prior = GaussianBelief([1.0, -1.0], [[1.0, 0.3], [0.3, 2.0]])
    zs = simulate_linear(F, Qd, C, R, [0.5, -0.5], n, np.random.default_rng(seed))
    obs = [(i * DT, z) for i, z in enumerate(zs)]
    return model, prior, obs, kalman_filter(F, Qd, C, R, prior.mean, prior.cov, zs)


def ou_case(T=200, seed=5):
    psi = np.array([0.55, 2.8, 2.3])
    traj = simulate(ou_model(), [3.0], np.arange(T + 1.0), EulerGrid(1.0),
                    SeededRng(seed), params=psi)
    aug, belief = augment_with_parameters(
        ou_model(), GaussianBelief([0.5, 3.0, 2.0], 0.1 * np.eye(3)),
        GaussianBelief([3.0], [[1.0]]))
    return aug, belief, traj.observation_pairs()


class TestTimeUpdate:
    def test_null_dynamics_identity_measurement(self):
        m = StateSpaceModel(p=2, r=1, k=2, drift=lambda y, t, _: np.zeros_like(y),
                            diffusion=lambda y, t, _: np.zeros((y.shape[0], 2, 1)),
                            measurement=lambda y, t, _: y, meas_noise_cov=np.zeros((2, 2)))
        b = GaussianBelief([1.0, 2.0], [[2.0, 0.4], [0.4, 1.0]])
        for cfg in CONFIGS:
            prior, pred = time_update(b, m, EulerGrid(1.0), cfg)
            np.testing.assert_allclose(prior.mean, b.mean, atol=1e-12)
            np.testing.assert_allclose(prior.cov, b.cov, atol=1e-9)
            np.testing.assert_allclose(pred.h_pred, b.mean, atol=1e-12)
            np.testing.assert_allclose(pred.h_var, b.cov, atol=1e-9)

    @pytest.mark.parametrize("cfg", CONFIGS + [FilterConfig(HUKF)])
    def test_ou_mean_drift(self, cfg):
        aug, _ = augment_with_parameters(ou_model(), GaussianBelief(np.zeros(3), np.eye(3)),
                                         GaussianBelief([0.0], [[1.0]]))
        b = GaussianBelief([1.0, 0.5, 3.0, 2.0], np.diag([0.3, 0.1, 0.1, 0.1]))
        prior, _ = time_update(b, aug, EulerGrid(1.0), cfg)
        assert abs(prior.mean[0] - 2.0) < 1e-9
        np.testing.assert_allclose(prior.mean[1:], [0.5, 3.0, 2.0], atol=1e-12)

    @pytest.mark.parametrize("cfg", CONFIGS + [FilterConfig(HUKF)])
    def test_linear_moments_match_lyapunov(self, cfg):
        model = linear_model(A, G, C, R)
        b = GaussianBelief([1.0, -2.0], [[1.0, 0.3], [0.3, 0.5]])
        prior, pred = time_update(b, model, EulerGrid(DT), cfg)
        F = np.eye(2) + A * DT
        P = F @ b.cov @ F.T + G @ G.T * DT
        np.testing.assert_allclose(prior.mean, F @ b.mean, atol=1e-8)
        np.testing.assert_allclose(prior.cov, P, atol=1e-8)
        np.testing.assert_allclose(pred.h_pred, C @ F @ b.mean, atol=1e-8)
        np.testing.assert_allclose(pred.h_var, C @ P @ C.T, atol=1e-8)
        np.testing.assert_allclose(pred.xy_h_cov, P @ C.T, atol=1e-8)
        np.testing.assert_allclose(pred.nu2_pred, np.diag(C @ P @ C.T + R), atol=1e-8)

    @pytest.mark.parametrize("cfg", CONFIGS + [FilterConfig(HUKF)])
    def test_volatility_uncorrelated_with_prediction(self, cfg):
        aug, b = augment_with_parameters(ou_model(), GaussianBelief([0.5, 3.0, 2.0], 0.1 * np.eye(3)),
                                         GaussianBelief([1.0], [[0.5]]))
        _, pred = time_update(b, aug, EulerGrid(1.0), cfg)
        assert abs(pred.xy_h_cov[3, 0]) < 1e-12
        if cfg.sigma_kind.name == "degree5":
            # exact Gaussian value: E[(s - sbar) s^2 w^2] = 2 sbar var(s)
            assert pred.xy_nu2_cov[3, 0] == pytest.approx(2 * 2.0 * 0.1, rel=1e-9)

    def test_literal_variance_of_squared_innovation(self):
        model = linear_model(A, G, C, R)
        b = GaussianBelief([1.0, -2.0], [[1.0, 0.3], [0.3, 0.5]])
        _, corrected = time_update(b, model, EulerGrid(DT), FilterConfig(HUKF))
        _, literal = time_update(b, model, EulerGrid(DT), FilterConfig(HUKF, nu2var_literal=True))
        vh, r = corrected.h_var[0, 0], R[0, 0]
        assert literal.nu2_var[0, 0] == pytest.approx(2 * vh ** 2, rel=1e-9)
        # nu ~ N(0, vh + r) => Var[nu^2] = 2 (vh + r)^2
        assert corrected.nu2_var[0, 0] == pytest.approx(2 * (vh + r) ** 2, rel=1e-9)


def _scalar_pred(xy_h=1.0, xy_nu2=0.0, h_var=1.0, r=1.0, nu2_var=2.0):
    return MeasurementPrediction(
        h_pred=np.array([0.0]), h_var=np.array([[h_var]]), xy_h_cov=np.array([[xy_h]]),
        nu2_pred=np.array([h_var + r]), nu2_var=np.array([[nu2_var]]),
        xy_nu2_cov=np.array([[xy_nu2]]))


class TestLinearUpdate:
    def test_scalar_normal_correlation(self):
        prior = GaussianBelief([0.0], [[1.0]])
        step = measurement_update_linear(prior, _scalar_pred(), [2.0], [[1.0]], FilterConfig())
        assert step.gain1[0, 0] == pytest.approx(0.5)
        assert step.posterior.mean[0] == pytest.approx(1.0)
        assert step.posterior.cov[0, 0] == pytest.approx(0.5)
        assert np.all(step.gain2 == 0)
        assert step.log_density == pytest.approx(-0.5 * (np.log(2 * np.pi * 2.0) + 4.0 / 2.0))

    def test_zero_innovation(self):
        prior = GaussianBelief([0.0], [[1.0]])
        step = measurement_update_linear(prior, _scalar_pred(), [0.0], [[1.0]], FilterConfig())
        assert step.posterior.mean[0] == 0.0
        assert step.posterior.cov[0, 0] == pytest.approx(0.5)

    def test_uncorrelated_state_untouched(self):
        prior = GaussianBelief([0.0, 7.0], np.diag([1.0, 3.0]))
        pred = MeasurementPrediction(
            h_pred=np.array([0.0]), h_var=np.array([[1.0]]), xy_h_cov=np.array([[1.0], [0.0]]),
            nu2_pred=np.array([2.0]), nu2_var=np.array([[8.0]]), xy_nu2_cov=np.zeros((2, 1)))
        step = measurement_update_linear(prior, pred, [3.0], [[1.0]], FilterConfig())
        assert step.posterior.mean[1] == 7.0
        assert step.posterior.cov[1, 1] == 3.0

    def test_rejects_wrong_observation(self):
        prior = GaussianBelief([0.0], [[1.0]])
        with pytest.raises(InvalidInput):
            measurement_update_linear(prior, _scalar_pred(), [1.0, 2.0], [[1.0]], FilterConfig())


class TestHigherUpdate:
    def test_reduces_to_linear_without_quadratic_correlation(self):
        prior = GaussianBelief([0.3], [[1.0]])
        pred = _scalar_pred(xy_nu2=0.0)
        a = measurement_update_linear(prior, pred, [1.7], [[1.0]], FilterConfig())
        b = measurement_update_higher(prior, pred, [1.7], [[1.0]], FilterConfig(HUKF))
        np.testing.assert_array_equal(a.posterior.mean, b.posterior.mean)
        np.testing.assert_array_equal(a.posterior.cov, b.posterior.cov)
        np.testing.assert_array_equal(b.gain2, 0.0)

    def test_zero_quadratic_variance_gives_zero_gain(self):
        prior = GaussianBelief([0.3], [[1.0]])
        pred = _scalar_pred(xy_nu2=0.5, nu2_var=0.0)
        step = measurement_update_higher(prior, pred, [1.7], [[1.0]], FilterConfig(HUKF))
        assert step.gain2[0, 0] == 0.0

    def test_fixed_point(self):
        prior = GaussianBelief([0.3, -1.0], [[1.0, 0.2], [0.2, 0.5]])
        pred = MeasurementPrediction(
            h_pred=np.array([1.0]), h_var=np.array([[0.0]]), xy_h_cov=np.array([[0.0], [0.0]]),
            nu2_pred=np.array([0.0]), nu2_var=np.array([[1.0]]),
            xy_nu2_cov=np.array([[0.3], [0.1]]))
        step = measurement_update_higher(prior, pred, [1.0], [[0.0]], FilterConfig(HUKF))
        np.testing.assert_array_equal(step.posterior.mean, prior.mean)

    def test_linear_gaussian_quadratic_gain_vanishes_by_symmetry(self):
        model = linear_model(A, G, C, R)
        b = GaussianBelief([1.0, -2.0], [[1.0, 0.3], [0.3, 0.5]])
        cfg = FilterConfig(HUKF)
        _, pred = time_update(b, model, EulerGrid(DT), cfg)
        # brute force: each point x has a partner -x; cubic terms cancel pairwise
        unit, w = unit_sigma_points(4, SigmaKind.degree5())
        L = np.linalg.cholesky(np.block([[b.cov, np.zeros((2, 2))], [np.zeros((2, 2)), np.eye(2)]]))
        F = np.eye(2) + A * DT
        dev = unit @ L.T
        dy = dev[:, :2] @ F.T + dev[:, 2:] @ G.T * np.sqrt(DT)
        dh = dy @ C.T
        brute = (dy.T * w) @ (dh ** 2 - (w @ dh ** 2))
        assert np.abs(brute).max() < 1e-12
        assert np.abs(pred.xy_nu2_cov).max() < 1e-12
        step = measurement_update_higher(b, pred, [0.4], R, cfg)
        assert np.abs(step.gain2).max() < 1e-10

    def test_volatility_toy(self):
        # y1 has no drift and is known to be 0; y2 = sigma scales the only noise: z = sigma * eps
        m = StateSpaceModel(
            p=2, r=1, k=1, drift=lambda y, t, _: np.zeros_like(y),
            diffusion=lambda y, t, _: np.stack([y[:, 1], np.zeros(len(y))], axis=1)[:, :, None],
            measurement=lambda y, t, _: y[:, :1])
        v = 0.1
        b = GaussianBelief([0.0, 2.0], np.diag([0.0, v]))
        cfg = FilterConfig(HUKF)
        prior, pred = time_update(b, m, EulerGrid(1.0), cfg)
        assert pred.h_var[0, 0] == pytest.approx(4.0 + v, rel=1e-9)  # E[sigma^2]
        assert pred.xy_nu2_cov[1, 0] == pytest.approx(2 * 2.0 * v, rel=1e-9)
        k2 = pred.xy_nu2_cov[1, 0] / pred.nu2_var[0, 0]
        assert k2 > 0
        zs = [0.0, 0.5, 1.0, 2.0, 3.0, 5.0]
        means = [measurement_update_higher(prior, pred, [z], [[0.0]], cfg).posterior.mean[1]
                 for z in zs]
        assert np.all(np.diff(means) > 0)
        assert means[0] < 2.0 < means[-1]
        expected = [2.0 + k2 * (z * z - pred.nu2_pred[0]) for z in zs]
        np.testing.assert_allclose(means, expected, rtol=1e-12)


class TestFilterSequence:
    def test_empty(self):
        model, prior, _, _ = linear_case(1)
        res = filter_sequence(model, prior, [], FilterConfig())
        assert res.steps == [] and res.log_likelihood == 0.0 and res.posterior is prior

    @pytest.mark.parametrize("cfg", CONFIGS + [FilterConfig(HUKF)])
    def test_matches_kalman(self, cfg):
        model, prior, obs, (means, covs) = linear_case()
        res = filter_sequence(model, prior, obs, cfg)
        assert len(res.steps) == len(obs)
        for step, m, P in zip(res.steps, means, covs):
            assert np.abs(step.posterior.mean - m).max() < 1e-8
            assert np.abs(step.posterior.cov - P).max() < 1e-8

    def test_log_likelihood_matches_kalman_innovations(self):
        model, prior, obs, _ = linear_case(30, seed=3)
        F = np.eye(2) + A * DT
        Qd = G @ G.T * DT
        m, P, ll = prior.mean, prior.cov, 0.0
        for i, (_, z) in enumerate(obs):
            if i:
                m, P = F @ m, F @ P @ F.T + Qd
            S = C @ P @ C.T + R
            nu = z - C @ m
            ll += -0.5 * (np.log(2 * np.pi * S[0, 0]) + nu[0] ** 2 / S[0, 0])
            K = P @ C.T / S[0, 0]
            m, P = m + K @ nu, P - K @ S @ K.T
        res = filter_sequence(model, prior, obs, FilterConfig())
        assert res.log_likelihood == pytest.approx(ll, rel=1e-10)

    def test_gain_consistency(self):
        model, prior, obs, _ = linear_case(20)
        res = filter_sequence(model, prior, obs, FilterConfig(HUKF))
        cfg = FilterConfig(HUKF)
        belief = res.steps[5].posterior
        _, pred = time_update(belief, model, EulerGrid(DT), cfg)
        step = measurement_update_higher(belief, pred, [0.1], R, cfg)
        np.testing.assert_allclose(step.gain1 @ (pred.h_var + R), pred.xy_h_cov, atol=1e-12)

    def test_requires_increasing_times(self):
        model, prior, obs, _ = linear_case(3)
        with pytest.raises(InvalidInput):
            filter_sequence(model, prior, [obs[0], obs[2], obs[1]], FilterConfig())

    def test_ukf_never_moves_volatility(self):
        aug, belief, obs = ou_case()
        for cfg in CONFIGS:
            res = filter_sequence(aug, belief, obs, cfg)
            for step in res.steps:
                assert abs(step.posterior.mean[3] - 2.0) < 1e-9
                assert abs(step.posterior.cov[3, 3] - 0.1) < 1e-9

    def test_hukf_learns_volatility(self):
        aug, belief, obs = ou_case()
        res = filter_sequence(aug, belief, obs, FilterConfig(HUKF))
        assert res.posterior.cov[3, 3] < 0.1
        assert res.posterior.cov[3, 3] < 0.03
        assert np.isfinite(res.log_likelihood)

    def test_posteriors_symmetric_psd(self):
        aug, belief, obs = ou_case(60)
        for cfg in (FilterConfig(UKF), FilterConfig(HUKF)):
            for step in filter_sequence(aug, belief, obs, cfg).steps:
                cov = step.posterior.cov
                np.testing.assert_array_equal(cov, cov.T)
                assert np.linalg.eigvalsh(cov).min() >= -1e-10
                assert np.isfinite(step.log_density)


def test_config_validation():
    with pytest.raises(InvalidInput):
        FilterConfig(HUKF, SigmaKind.degree3(0.0))
    with pytest.raises(InvalidInput):
        FilterConfig("ekf")
    assert FilterConfig(HUKF).sigma_kind == SigmaKind.degree5()
    assert FilterConfig(UKF).sigma_kind == SigmaKind.degree3(0.0)


def test_explosive_path_fails_numerically():
    psi = [-0.4, 3.0, 2.0]
    traj = simulate(ou_model(), [3.0], np.arange(2001.0), None, SeededRng(2), params=psi)
    aug, belief = augment_with_parameters(
        ou_model(), GaussianBelief(psi, 0.1 * np.eye(3)), GaussianBelief([3.0], [[1.0]]))
    with pytest.raises(NumericalFailure) as info:
        filter_sequence(aug, belief, traj.head(800).observation_pairs(), FilterConfig(HUKF))
    assert info.value.step is not None and info.value.step > 10
