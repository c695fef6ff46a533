import numpy as np
import pytest

from stylediff.numerics import Rng, gaussian
from stylediff.schedule import (NoiseSchedule, forward_sample, make_linear_schedule,
                                posterior_mean, posterior_variance,
                                predict_x0_from_eps)

# direct cumulative-product oracle (scratch script), T=30 ramp [1e-4, 0.02]
ALPHA_BAR_30 = 0.738181734049370


@pytest.fixture
def sched():
    return make_linear_schedule(30)


class TestConstruction:
    def test_default_T30(self, sched):
        assert sched.T == 30
        assert sched.alpha_bar[-1] == pytest.approx(ALPHA_BAR_30, abs=1e-12)

    def test_single_step_boundary(self):
        s = make_linear_schedule(1, 0.02, 0.02)
        assert s.alpha_bar[0] == pytest.approx(0.98)
        # alpha_bar_0 = 1 forces zero posterior variance at t=1
        assert s.beta_tilde[0] == 0.0

    def test_invariants(self, sched):
        assert np.all(np.diff(sched.alpha_bar) < 0)  # strictly decreasing
        assert sched.beta_tilde[0] == 0.0
        assert np.all(sched.beta_tilde <= sched.beta + 1e-15)
        assert np.all(sched.beta_tilde[1:] > 0)
        assert np.all((0 < sched.beta) & (sched.beta < 1))

    def test_bounds_rejected(self):
        with pytest.raises(ValueError):
            make_linear_schedule(0)
        with pytest.raises(ValueError):
            make_linear_schedule(10, 0.0, 0.02)
        with pytest.raises(ValueError):
            make_linear_schedule(10, 0.03, 0.02)
        with pytest.raises(ValueError):
            NoiseSchedule(np.array([0.1, 1.0]))


class TestForwardSample:
    def test_noiseless_branch(self, sched):
        x0 = gaussian(Rng(1), (3, 4))
        got = forward_sample(x0, 7, np.zeros_like(x0), sched)
        assert np.allclose(got, np.sqrt(sched.alpha_bar[6]) * x0, atol=1e-15)

    def test_near_identity_schedule(self):
        # beta ~ 0 (the hypothetical alpha_bar = 1 case): x0 passes through
        s = make_linear_schedule(5, 1e-12, 1e-12)
        x0 = gaussian(Rng(2), (8,))
        eps = gaussian(Rng(3), (8,))
        assert np.allclose(forward_sample(x0, 5, eps, s), x0, atol=1e-5)

    def test_t_out_of_range(self, sched):
        x = np.zeros((2, 2))
        for t in (0, 31):
            with pytest.raises(ValueError):
                forward_sample(x, t, x, sched)

    def test_marginal_matches_iterated_chain(self, sched):
        # Monte Carlo oracle: iterating the one-step kernel t times must
        # reproduce the closed-form marginal, 1e4 trials, scalar x0 = 1
        n, t = 10_000, 12
        rng = Rng(2024)
        x = np.ones(n)
        for step in range(1, t + 1):
            b = sched.beta[step - 1]
            x = np.sqrt(1.0 - b) * x + np.sqrt(b) * gaussian(rng, (n,))
        ab = sched.alpha_bar[t - 1]
        se_mean = np.sqrt((1 - ab) / n)
        assert abs(x.mean() - np.sqrt(ab)) < 3 * se_mean
        var = x.var(ddof=1)
        se_var = (1 - ab) * np.sqrt(2.0 / (n - 1))
        assert abs(var - (1 - ab)) < 3 * se_var


class TestPosterior:
    def test_zero_inputs(self, sched):
        z = np.zeros((2, 3))
        assert np.all(posterior_mean(z, z, 5, sched) == 0.0)

    def test_t1_collapses_to_x0(self, sched):
        # q(x_0 | x_1, x_0) is a point mass: mean x0 exactly, variance 0
        x0 = gaussian(Rng(4), (4, 4))
        x1 = gaussian(Rng(5), (4, 4))
        assert np.allclose(posterior_mean(x1, x0, 1, sched), x0, atol=1e-12)
        assert posterior_variance(1, sched) == 0.0

    def test_variance_is_beta_tilde(self, sched):
        for t in (2, 17, 30):
            assert posterior_variance(t, sched) == sched.beta_tilde[t - 1]

    def test_coefficient_identity_all_t(self, sched):
        # algebraic oracle: substituting the closed-form x0 recovery into the
        # posterior mean must give the standard per-step mean, for every t
        z = gaussian(Rng(6), (5,))
        eps = gaussian(Rng(7), (5,))
        for t in range(1, sched.T + 1):
            i = t - 1
            x0_hat = predict_x0_from_eps(z, eps, t, sched)
            mu = posterior_mean(z, x0_hat, t, sched)
            direct = (z - (1 - sched.alpha[i]) / np.sqrt(1 - sched.alpha_bar[i]) * eps) \
                / np.sqrt(sched.alpha[i])
            assert np.abs(mu - direct).max() < 1e-9


class TestPredictX0:
    def test_round_trip(self, sched):
        x0 = gaussian(Rng(8), (3, 5))
        eps = gaussian(Rng(9), (3, 5))
        for t in (1, 15, 30):
            z = forward_sample(x0, t, eps, sched)
            assert np.abs(predict_x0_from_eps(z, eps, t, sched) - x0).max() < 1e-9

    def test_zero_eps(self, sched):
        z = gaussian(Rng(10), (4,))
        got = predict_x0_from_eps(z, np.zeros(4), 9, sched)
        assert np.allclose(got, z / np.sqrt(sched.alpha_bar[8]))

    def test_matches_elementwise_linear_solve(self, sched):
        # direct algebra oracle: solve a*x0 = z - b*eps element by element
        z = gaussian(Rng(11), (6,))
        eps = gaussian(Rng(12), (6,))
        t = 21
        a = np.sqrt(sched.alpha_bar[t - 1])
        b = np.sqrt(1 - sched.alpha_bar[t - 1])
        want = np.array([np.linalg.solve([[a]], [zi - b * ei])[0]
                         for zi, ei in zip(z, eps)])
        assert np.allclose(predict_x0_from_eps(z, eps, t, sched), want, atol=1e-12)
