import numpy as np
import pytest

from grip.errors import DegenerateError, InfeasibleError, ParameterError
from grip.estimators import (
    FEASIBILITY_TOL,
    GripData,
    TuningParams,
    constraint_violations,
    fit_gamma,
    fit_theta,
    is_feasible,
    l1_constrained_lp,
    select_tuning,
)
from grip.experiments import ExperimentConfig, simulate_replication
from grip.synthdata import stream

from oracles import grid_oracle, random_instance, vertex_oracle


def tuning_for(d, eta=0.5, etabar=0.5, mu=5.0, lam=0.95):
    return TuningParams(eta, etabar, mu, np.full(d, eta), np.full(d, etabar), np.full(d, mu), lam)


class TestKernel:
    def test_one_dimensional_example(self):
        xi = l1_constrained_lp(np.ones((4, 1)), np.full(4, 2.0), 0.5, 0.5, 5.0)
        assert xi[0] == pytest.approx(1.5, abs=1e-8)

    def test_zero_response_is_infeasible(self):
        with pytest.raises(InfeasibleError) as err:
            l1_constrained_lp(np.ones((4, 1)), np.zeros(4), 0.5, 0.5, 5.0)
        assert err.value.families == ("inner_product",)

    def test_names_gradient_family(self):
        # gradient pins xi to [1.8, 2.2], inner product needs xi <= 1.75
        with pytest.raises(InfeasibleError) as err:
            l1_constrained_lp(np.ones((4, 1)), np.full(4, 2.0), 0.2, 0.5, 5.0)
        assert "gradient" in err.value.families

    def test_zero_column_rejected(self):
        A = np.ones((4, 2))
        A[:, 1] = 0
        with pytest.raises(DegenerateError):
            l1_constrained_lp(A, np.ones(4), 0.5, 0.1, 5.0)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_oracles(self, seed):
        A, g, eta, etabar, mu, xi0 = random_instance(np.random.default_rng(seed))
        xi = l1_constrained_lp(A, g, eta, etabar, mu)
        obj = np.abs(xi).sum()
        assert obj == pytest.approx(vertex_oracle(A, g, eta, etabar, mu), abs=1e-7)
        box = min(np.abs(xi0).sum(), 10.0)
        assert abs(obj - grid_oracle(A, g, eta, etabar, mu, lo=-box, hi=box)) <= 2e-3
        assert max(constraint_violations(A, g, xi, eta, etabar, mu).values()) <= FEASIBILITY_TOL
        assert obj <= np.abs(xi0).sum() + 2e-6


@pytest.fixture(scope="module")
def model1_sample():
    config = ExperimentConfig(model="M1", n=100, p=60, sparsity_grid=(4,), test_set=(4, 5), seed=11)
    ds, data = simulate_replication(config, 4, 0)
    return ds, data


class TestFits:
    def test_gamma_invariants(self, model1_sample):
        ds, data = model1_sample
        beta0 = ds.beta_star[ds.test_indices - 1]
        tuning = select_tuning(data, beta0, rng=stream(1))
        fit = fit_gamma(data, beta0, tuning)
        g = data.null_response(beta0)
        np.testing.assert_allclose(fit.residuals, g - data.x @ fit.gamma_hat, atol=1e-12)
        assert fit.sigma_eps_hat**2 == pytest.approx(fit.residuals @ fit.residuals / data.n, abs=1e-10)
        assert fit.max_violation <= FEASIBILITY_TOL
        assert fit.objective == pytest.approx(np.abs(fit.gamma_hat).sum())

    def test_gamma_l1_dominance_over_truth(self, model1_sample):
        ds, data = model1_sample
        beta0 = ds.beta_star[ds.test_indices - 1]
        gamma_star = ds.beta_star[ds.control_indices - 1]
        tuning = select_tuning(data, beta0, lambda_gamma=0.995, rng=stream(1))
        g = data.null_response(beta0)
        assert is_feasible(data.x, g, gamma_star, tuning.eta_gamma, tuning.etabar_gamma, tuning.mu_gamma)["all"]
        fit = fit_gamma(data, beta0, tuning)
        assert fit.objective <= np.abs(gamma_star).sum() + 2e-6

    def test_theta_invariants_and_variance_floor(self, model1_sample):
        _, data = model1_sample
        tuning = select_tuning(data, np.zeros(data.d), rng=stream(2))
        fit = fit_theta(data, tuning)
        np.testing.assert_allclose(fit.u_hat, data.z - data.x @ fit.theta_hat, atol=1e-12)
        np.testing.assert_allclose(fit.sigma_u_hat**2, (fit.u_hat**2).mean(axis=0), atol=1e-10)
        assert fit.max_violation <= FEASIBILITY_TOL
        zz = (data.z**2).mean(axis=0)
        lower = tuning.etabar_theta**2 / zz
        assert np.all((fit.u_hat**2).mean(axis=0) >= lower - 1e-9)

    def test_theta_column_independence(self, model1_sample):
        _, data = model1_sample
        tuning = select_tuning(data, np.zeros(data.d), rng=stream(2))
        base = fit_theta(data, tuning)
        rng = np.random.default_rng(0)
        z2 = data.z.copy()
        z2[:, 1] += rng.standard_normal(data.n)
        perturbed = GripData(data.y, z2, data.x)
        other = fit_theta(perturbed, tuning)
        np.testing.assert_allclose(other.theta_hat[:, 0], base.theta_hat[:, 0], atol=1e-12)
        swapped = GripData(data.y, data.z[:, ::-1], data.x)
        t_sw = TuningParams(
            tuning.eta_gamma, tuning.etabar_gamma, tuning.mu_gamma,
            tuning.eta_theta[::-1], tuning.etabar_theta[::-1], tuning.mu_theta[::-1],
        )
        sw = fit_theta(swapped, t_sw)
        np.testing.assert_allclose(sw.objective[::-1], base.objective, atol=1e-9)

    def test_orthogonal_column_gives_zero_projection(self):
        rng = np.random.default_rng(4)
        n = 40
        x = rng.standard_normal((n, 5))
        z = rng.standard_normal(n)
        z -= x @ np.linalg.lstsq(x, z, rcond=None)[0]
        data = GripData(rng.standard_normal(n), z[:, None], x)
        zz = z @ z / n
        tuning = TuningParams(0.1, 0.1, 5.0, [0.1], [zz], [np.abs(z).max()])
        fit = fit_theta(data, tuning)
        assert fit.objective[0] < 1e-9
        assert fit.sigma_u_hat[0] ** 2 == pytest.approx(zz, rel=1e-8)

    @pytest.mark.parametrize("seed", range(4))
    def test_small_fits_match_vertex_oracle(self, seed):
        rng = np.random.default_rng(100 + seed)
        A, g, eta, etabar, mu, _ = random_instance(rng)
        data = GripData(g, rng.standard_normal((g.size, 1)), A)
        tuning = TuningParams(eta, etabar, mu, [eta], [1e-3], [1e3])
        gfit = fit_gamma(data, [0.0], tuning)
        assert gfit.objective == pytest.approx(vertex_oracle(A, g, eta, etabar, mu), abs=1e-7)
        zj = data.z[:, 0]
        tfit = fit_theta(data, tuning)
        assert tfit.objective[0] == pytest.approx(vertex_oracle(A, zj, eta, 1e-3, 1e3), abs=1e-7)


class TestInfeasibility:
    def data(self):
        return GripData(np.full(4, 2.0), np.arange(4.0)[:, None], np.ones((4, 1)))

    def test_gamma_diagnostic(self):
        with pytest.raises(InfeasibleError, match="gamma-LP infeasible"):
            fit_gamma(self.data(), [0.0], tuning_for(1, eta=0.2))

    def test_auto_relax_recovers(self):
        fit = fit_gamma(self.data(), [0.0], tuning_for(1, eta=0.2), auto_relax=True)
        assert fit.relax_rounds == 1
        assert fit.gamma_hat[0] == pytest.approx(1.7, abs=1e-8)

    def test_theta_reports_column(self):
        data = GripData(np.ones(4), np.column_stack([np.full(4, 2.0), np.full(4, 2.0)]), np.ones((4, 1)))
        tuning = TuningParams(0.5, 0.5, 5.0, [0.5, 0.2], [0.5, 0.5], [5.0, 5.0])
        with pytest.raises(InfeasibleError) as err:
            fit_theta(data, tuning)
        assert err.value.column == 1


class TestTuning:
    def test_matches_direct_re_evaluation(self, model1_sample):
        ds, data = model1_sample
        beta0 = ds.beta_star[ds.test_indices - 1]
        tuning = select_tuning(data, beta0, lambda_gamma=0.95, R=30, rng=stream(8))
        xi = stream(8).standard_normal((data.n, 30))
        eta = max(abs(data.x[:, j] @ xi[:, r]) / data.n for j in range(data.x.shape[1]) for r in range(30))
        # same maximizer; the sums differ only by summation order
        assert tuning.eta_gamma == pytest.approx(eta, rel=1e-14, abs=0)
        assert np.all(tuning.eta_theta == tuning.eta_gamma)
        assert tuning.mu_gamma == np.abs(xi).max()
        g = data.y - data.z @ beta0
        assert tuning.etabar_gamma == pytest.approx(0.05 * g @ g / data.n, rel=1e-12)
        np.testing.assert_allclose(tuning.etabar_theta, 0.05 * (data.z**2).sum(axis=0) / data.n, rtol=1e-12)

    def test_default_lambda(self, model1_sample):
        _, data = model1_sample
        assert select_tuning(data, np.zeros(data.d), rng=stream(0)).lambda_gamma == 0.95

    @pytest.mark.parametrize("lam", [1.0, 0.0, 1.5])
    def test_lambda_boundary_is_an_error(self, model1_sample, lam):
        _, data = model1_sample
        with pytest.raises(ParameterError):
            select_tuning(data, np.zeros(data.d), lambda_gamma=lam, rng=stream(0))

    def test_degenerate_null_response(self):
        z = np.arange(1.0, 6.0)[:, None]
        data = GripData(2 * z[:, 0], z, np.ones((5, 1)))
        with pytest.raises(DegenerateError, match="degenerate residual"):
            select_tuning(data, [2.0], rng=stream(0))

    def test_relaxed_scales_eta_and_mu_only(self):
        t = tuning_for(2).relaxed(2)
        assert t.eta_gamma == pytest.approx(0.5 * 2.25)
        assert t.mu_gamma == pytest.approx(5 * 2.25)
        assert t.etabar_gamma == 0.5
        np.testing.assert_allclose(t.eta_theta, 0.5 * 2.25)


@pytest.mark.parametrize(
    "kwargs",
    [dict(eta=-1.0), dict(etabar=0.0), dict(mu=0.0)],
)
def test_tuning_invariants(kwargs):
    with pytest.raises(ParameterError):
        tuning_for(1, **kwargs)


def test_data_shape_checks():
    with pytest.raises(ParameterError):
        GripData(np.ones(3), np.ones((4, 1)), np.ones((3, 2)))
    with pytest.raises(ParameterError):
        GripData(np.array([1.0, np.nan]), np.ones((2, 1)), np.ones((2, 1)))
