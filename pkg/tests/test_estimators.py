import numpy as np
import pytest
from scipy import optimize

from synthpanel import (
    FitConfig,
    PanelData,
    SimConfig,
    UsageError,
    estimate_effect,
    fit,
    predict_counterfactual,
    project_to_simplex,
    simulate_panel,
)
from synthpanel.estimators import fit_result_to_json
from synthpanel.evaluation import derive_seed
from synthpanel.panel import AuxMatrix

from conftest import make_random_panel

SIMPLEX = FitConfig(regularizer="simplex", tolerance=1e-14)


def simplex_grid(n_donors: int, step: int = 100) -> np.ndarray:
    """All weight vectors with entries i/step summing to 1 (stars and bars)."""
    if n_donors == 1:
        return np.array([[step]], dtype=np.int32)
    blocks = []
    for first in range(step + 1):
        rest = simplex_grid(n_donors - 1, step - first)
        head = np.full((rest.shape[0], 1), first, dtype=np.int32)
        blocks.append(np.hstack([head, rest]))
    return np.vstack(blocks)


_GRID_CACHE: dict = {}


def grid_minimum(a: np.ndarray, y: np.ndarray, step: int = 100, chunk: int = 500_000) -> float:
    """Brute-force minimum of ||a @ b - y||^2 over the simplex grid."""
    key = (a.shape[1], step)
    if key not in _GRID_CACHE:
        _GRID_CACHE[key] = simplex_grid(a.shape[1], step).astype(np.float64) / step
    grid = _GRID_CACHE[key]
    best = np.inf
    for start in range(0, grid.shape[0], chunk):
        part = grid[start : start + chunk]
        resid = part @ a.T - y
        best = min(best, float((resid * resid).sum(axis=1).min()))
    return best


class TestProjection:
    def test_already_feasible(self):
        v = np.array([0.2, 0.3, 0.5])
        assert np.allclose(project_to_simplex(v), v)

    def test_known_projection(self):
        # Projection of (1, 0.5) onto the simplex: shift both by theta=0.25.
        assert np.allclose(project_to_simplex(np.array([1.0, 0.5])), [0.75, 0.25])

    def test_random_feasibility_and_optimality(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            v = rng.normal(0, 3, rng.integers(1, 8))
            p = project_to_simplex(v)
            assert p.min() >= 0.0
            assert abs(p.sum() - 1.0) < 1e-9
            # No feasible point from a random probe set is closer to v.
            probes = np.abs(rng.normal(0, 1, (50, v.size)))
            probes /= probes.sum(axis=1, keepdims=True)
            d_p = ((p - v) ** 2).sum()
            d_q = ((probes - v) ** 2).sum(axis=1).min()
            assert d_p <= d_q + 1e-12


class TestSimplexFit:
    def test_exact_match_donor(self, toy_panel):
        outcomes = toy_panel.outcomes.copy()
        outcomes[1, :4] = outcomes[0, :4]
        panel = PanelData(outcomes, toy_panel.group_labels, toy_panel.time_labels, 0, 4)
        w = fit(panel, (1, 2, 3), cfg=SIMPLEX)
        assert np.allclose(w.beta, [1.0, 0.0, 0.0], atol=1e-6)

    def test_midpoint_target(self, toy_panel):
        w = fit(toy_panel, (1, 2), cfg=SIMPLEX)
        assert np.allclose(w.beta, [0.5, 0.5], atol=1e-6)
        assert w.converged

    @pytest.mark.parametrize("n_donors,n_cases", [(2, 6), (5, 2)])
    def test_against_grid_oracle(self, n_donors, n_cases):
        rng = np.random.default_rng(17)
        for _ in range(n_cases):
            a = rng.normal(0, 1, (8, n_donors))
            y = rng.normal(0, 1, 8)
            panel = PanelData(
                np.vstack([y, a.T]),
                tuple(f"g{i}" for i in range(n_donors + 1)),
                tuple(range(1, 9)),
                0,
                intervention_time=7,
            )
            # Refit on all 8 periods by using a panel with T0 covering them.
            padded = PanelData(
                np.hstack([np.vstack([y, a.T]), np.zeros((n_donors + 1, 1))]),
                panel.group_labels,
                tuple(range(1, 10)),
                0,
                intervention_time=8,
            )
            w = fit(padded, tuple(range(1, n_donors + 1)), cfg=SIMPLEX)
            assert w.objective_value <= grid_minimum(a, y) + 1e-3

    def test_against_scipy_slsqp(self):
        rng = np.random.default_rng(5)
        a = rng.normal(0, 1, (10, 4))
        y = rng.normal(0, 1, 10)
        panel = PanelData(
            np.hstack([np.vstack([y, a.T]), np.zeros((5, 1))]),
            ("t", "a", "b", "c", "d"),
            tuple(range(1, 12)),
            0,
            intervention_time=10,
        )
        w = fit(panel, (1, 2, 3, 4), cfg=SIMPLEX)
        res = optimize.minimize(
            lambda b: ((a @ b - y) ** 2).sum(),
            np.full(4, 0.25),
            method="SLSQP",
            bounds=[(0, 1)] * 4,
            constraints=[{"type": "eq", "fun": lambda b: b.sum() - 1}],
        )
        assert w.objective_value <= res.fun + 1e-8

    def test_feasibility_on_random_fits(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            panel = make_random_panel(rng)
            w = fit(panel, panel.donor_indices(), cfg=SIMPLEX)
            assert w.beta.min() >= -1e-12
            assert abs(w.beta.sum() - 1.0) <= 1e-9

    def test_monotone_objective_trace(self):
        rng = np.random.default_rng(23)
        for _ in range(10):
            panel = make_random_panel(rng)
            w = fit(panel, panel.donor_indices(), cfg=SIMPLEX)
            trace = np.array(w.objective_trace)
            assert np.all(np.diff(trace) <= 1e-15)

    def test_duplicate_donor_never_hurts(self):
        rng = np.random.default_rng(31)
        for _ in range(5):
            panel = make_random_panel(rng, n_groups=5)
            base = fit(panel, (1, 2, 3), cfg=SIMPLEX)
            duplicated = PanelData(
                np.vstack([panel.outcomes, panel.outcomes[1]]),
                panel.group_labels + ("dup",),
                panel.time_labels,
                0,
                panel.intervention_time,
            )
            again = fit(duplicated, (1, 2, 3, 5), cfg=SIMPLEX)
            assert again.objective_value <= base.objective_value + 1e-7


class TestClosedFormFits:
    def test_ridge_zero_equals_ols(self, toy_panel):
        ols = fit(toy_panel, (1, 2, 3), cfg=FitConfig())
        ridge = fit(toy_panel, (1, 2, 3), cfg=FitConfig(regularizer="ridge", ridge_lam=0.0))
        assert np.allclose(ols.beta, ridge.beta, atol=1e-9)

    def test_ridge_shrinks(self, toy_panel):
        loose = fit(toy_panel, (1, 2, 3), cfg=FitConfig(regularizer="ridge", ridge_lam=0.01))
        tight = fit(toy_panel, (1, 2, 3), cfg=FitConfig(regularizer="ridge", ridge_lam=100.0))
        assert np.linalg.norm(tight.beta) < np.linalg.norm(loose.beta)

    def test_minimum_norm_on_rank_deficient(self):
        # More donors than pre-periods: solution set is affine; lstsq must
        # return the smallest-norm member (pinv solution).
        rng = np.random.default_rng(2)
        panel = make_random_panel(rng, n_groups=8, n_periods=6, t0=3)
        w = fit(panel, panel.donor_indices(), cfg=FitConfig())
        a = panel.outcomes[1:, :3].T
        y = panel.outcomes[0, :3]
        expected = np.linalg.pinv(a) @ y
        assert np.allclose(w.beta, expected, atol=1e-9)

    def test_scale_equivariance(self):
        rng = np.random.default_rng(7)
        panel = make_random_panel(rng)
        w1 = fit(panel, panel.donor_indices(), cfg=FitConfig())
        scaled = PanelData(
            panel.outcomes * 3.5,
            panel.group_labels,
            panel.time_labels,
            0,
            panel.intervention_time,
        )
        w2 = fit(scaled, scaled.donor_indices(), cfg=FitConfig())
        assert np.allclose(w1.beta, w2.beta, atol=1e-9)
        p1 = predict_counterfactual(w1, panel)
        p2 = predict_counterfactual(w2, scaled)
        assert np.allclose(p2, 3.5 * p1, atol=1e-8)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(9)
        panel = make_random_panel(rng)
        donors = panel.donor_indices()
        w1 = fit(panel, donors, cfg=FitConfig())
        permuted = tuple(reversed(donors))
        w2 = fit(panel, permuted, cfg=FitConfig())
        assert np.allclose(w1.beta, w2.beta[::-1], atol=1e-9)
        assert np.allclose(
            predict_counterfactual(w1, panel), predict_counterfactual(w2, panel), atol=1e-9
        )


class TestElasticNet:
    def test_zero_penalty_matches_ols_objective(self, toy_panel):
        # Coordinate descent converges linearly on exact-fit problems, so
        # match the minimum-zero objective to 1e-6 rather than exactly.
        enet = fit(toy_panel, (1, 2, 3), cfg=FitConfig(regularizer="elastic_net"))
        ols = fit(toy_panel, (1, 2, 3), cfg=FitConfig())
        assert enet.objective_value == pytest.approx(ols.objective_value, abs=1e-6)

    def test_against_scipy(self):
        rng = np.random.default_rng(13)
        a = rng.normal(0, 1, (12, 4))
        y = rng.normal(0, 1, 12)
        lam1, lam2 = 0.3, 0.2
        panel = PanelData(
            np.hstack([np.vstack([y, a.T]), np.zeros((5, 1))]),
            ("t", "a", "b", "c", "d"),
            tuple(range(1, 14)),
            0,
            intervention_time=12,
        )
        cfg = FitConfig(regularizer="elastic_net", enet_lam1=lam1, enet_lam2=lam2)
        w = fit(panel, (1, 2, 3, 4), cfg=cfg)

        def objective(b):
            return ((a @ b - y) ** 2).sum() + lam1 * np.abs(b).sum() + lam2 * (b**2).sum()

        res = optimize.minimize(objective, np.zeros(4), method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000})
        assert w.objective_value <= res.fun + 1e-6

    def test_monotone_trace(self):
        rng = np.random.default_rng(19)
        panel = make_random_panel(rng)
        cfg = FitConfig(regularizer="elastic_net", enet_lam1=0.5, enet_lam2=0.1)
        w = fit(panel, panel.donor_indices(), cfg=cfg)
        assert np.all(np.diff(w.objective_trace) <= 1e-15)
        assert w.converged

    def test_l1_sparsifies(self):
        rng = np.random.default_rng(29)
        panel = make_random_panel(rng, n_groups=7)
        heavy = fit(panel, panel.donor_indices(), cfg=FitConfig(regularizer="elastic_net", enet_lam1=50.0))
        assert np.sum(heavy.beta == 0.0) >= 1


class TestNonConvergence:
    def test_reported_in_band(self):
        rng = np.random.default_rng(41)
        panel = make_random_panel(rng)
        w = fit(panel, panel.donor_indices(), cfg=FitConfig(regularizer="simplex", max_iterations=1, tolerance=1e-16))
        assert not w.converged  # in-band, no exception


class TestPredictAndEffect:
    def test_weighted_combination(self):
        panel = PanelData(
            np.array([[0.0, 0.0], [10.0, 12.0], [20.0, 24.0]]),
            ("t", "a", "b"),
            (1, 2),
            0,
            intervention_time=1,
        )
        from synthpanel.estimators import WeightVector

        w = WeightVector((1, 2), np.array([0.5, 0.5]), 0.0, True, (0.0,))
        assert np.allclose(predict_counterfactual(w, panel), [15.0, 18.0])
        w1 = WeightVector((1,), np.array([1.0]), 0.0, True, (0.0,))
        assert np.allclose(predict_counterfactual(w1, panel), [10.0, 12.0])

    def test_period_out_of_range(self, toy_panel):
        w = fit(toy_panel, (1, 2), cfg=SIMPLEX)
        with pytest.raises(UsageError, match="outside"):
            predict_counterfactual(w, toy_panel, periods=[99])

    def test_tau_is_final_period_gap(self):
        # Observed 82.4 vs synthetic 90.0 at the final period.
        panel = PanelData(
            np.array([[100.0, 82.4], [100.0, 90.0]]),
            ("CA", "synth"),
            (1988, 1989),
            0,
            intervention_time=1,
        )
        from synthpanel.estimators import WeightVector

        w = WeightVector((1,), np.array([1.0]), 0.0, True, (0.0,))
        effect = estimate_effect(w, panel)
        assert effect.tau == pytest.approx(-7.6)
        assert effect.per_period == ((1989, 82.4, 90.0, 82.4 - 90.0),)

    def test_null_effect(self, toy_panel):
        w = fit(toy_panel, (1, 2), cfg=SIMPLEX)
        effect = estimate_effect(w, toy_panel)
        # Target is the exact midpoint everywhere, so all gaps vanish.
        assert all(abs(gap) < 1e-9 for *_, gap in effect.per_period)

    def test_recovers_injected_shift(self):
        # Average tau over replications approximates the true shift within
        # three Monte-Carlo standard errors.
        shift = -1.5
        taus = []
        for r in range(24):
            cfg = SimConfig(
                S_cardinality=3,
                T=16,
                T0=12,
                seed=derive_seed(77, r),
                N_per_group=2000,
                post_intervention_shift=shift,
                covariate_count=0,
            )
            study = simulate_panel(cfg)
            w = fit(study.panel, study.panel.donor_indices(), cfg=FitConfig())
            taus.append(estimate_effect(w, study.panel).tau)
        taus = np.array(taus)
        se = taus.std(ddof=1) / np.sqrt(taus.size)
        assert abs(taus.mean() - shift) <= 3 * se


class TestCovariateStacking:
    def test_zero_scale_matches_outcome_only(self, toy_panel):
        aux = AuxMatrix(
            values=np.arange(8.0).reshape(4, 2),
            covariate_labels=("u", "v"),
        )
        plain = fit(toy_panel, (1, 2, 3), cfg=FitConfig())
        stacked = fit(
            toy_panel,
            (1, 2, 3),
            aux,
            FitConfig(include_covariates=True, covariate_scale=0.0),
        )
        assert np.allclose(plain.beta, stacked.beta, atol=1e-9)

    def test_requires_aux(self, toy_panel):
        with pytest.raises(UsageError, match="AuxMatrix"):
            fit(toy_panel, (1, 2), cfg=FitConfig(include_covariates=True))

    def test_row_count_checked(self, toy_panel):
        aux = AuxMatrix(values=np.ones((2, 1)), covariate_labels=("u",))
        with pytest.raises(UsageError, match="rows"):
            fit(toy_panel, (1, 2), aux, FitConfig(include_covariates=True))


class TestValidation:
    def test_empty_donors(self, toy_panel):
        with pytest.raises(UsageError, match="empty"):
            fit(toy_panel, ())

    def test_target_not_donor(self, toy_panel):
        with pytest.raises(UsageError, match="target"):
            fit(toy_panel, (0, 1))

    def test_bad_regularizer(self):
        with pytest.raises(UsageError):
            FitConfig(regularizer="lasso")

    def test_json_echo(self, toy_panel):
        cfg = FitConfig(regularizer="simplex")
        w = fit(toy_panel, (1, 2), cfg=cfg)
        doc = fit_result_to_json(w, toy_panel, cfg)
        assert doc["donors"] == ["d1", "d2"]
        assert doc["config"]["regularizer"] == "simplex"
        assert doc["converged"] is True
