import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hrtfpca import anthro


def normal_equation_oracle(weights, design_no_intercept):
    x = np.column_stack([np.ones(design_no_intercept.shape[0]), design_no_intercept])
    return np.linalg.solve(x.T @ x, x.T @ weights)


class TestRegression:
    def test_exact_linear_relation_recovered(self):
        rng = np.random.default_rng(0)
        params = rng.normal(size=(40, 4))
        weights = (3.5 * params[:, [1]]) + 2.0  # depends on one parameter only
        res = anthro.regress_weights_on_anthro(weights, params)
        assert res.coefficients[2, 0] == pytest.approx(3.5, abs=1e-10)
        assert res.coefficients[0, 0] == pytest.approx(2.0, abs=1e-10)
        assert abs(res.t_statistics[2, 0]) > 1e6  # essentially noise-free
        for row in (1, 3, 4):
            assert res.coefficients[row, 0] == pytest.approx(0.0, abs=1e-10)

    def test_constant_weights_give_zero_coefficients(self):
        rng = np.random.default_rng(1)
        params = rng.normal(size=(30, 5))
        weights = np.full((30, 3), 7.0)
        res = anthro.regress_weights_on_anthro(weights, params)
        np.testing.assert_allclose(res.coefficients[1:], 0.0, atol=1e-10)

    def test_matches_normal_equations(self):
        rng = np.random.default_rng(2)
        params = rng.normal(size=(40, 5))
        weights = rng.normal(size=(40, 3))
        res = anthro.regress_weights_on_anthro(weights, params)
        oracle = normal_equation_oracle(weights, params)
        np.testing.assert_allclose(res.coefficients, oracle, atol=1e-9)

    def test_residuals_orthogonal_to_design(self):
        rng = np.random.default_rng(3)
        params = rng.normal(size=(25, 4))
        weights = rng.normal(size=(25, 2))
        res = anthro.regress_weights_on_anthro(weights, params)
        design = np.column_stack([np.ones(25), params])
        np.testing.assert_allclose(design.T @ res.residuals, 0.0, atol=1e-9)

    def test_rank_deficient_rejected(self):
        rng = np.random.default_rng(4)
        base = rng.normal(size=(20, 1))
        params = np.column_stack([base, 2 * base, rng.normal(size=(20, 1))])
        with pytest.raises(ValueError, match="rank"):
            anthro.regress_weights_on_anthro(rng.normal(size=(20, 2)), params)

    def test_too_few_subjects(self):
        with pytest.raises(ValueError, match="subjects"):
            anthro.regress_weights_on_anthro(np.ones((4, 1)), np.ones((4, 3)))


class TestPearson:
    def test_identical_columns(self):
        rng = np.random.default_rng(5)
        col = rng.normal(size=10)
        r = anthro.pearson_matrix(np.column_stack([col, col]))
        assert r[0, 1] == pytest.approx(1.0)

    def test_negative_scaling_absolute(self):
        rng = np.random.default_rng(6)
        col = rng.normal(size=10)
        r = anthro.pearson_matrix(np.column_stack([col, -2.0 * col]))
        assert r[0, 1] == pytest.approx(1.0)

    def test_hand_computed_zero(self):
        # deviations (-1.5,-0.5,0.5,1.5)x(1,-1,-1,1) sum to exactly zero
        s_i = np.array([1.0, 2.0, 3.0, 4.0])
        s_j = np.array([1.0, -1.0, -1.0, 1.0])
        r = anthro.pearson_matrix(np.column_stack([s_i, s_j]))
        assert abs(r[0, 1]) < 1e-12

    def test_hand_computed_nonzero(self):
        # deviation products sum to -2; |r| = 2 / sqrt(5 * 4)
        s_i = np.array([1.0, 2.0, 3.0, 4.0])
        s_j = np.array([1.0, -1.0, 1.0, -1.0])
        r = anthro.pearson_matrix(np.column_stack([s_i, s_j]))
        assert r[0, 1] == pytest.approx(2.0 / np.sqrt(20.0), abs=1e-12)

    def test_diagonal_excluded(self):
        rng = np.random.default_rng(7)
        r = anthro.pearson_matrix(rng.normal(size=(12, 4)))
        assert np.all(np.isnan(np.diag(r)))
        off = r[~np.eye(4, dtype=bool)]
        assert np.all((off >= 0) & (off <= 1))

    def test_symmetry(self):
        rng = np.random.default_rng(8)
        r = anthro.pearson_matrix(rng.normal(size=(15, 6)))
        np.testing.assert_allclose(r, r.T, equal_nan=True)

    @given(st.floats(min_value=0.1, max_value=50.0), st.floats(-100.0, 100.0))
    @settings(max_examples=30, deadline=None)
    def test_affine_invariance(self, scale, shift):
        rng = np.random.default_rng(9)
        data = rng.normal(size=(20, 3))
        scaled = data.copy()
        scaled[:, 1] = scale * scaled[:, 1] + shift
        r0 = anthro.pearson_matrix(data)
        r1 = anthro.pearson_matrix(scaled)
        np.testing.assert_allclose(r0, r1, atol=1e-9, equal_nan=True)

    def test_zero_variance_rejected(self):
        data = np.column_stack([np.ones(10), np.arange(10.0)])
        with pytest.raises(ValueError, match="zero-variance"):
            anthro.pearson_matrix(data)

    def test_too_few_subjects(self):
        with pytest.raises(ValueError):
            anthro.pearson_matrix(np.ones((2, 5)))


class TestSelectedParameters:
    def test_spectral_set(self):
        sel = anthro.selected_parameters()
        assert sel["spectral"] == ("x1", "x3", "x12", "d1", "d3", "d4", "d5", "d6")
        assert len(sel["spectral"]) == 8

    def test_itd_set(self):
        assert anthro.selected_parameters()["itd"] == ("x1", "x2", "x3")

    def test_x2_excluded_from_spectral(self):
        sel = anthro.selected_parameters()
        assert "x2" not in sel["spectral"]
        assert "x2" in sel["itd"]


class TestSelectionReport:
    def test_driving_parameter_flagged(self, tmp_path):
        rng = np.random.default_rng(10)
        n, p, orders, dirs = 30, 4, 3, 5
        params = rng.normal(size=(n, p))
        weights = np.empty((dirs, n, orders))
        for j in range(dirs):
            noise = rng.normal(scale=0.01, size=(n, orders))
            weights[j] = 4.0 * params[:, [0]] + noise  # param 0 drives everything
        names = ("a", "b", "c", "d")
        report = anthro.build_selection_report(weights, params, names)
        assert report.significance_counts["a"] == dirs
        assert report.significance_counts["b"] < dirs
        assert report.directions_tested == dirs

        anthro.save_report(report, tmp_path)
        payload = json.loads((tmp_path / "report.json").read_text())
        assert payload["significance_counts"]["a"] == dirs
        assert (tmp_path / "pearson.csv").read_text().startswith(",a,b,c,d")
