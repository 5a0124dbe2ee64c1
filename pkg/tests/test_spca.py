import numpy as np
import pytest

from hrtfpca import spca


def svd_oracle(rows, q):
    """Independent route: SVD of the centered matrix instead of eigh of the scatter."""
    rows = np.asarray(rows, dtype=float)
    mean = rows.mean(axis=0)
    centered = rows - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=True)
    eigenvalues = np.zeros(rows.shape[1])
    eigenvalues[: s.size] = s**2
    basis = vt[:q]
    idx = np.argmax(np.abs(basis), axis=1)
    signs = np.sign(basis[np.arange(q), idx])
    signs[signs == 0] = 1
    basis = basis * signs[:, None]
    return mean, basis, eigenvalues, centered @ basis.T


class TestGlobalMean:
    def test_identical_spectra(self):
        v = np.linspace(-3, 9, 200)
        panel = np.tile(v, (4, 2, 7, 1))
        np.testing.assert_allclose(spca.compute_global_mean(panel), v)

    def test_two_flat_spectra(self):
        panel = np.stack([np.zeros(200), np.full(200, 6.0)])
        np.testing.assert_allclose(spca.compute_global_mean(panel), 3.0)

    def test_residual_mean_zero(self):
        rng = np.random.default_rng(0)
        panel = rng.normal(size=(5, 2, 11, 200))
        mu = spca.compute_global_mean(panel)
        resid = (panel - mu).reshape(-1, 200).mean(axis=0)
        np.testing.assert_allclose(resid, 0.0, atol=1e-10)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            spca.compute_global_mean(np.empty((0, 200)))


class TestFit:
    def test_rank_one_exact(self):
        direction_pattern = np.array([1.0, -2.0, 0.5, 3.0])
        scales = np.array([[2.0], [-1.0], [0.25]])
        rows = scales * direction_pattern
        model, weights = spca.fit_spca(rows, q=1)
        assert spca.cumulative_variance(model, 1) == pytest.approx(100.0)
        np.testing.assert_allclose(spca.reconstruct(model, weights), rows, atol=1e-12)

    def test_toy_matches_svd_oracle(self):
        rows = np.array(
            [[1.0, 2.0, 0.0, -1.0], [0.5, -1.0, 2.0, 1.0], [-2.0, 0.0, 1.0, 3.0]]
        )
        model, weights = spca.fit_spca(rows, q=2)
        _, basis, eigenvalues, oracle_w = svd_oracle(rows, 2)
        np.testing.assert_allclose(model.basis, basis, atol=1e-9)
        np.testing.assert_allclose(model.eigenvalues[:3], eigenvalues[:3], atol=1e-9)
        np.testing.assert_allclose(weights, oracle_w, atol=1e-9)

    def test_random_small_matrices_match_oracle(self):
        rng = np.random.default_rng(99)
        for _ in range(20):
            r, d = int(rng.integers(3, 9)), int(rng.integers(2, 11))
            # centering leaves rank <= r-1; beyond it eigenvectors are arbitrary
            q = int(rng.integers(1, min(r - 1, d) + 1))
            rows = rng.normal(size=(r, d))
            model, weights = spca.fit_spca(rows, q=q)
            _, basis, eigenvalues, oracle_w = svd_oracle(rows, q)
            np.testing.assert_allclose(model.basis, basis, atol=1e-9)
            np.testing.assert_allclose(weights, oracle_w, atol=1e-9)
            np.testing.assert_allclose(
                model.eigenvalues[: min(r, d)], eigenvalues[: min(r, d)], atol=1e-9
            )

    def test_orthonormality(self):
        rng = np.random.default_rng(1)
        rows = rng.normal(size=(40, 25))
        model, _ = spca.fit_spca(rows, q=10)
        gram = model.basis @ model.basis.T
        assert np.max(np.abs(gram - np.eye(10))) < 1e-8

    def test_eckart_young_accounting(self):
        rng = np.random.default_rng(2)
        rows = rng.normal(size=(30, 12)) * np.linspace(3, 0.1, 12)
        for q in (1, 3, 7, 12):
            model, weights = spca.fit_spca(rows, q=q)
            resid = rows - spca.reconstruct(model, weights)
            tail = model.eigenvalues[q:].sum()
            total = model.eigenvalues.sum()
            assert np.sum(resid**2) == pytest.approx(tail, rel=1e-6, abs=1e-9 * total)

    def test_fit_deterministic(self):
        rng = np.random.default_rng(3)
        rows = rng.normal(size=(20, 8))
        m1, w1 = spca.fit_spca(rows, q=4)
        m2, w2 = spca.fit_spca(rows, q=4)
        np.testing.assert_array_equal(m1.basis, m2.basis)
        np.testing.assert_array_equal(w1, w2)

    def test_degenerate_input_allowed(self):
        rows = np.tile(np.arange(5.0), (6, 1))
        model, weights = spca.fit_spca(rows, q=3)
        np.testing.assert_allclose(model.eigenvalues, 0.0, atol=1e-12)
        np.testing.assert_allclose(weights, 0.0, atol=1e-9)

    def test_q_out_of_range(self):
        rows = np.ones((4, 5))
        with pytest.raises(ValueError):
            spca.fit_spca(rows, q=0)
        with pytest.raises(ValueError):
            spca.fit_spca(rows, q=6)

    def test_tensor_input_flattened(self):
        rng = np.random.default_rng(4)
        tensor = rng.normal(size=(3, 5, 7))  # obs x bins x directions
        model_t, w_t = spca.fit_spca(tensor, q=2)
        model_m, w_m = spca.fit_spca(tensor.reshape(15, 7), q=2)
        np.testing.assert_array_equal(model_t.basis, model_m.basis)
        np.testing.assert_array_equal(w_t, w_m)


class TestVariance:
    def test_full_q_is_100(self):
        rng = np.random.default_rng(5)
        model, _ = spca.fit_spca(rng.normal(size=(30, 9)), q=9)
        assert spca.cumulative_variance(model, 9) == pytest.approx(100.0)

    def test_monotone(self):
        rng = np.random.default_rng(6)
        model, _ = spca.fit_spca(rng.normal(size=(30, 9)), q=9)
        values = [spca.cumulative_variance(model, q) for q in range(1, 10)]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_out_of_range(self):
        rng = np.random.default_rng(7)
        model, _ = spca.fit_spca(rng.normal(size=(10, 4)), q=2)
        with pytest.raises(ValueError):
            spca.cumulative_variance(model, 0)
        with pytest.raises(ValueError):
            spca.cumulative_variance(model, 5)


class TestProjectReconstruct:
    @pytest.fixture
    def model(self):
        rng = np.random.default_rng(8)
        rows = rng.normal(size=(25, 10)) + rng.normal(size=10)
        model, _ = spca.fit_spca(rows, q=4)
        return model

    def test_zero_weights_give_h_av(self, model):
        out = spca.reconstruct(model, np.zeros((3, 4)))
        np.testing.assert_allclose(out, np.tile(model.h_av, (3, 1)))

    def test_h_av_row_projects_to_zero(self, model):
        np.testing.assert_allclose(spca.project(model, model.h_av), 0.0, atol=1e-12)

    def test_basis_row_projects_to_unit_vector(self, model):
        for k in range(model.q):
            w = spca.project(model, model.h_av + model.basis[k])
            np.testing.assert_allclose(w[0], np.eye(model.q)[k], atol=1e-10)

    def test_project_reconstruct_idempotent(self, model):
        rng = np.random.default_rng(9)
        rows = rng.normal(size=(6, 10))
        once = spca.reconstruct(model, spca.project(model, rows))
        twice = spca.reconstruct(model, spca.project(model, once))
        np.testing.assert_allclose(twice, once, atol=1e-12)

    def test_lossless_at_full_rank(self):
        rng = np.random.default_rng(10)
        rows = rng.normal(size=(30, 8))
        model, weights = spca.fit_spca(rows, q=8)
        np.testing.assert_allclose(spca.reconstruct(model, weights), rows, atol=1e-6)

    def test_residual_equals_complement_norm(self, model):
        rng = np.random.default_rng(11)
        row = rng.normal(size=10)
        recon = spca.reconstruct(model, spca.project(model, row))[0]
        err = np.linalg.norm(row - recon)
        # oracle: explicit projection onto the orthogonal complement of the basis
        centered = row - model.h_av
        complement = centered - model.basis.T @ (model.basis @ centered)
        assert err == pytest.approx(np.linalg.norm(complement), abs=1e-10)

    def test_shape_mismatches(self, model):
        with pytest.raises(ValueError):
            spca.reconstruct(model, np.zeros((2, 3)))
        with pytest.raises(ValueError):
            spca.project(model, np.zeros((2, 7)))


class TestPersistence:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(12)
        rows = rng.normal(size=(40, 16))
        model, _ = spca.fit_spca(
            rows,
            q=5,
            hemisphere="front",
            mu=rng.normal(size=200),
            directions=rng.normal(size=(16, 2)),
            direction_indices=tuple(range(16)),
            reference_direction=3,
        )
        spca.save_spca(model, tmp_path / "front")
        back = spca.load_spca(tmp_path / "front")
        assert back.hemisphere == "front"
        assert back.q == 5
        assert back.reference_direction == 3
        assert back.direction_indices == tuple(range(16))
        np.testing.assert_allclose(back.basis, model.basis, atol=1e-6)
        np.testing.assert_allclose(back.h_av, model.h_av, atol=1e-6)
        np.testing.assert_allclose(back.eigenvalues, model.eigenvalues)
        np.testing.assert_allclose(back.mu, model.mu)
        # float32 blobs reload bit-exactly against their own rounding
        np.testing.assert_array_equal(back.basis, model.basis.astype("<f4").astype(float))
