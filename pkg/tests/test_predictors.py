import numpy as np
import pytest

from hrtfpca import predictors, spca
from hrtfpca.dataset import make_split, partition_hemispheres
from hrtfpca.mlp import MlpNetwork
from hrtfpca.predictors import (
    DvspcPredictor,
    TrainingPlan,
    WeightPredictor,
    hemisphere_of,
    predict_direction_params,
    predict_weights,
)


class TestFittedSpca:
    def test_hemisphere_models_orthonormal(self, fitted_spca):
        for hemi in ("front", "rear"):
            basis = fitted_spca.models[hemi].basis
            gram = basis @ basis.T
            assert np.max(np.abs(gram - np.eye(basis.shape[0]))) < 1e-8

    def test_reference_directions(self, fitted_spca):
        front = fitted_spca.models["front"]
        rear = fitted_spca.models["rear"]
        np.testing.assert_array_equal(front.directions[front.reference_direction], [0, 0])
        np.testing.assert_array_equal(rear.directions[rear.reference_direction], [0, 180])

    def test_direction_indices_partition(self, fitted_spca, sim_dataset):
        part = partition_hemispheres(sim_dataset.grid)
        assert fitted_spca.models["front"].direction_indices == part.front_indices
        assert fitted_spca.models["rear"].direction_indices == part.rear_indices

    def test_weights_reconstruct_panel(self, fitted_spca, sim_dataset):
        # full-rank check is elsewhere; here Q=200 keeps most energy
        model = fitted_spca.models["front"]
        w = fitted_spca.weights["front"]
        recon = spca.reconstruct(model, w[:200])
        assert recon.shape == (200, 625)

    def test_observation_lookup(self, fitted_spca, sim_dataset):
        sid = sim_dataset.subjects[3].subject_id
        pos = fitted_spca.obs_position(sid, "right")
        assert fitted_spca.observations[pos] == (sid, "right")
        block = fitted_spca.observation_weights("front", pos)
        assert block.shape == (200, 200)


class TestWeightPredictor:
    def test_exactly_101_nets_enforced(self):
        nets = [MlpNetwork([8, 4, 4], seed=0) for _ in range(100)]
        with pytest.raises(ValueError, match="101"):
            WeightPredictor(nets, q=2)

    def test_mirrored_bins(self, bundle, sim_dataset):
        anthro = sim_dataset.subject(sim_dataset.training_subjects[0]).anthro
        d = bundle.weights.predict(anthro.spectral_vector("left"))
        for hemi in ("front", "rear"):
            np.testing.assert_array_equal(d[hemi][150], d[hemi][50])
            for k in (1, 37, 99):
                np.testing.assert_array_equal(d[hemi][200 - k], d[hemi][k])

    def test_predict_weights_wrapper(self, bundle, sim_dataset):
        anthro = sim_dataset.subject(sim_dataset.training_subjects[0]).anthro
        vec = anthro.spectral_vector("left")
        np.testing.assert_array_equal(
            predict_weights(bundle.weights, vec, "front"),
            bundle.weights.predict(vec)["front"],
        )

    def test_training_subject_weights_correlate(self, bundle, fitted_spca, sim_dataset):
        # predicted weights track the fitted ones on a training subject;
        # dominant orders tightly, higher orders only as far as anthropometry
        # determines them on this data
        sid = sim_dataset.training_subjects[0]
        anthro = sim_dataset.subject(sid).anthro
        predicted = bundle.weights.predict(anthro.spectral_vector("left"))["front"]
        pos = fitted_spca.obs_position(sid, "left")
        truth = fitted_spca.observation_weights("front", pos)
        correlations = [
            np.corrcoef(predicted[:, q], truth[:, q])[0, 1] for q in range(10)
        ]
        assert np.mean(correlations[:4]) > 0.6
        assert np.mean(correlations) > 0.3

    def test_high_orders_near_zero(self, bundle, sim_dataset):
        anthro = sim_dataset.subject(sim_dataset.test_subjects[0]).anthro
        d = bundle.weights.predict(anthro.spectral_vector("left"))["front"]
        low = np.mean(np.abs(d[:, :10]))
        high = np.mean(np.abs(d[:, 50:]))
        assert high < 0.2 * low


class TestDirectionPredictors:
    def test_reference_direction_query_matches_reference(self, bundle):
        from hrtfpca.evaluation import dvspc_error

        e_w = dvspc_error(bundle)
        for hemi, (az, el) in predictors.REFERENCE_DIRECTIONS.items():
            predicted = bundle.dvspc.predict(hemi, az, el)
            ref = bundle.dvspc.references[hemi]
            assert float(np.sum((predicted - ref) ** 2)) < 2 * e_w

    def test_hav_reference_query(self, bundle):
        from hrtfpca.evaluation import hav_error

        e_h = hav_error(bundle)
        for hemi, (az, el) in predictors.REFERENCE_DIRECTIONS.items():
            predicted = bundle.hav.predict(hemi, az, el)
            assert abs(predicted - bundle.hav.references[hemi]) < 2 * np.sqrt(e_h)

    def test_batched_prediction_shapes(self, bundle):
        az = np.array([0.0, 10.0, -30.0])
        el = np.array([0.0, 45.0, 78.75])
        cols = bundle.dvspc.predict("front", az, el)
        assert cols.shape == (3, bundle.q)
        hav = bundle.hav.predict("front", az, el)
        assert hav.shape == (3,)

    def test_median_plane_itd_small_for_symmetric_head(self, bundle, sim_dataset):
        head = sim_dataset.subject(sim_dataset.generic_subject_id).anthro.itd_vector()
        for el in (-45.0, 0.0, 45.0, 90.0, 135.0, 180.0):
            itd = bundle.itd.predict(head, 0.0, el)
            assert abs(itd) < 0.15

    def test_itd_grows_toward_the_side(self, bundle, sim_dataset):
        head = sim_dataset.subject(sim_dataset.test_subjects[0]).anthro.itd_vector()
        itds = [bundle.itd.predict(head, az, 0.0) for az in (0.0, 30.0, 65.0, 80.0)]
        assert itds[-1] > itds[1] > 0 or itds[-1] < itds[1] < 0
        assert abs(itds[-1]) > abs(itds[0])

    def test_itd_rejects_bad_head(self, bundle):
        with pytest.raises(ValueError, match="positive"):
            bundle.itd.predict(np.array([0.0, 20.0, 18.0]), 10.0, 0.0)


class TestRouting:
    def test_front_routing(self, bundle):
        _, _, hemi = predict_direction_params(bundle, 0.0, 0.0)
        assert hemi == "front"
        assert hemisphere_of(90.0) == "front"

    def test_rear_routing(self, bundle):
        _, _, hemi = predict_direction_params(bundle, 0.0, 95.625)
        assert hemi == "rear"

    def test_off_grid_direction_is_finite(self, bundle):
        dvspc, hav, hemi = predict_direction_params(bundle, 12.3, 41.7)
        assert hemi == "front"
        assert np.all(np.isfinite(dvspc))
        assert np.isfinite(hav)

    def test_out_of_range_rejected(self, bundle):
        with pytest.raises(ValueError):
            predict_direction_params(bundle, 95.0, 0.0)
        with pytest.raises(ValueError):
            predict_direction_params(bundle, 0.0, 280.0)


class TestIsolationAndDeterminism:
    def test_subject_split_disjoint(self, bundle):
        assert not set(bundle.training_subjects) & set(bundle.test_subjects)

    def test_direction_split_isolation(self):
        plan = make_split(625)
        assert not set(plan.test_idx) & set(plan.train_idx)
        assert not set(plan.test_idx) & set(plan.valid_idx)

    def test_dvspc_training_deterministic(self, fitted_spca):
        plan = TrainingPlan(seed=11, dvspc_epochs=30, patience=30)
        a = predictors.train_dvspc_nets(fitted_spca, plan)
        b = predictors.train_dvspc_nets(fitted_spca, plan)
        for hemi in ("front", "rear"):
            for wa, wb in zip(a.nets[hemi].weights, b.nets[hemi].weights):
                np.testing.assert_array_equal(wa, wb)


class TestBundlePersistence:
    def test_round_trip_forward_equality(self, bundle, sim_dataset, tmp_path):
        predictors.save_bundle(bundle, tmp_path / "b")
        back = predictors.load_bundle(tmp_path / "b")
        anthro = sim_dataset.subject(sim_dataset.test_subjects[0]).anthro
        vec = anthro.spectral_vector("left")
        np.testing.assert_allclose(
            back.weights.predict(vec)["front"],
            bundle.weights.predict(vec)["front"],
            atol=1e-12,
        )
        np.testing.assert_allclose(
            back.dvspc.predict("rear", 5.0, 130.0),
            bundle.dvspc.predict("rear", 5.0, 130.0),
            atol=1e-12,
        )
        assert back.test_subjects == bundle.test_subjects
        np.testing.assert_allclose(
            back.generic_hrirs["left"], bundle.generic_hrirs["left"], atol=1e-7
        )

    def test_version_gate(self, bundle, tmp_path):
        import json

        predictors.save_bundle(bundle, tmp_path / "b")
        meta = json.loads((tmp_path / "b" / "bundle.json").read_text())
        meta["version"] = 99
        (tmp_path / "b" / "bundle.json").write_text(json.dumps(meta))
        with pytest.raises(ValueError, match="version"):
            predictors.load_bundle(tmp_path / "b")

    def test_inconsistent_q_rejected(self, bundle):
        with pytest.raises(ValueError, match="inconsistent"):
            predictors.PredictorBundle(
                spca_models=bundle.spca_models,
                mu=bundle.mu,
                weights=WeightPredictor(bundle.weights.nets, q=7),
                dvspc=bundle.dvspc,
                hav=bundle.hav,
                itd=bundle.itd,
                sample_rate=44100.0,
                training_subjects=(),
                test_subjects=(),
            )
