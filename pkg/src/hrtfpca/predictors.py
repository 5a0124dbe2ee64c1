"""Training and inference for the four prediction families.

Model inventory: 101 per-frequency networks mapping eight anthropometric
measurements to decomposition weights (mirrored bins reuse their partners),
and per-hemisphere networks for direction-vector columns, the per-direction
average spectrum, and ITDs. A trained bundle carries both hemisphere
decompositions, the global mean spectrum, all networks, and the designated
mannequin's measured HRIRs for the generic comparison method.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dsp, spca
from .dataset import (
    HemispherePartition,
    HrtfDataset,
    make_split,
    mirror_permutation,
    partition_hemispheres,
    require_cipic_grid,
    subjects_with_full_anthro,
)
from .mlp import MlpNetwork, TrainConfig, load_network, save_network, train

BUNDLE_VERSION = 1
N_BINS = 200
N_UNIQUE_BINS = 101
EARS = ("left", "right")
HEMISPHERES = ("front", "rear")
REFERENCE_DIRECTIONS = {"front": (0.0, 0.0), "rear": (0.0, 180.0)}


@dataclass
class TrainingPlan:
    """Budgets and sizes for all four trainings (defaults follow the paper's
    reported convergence epochs doubled, with early-stopping patience)."""

    seed: int = 0
    learning_rate: float = 0.001
    patience: int = 200
    weight_epochs: int = 1000
    dvspc_epochs: int = 30000
    hav_epochs: int = 20000
    itd_epochs: int = 11000
    weight_hidden: int = 32
    direction_hidden: tuple[int, ...] = (64, 64, 64)
    # the basis-column nets output q values at once: their last hidden layer
    # must not rank-limit the outputs, and full-batch descent needs a larger
    # step than the single-output nets
    dvspc_hidden: tuple[int, ...] = (128, 128, 256)
    dvspc_learning_rate: float = 0.01
    dvspc_patience: int = 2000  # full-batch descent improves in long slow waves
    hav_learning_rate: float = 0.01

    def config(
        self,
        epochs: int,
        seed_offset: int = 0,
        min_delta_rel: float = 0.0,
        learning_rate: float | None = None,
        patience: int | None = None,
    ) -> TrainConfig:
        return TrainConfig(
            learning_rate=learning_rate or self.learning_rate,
            max_epochs=epochs,
            patience=patience or self.patience,
            min_delta_rel=min_delta_rel,
            seed=self.seed + seed_offset,
        )


@dataclass
class FittedSpca:
    """Both hemisphere decompositions plus the observation bookkeeping.

    Right-ear observations enter the fit in the azimuth-mirrored (left-ear)
    frame, so one basis serves both ears and the per-ear weights stay
    statistically comparable; synthesis un-mirrors by querying the fields at
    the flipped azimuth for the right ear.
    """

    models: dict[str, spca.SpcaModel]
    weights: dict[str, np.ndarray]  # (n_obs * N_BINS, Q) in observation order
    mu: np.ndarray
    observations: list[tuple[str, str]]  # (subject_id, ear), row-major order
    partition: HemispherePartition
    mirror: np.ndarray | None = None  # full-grid azimuth-mirror permutation

    def observation_weights(self, hemisphere: str, obs_index: int) -> np.ndarray:
        """Weight matrix (N_BINS, Q) of one subject-ear observation."""
        rows = self.weights[hemisphere]
        return rows[obs_index * N_BINS : (obs_index + 1) * N_BINS]

    def obs_position(self, subject_id: str, ear: str) -> int:
        return self.observations.index((subject_id, ear))


def _hemisphere_metadata(ds: HrtfDataset, indices) -> dict:
    angles = ds.grid.angles()[list(indices)]
    return {"directions": angles, "direction_indices": tuple(indices)}


def fit_pipeline_spca(ds: HrtfDataset, q: int = 200) -> FittedSpca:
    """Fit the shared per-hemisphere decompositions on every subject and ear."""
    require_cipic_grid(ds.grid)
    panel = spca.log_magnitude_panel(ds)
    mu = spca.compute_global_mean(panel)
    part = partition_hemispheres(ds.grid)
    mirror = mirror_permutation(ds.grid)
    observations = [(s.subject_id, ear) for s in ds.subjects for ear in EARS]

    models, weights = {}, {}
    for hemi, indices in (("front", part.front_indices), ("rear", part.rear_indices)):
        meta = _hemisphere_metadata(ds, indices)
        ref_az, ref_el = REFERENCE_DIRECTIONS[hemi]
        global_ref = ds.grid.index_of(ref_az, ref_el)
        rows = spca.centered_rows(panel, mu, indices, mirror=mirror)
        model, w = spca.fit_spca(
            rows,
            q,
            hemisphere=hemi,
            mu=mu,
            directions=meta["directions"],
            direction_indices=meta["direction_indices"],
            reference_direction=indices.index(global_ref),
        )
        models[hemi] = model
        weights[hemi] = w
    return FittedSpca(models, weights, mu, observations, part, mirror=mirror)


# ---------------------------------------------------------------------------
# Weight networks: one per unique frequency bin, both hemispheres per output.


@dataclass
class WeightPredictor:
    nets: list[MlpNetwork]  # exactly N_UNIQUE_BINS networks
    q: int

    def __post_init__(self):
        if len(self.nets) != N_UNIQUE_BINS:
            raise ValueError(f"expected {N_UNIQUE_BINS} networks, got {len(self.nets)}")

    def predict(self, anthro_vector: np.ndarray) -> dict[str, np.ndarray]:
        """Full (N_BINS, Q) weight matrices per hemisphere for one ear's inputs."""
        anthro_vector = np.asarray(anthro_vector, dtype=float)
        half = np.stack([net.forward(anthro_vector) for net in self.nets])  # (101, 2Q)
        full = dsp.mirror_half_spectrum(half.T).T  # (200, 2Q)
        return {"front": full[:, : self.q], "rear": full[:, self.q :]}


def predict_weights(
    wp: WeightPredictor, anthro_vector: np.ndarray, hemisphere: str = "front"
) -> np.ndarray:
    return wp.predict(anthro_vector)[hemisphere]


def _weight_observation_tables(ds: HrtfDataset, fitted: FittedSpca):
    """Inputs (n_obs, 8) and targets (n_obs, 101, 2Q) in manifest order."""

    def tables(subject_ids):
        inputs, targets = [], []
        for sid in subject_ids:
            rec = ds.subject(sid)
            for ear in EARS:
                inputs.append(rec.anthro.spectral_vector(ear))
                p = fitted.obs_position(sid, ear)
                d = np.concatenate(
                    [
                        fitted.observation_weights("front", p)[:N_UNIQUE_BINS],
                        fitted.observation_weights("rear", p)[:N_UNIQUE_BINS],
                    ],
                    axis=1,
                )  # (101, 2Q)
                targets.append(d)
        return np.asarray(inputs), np.asarray(targets)

    return tables


def _effective_dim(inputs: np.ndarray) -> int:
    return max(1, int(np.count_nonzero(inputs.std(axis=0) > 0)))


def train_weight_nets(
    ds: HrtfDataset, fitted: FittedSpca, plan: TrainingPlan | None = None
) -> WeightPredictor:
    """Train the 101 per-bin networks on the designated training subjects.

    The 30 training subjects give 60 subject-ear observations; the last ten
    observations in manifest order are the validation set.
    """
    plan = plan or TrainingPlan()
    complete = set(subjects_with_full_anthro(ds))
    for sid in tuple(ds.training_subjects) + tuple(ds.test_subjects):
        if sid not in complete:
            raise ValueError(f"subject {sid} lacks complete anthropometry")
    tables = _weight_observation_tables(ds, fitted)
    inputs, targets = tables(ds.training_subjects)
    n_valid = 10 if inputs.shape[0] > 10 else 0
    n_train = inputs.shape[0] - n_valid

    q = fitted.models["front"].q
    nets = []
    for k in range(N_UNIQUE_BINS):
        net = MlpNetwork(
            [inputs.shape[1], plan.weight_hidden, 2 * q],
            seed=plan.seed + k,
            effective_input_dim=_effective_dim(inputs[:n_train]),
            output_init="zero",
        )
        net.fit_scalers(inputs[:n_train], targets[:n_train, k])
        net, _ = train(
            net,
            inputs[:n_train],
            targets[:n_train, k],
            inputs[n_train:] if n_valid else None,
            targets[n_train:, k] if n_valid else None,
            plan.config(plan.weight_epochs, seed_offset=k),
        )
        nets.append(net)
    return WeightPredictor(nets, q)


# ---------------------------------------------------------------------------
# Direction-dependent networks (front/rear pairs).


@dataclass
class DvspcPredictor:
    nets: dict[str, MlpNetwork]
    references: dict[str, np.ndarray]  # reference DV-SPC per hemisphere
    q: int

    def predict(self, hemisphere: str, az_deg, el_deg) -> np.ndarray:
        az = np.atleast_1d(np.asarray(az_deg, dtype=float))
        el = np.atleast_1d(np.asarray(el_deg, dtype=float))
        ref = np.tile(self.references[hemisphere], (az.size, 1))
        out = self.nets[hemisphere].forward(np.column_stack([ref, az, el]))
        return out[0] if np.isscalar(az_deg) else out


@dataclass
class HavPredictor:
    nets: dict[str, MlpNetwork]
    references: dict[str, float]  # reference H_av value per hemisphere

    def predict(self, hemisphere: str, az_deg, el_deg) -> np.ndarray | float:
        az = np.atleast_1d(np.asarray(az_deg, dtype=float))
        el = np.atleast_1d(np.asarray(el_deg, dtype=float))
        ref = np.full(az.size, self.references[hemisphere])
        out = self.nets[hemisphere].forward(np.column_stack([ref, az, el]))[:, 0]
        return float(out[0]) if np.isscalar(az_deg) else out


@dataclass
class ItdPredictor:
    nets: dict[str, MlpNetwork]

    def predict(self, head_vector: np.ndarray, az_deg, el_deg) -> np.ndarray | float:
        hemi = "front" if np.all(np.atleast_1d(el_deg) <= 90.0) else "rear"
        head_vector = np.asarray(head_vector, dtype=float)
        if head_vector.shape != (3,) or np.any(head_vector <= 0):
            raise ValueError("head dimensions must be three positive values")
        az = np.atleast_1d(np.asarray(az_deg, dtype=float))
        el = np.atleast_1d(np.asarray(el_deg, dtype=float))
        inputs = np.column_stack([np.tile(head_vector, (az.size, 1)), az, el])
        out = self.nets[hemi].forward(inputs)[:, 0]
        return float(out[0]) if np.isscalar(az_deg) else out


def train_dvspc_nets(fitted: FittedSpca, plan: TrainingPlan | None = None) -> DvspcPredictor:
    """One network per hemisphere predicting basis columns from direction."""
    plan = plan or TrainingPlan()
    nets, references = {}, {}
    for offset, hemi in enumerate(HEMISPHERES):
        model = fitted.models[hemi]
        split = make_split(model.n_directions)
        ref = model.reference_dvspc()
        angles = model.directions
        inputs = np.column_stack([np.tile(ref, (model.n_directions, 1)), angles])
        targets = model.basis.T  # (D_h, Q)
        net = MlpNetwork(
            [model.q + 2, *plan.dvspc_hidden, model.q],
            seed=plan.seed + 500 + offset,
            effective_input_dim=_effective_dim(inputs[list(split.train_idx)]),
            output_init="zero",
        )
        net.fit_scalers(inputs[list(split.train_idx)], targets[list(split.train_idx)])
        net, _ = train(
            net,
            inputs[list(split.train_idx)],
            targets[list(split.train_idx)],
            inputs[list(split.valid_idx)],
            targets[list(split.valid_idx)],
            plan.config(plan.dvspc_epochs, seed_offset=500 + offset,
                        learning_rate=plan.dvspc_learning_rate,
                        patience=plan.dvspc_patience),
        )
        nets[hemi] = net
        references[hemi] = ref
    return DvspcPredictor(nets, references, fitted.models["front"].q)


def train_hav_nets(fitted: FittedSpca, plan: TrainingPlan | None = None) -> HavPredictor:
    """One network per hemisphere predicting the mean spectrum value."""
    plan = plan or TrainingPlan()
    nets, references = {}, {}
    for offset, hemi in enumerate(HEMISPHERES):
        model = fitted.models[hemi]
        split = make_split(model.n_directions)
        ref_value = float(model.h_av[model.reference_direction])
        angles = model.directions
        inputs = np.column_stack([np.full(model.n_directions, ref_value), angles])
        targets = model.h_av[:, None]
        net = MlpNetwork(
            [3, *plan.direction_hidden, 1],
            seed=plan.seed + 600 + offset,
            effective_input_dim=_effective_dim(inputs[list(split.train_idx)]),
            output_init="zero",
        )
        net.fit_scalers(inputs[list(split.train_idx)], targets[list(split.train_idx)])
        net, _ = train(
            net,
            inputs[list(split.train_idx)],
            targets[list(split.train_idx)],
            inputs[list(split.valid_idx)],
            targets[list(split.valid_idx)],
            plan.config(plan.hav_epochs, seed_offset=600 + offset,
                        learning_rate=plan.hav_learning_rate),
        )
        nets[hemi] = net
        references[hemi] = ref_value
    return HavPredictor(nets, references)


def ground_truth_itds(ds: HrtfDataset) -> dict[str, np.ndarray]:
    """Per-subject ITD tracks (ms): dataset sidecar or onset extraction."""
    tracks = {}
    for s in ds.subjects:
        if s.itd is not None:
            tracks[s.subject_id] = np.asarray(s.itd, dtype=float)
        else:
            tracks[s.subject_id] = np.array(
                [
                    dsp.extract_itd(s.hrir_left[j], s.hrir_right[j], ds.sample_rate)
                    for j in range(ds.grid.direction_count)
                ]
            )
    return tracks


def train_itd_nets(ds: HrtfDataset, plan: TrainingPlan | None = None) -> ItdPredictor:
    """Per-hemisphere ITD networks from head dimensions and direction.

    Rows pair each training subject with that hemisphere's training
    directions; their validation directions validate, and the held-out
    subjects' test directions are reserved for evaluation.
    """
    plan = plan or TrainingPlan()
    require_cipic_grid(ds.grid)
    part = partition_hemispheres(ds.grid)
    itds = ground_truth_itds(ds)
    angles = ds.grid.angles()

    nets = {}
    for offset, (hemi, indices) in enumerate(
        (("front", part.front_indices), ("rear", part.rear_indices))
    ):
        indices = np.asarray(indices)
        split = make_split(indices.size)

        def rows(subject_ids, local_idx):
            sel = indices[list(local_idx)]
            inputs, targets = [], []
            for sid in subject_ids:
                head = ds.subject(sid).anthro.itd_vector()
                inputs.append(
                    np.column_stack([np.tile(head, (sel.size, 1)), angles[sel]])
                )
                targets.append(itds[sid][sel])
            return np.vstack(inputs), np.concatenate(targets)[:, None]

        train_x, train_y = rows(ds.training_subjects, split.train_idx)
        valid_x, valid_y = rows(ds.training_subjects, split.valid_idx)
        net = MlpNetwork(
            [5, *plan.direction_hidden, 1],
            seed=plan.seed + 700 + offset,
            effective_input_dim=_effective_dim(train_x),
            output_init="zero",
        )
        net.fit_scalers(train_x, train_y)
        net, _ = train(
            net, train_x, train_y, valid_x, valid_y,
            plan.config(plan.itd_epochs, seed_offset=700 + offset, min_delta_rel=1e-4),
        )
        nets[hemi] = net
    return ItdPredictor(nets)


# ---------------------------------------------------------------------------
# Bundle


@dataclass
class PredictorBundle:
    spca_models: dict[str, spca.SpcaModel]
    mu: np.ndarray
    weights: WeightPredictor | None
    dvspc: DvspcPredictor | None
    hav: HavPredictor | None
    itd: ItdPredictor | None
    sample_rate: float
    training_subjects: tuple[str, ...]
    test_subjects: tuple[str, ...]
    generic_subject_id: str | None = None
    generic_hrirs: dict[str, np.ndarray] | None = None  # {"left","right"}: (D, 200)
    generic_itd: np.ndarray | None = None
    seed: int = 0
    version: int = BUNDLE_VERSION
    pca_method: object | None = None  # optional baseline attachment

    @property
    def q(self) -> int:
        return self.spca_models["front"].q

    def __post_init__(self):
        qs = {m.q for m in self.spca_models.values()}
        if self.weights is not None:
            qs.add(self.weights.q)
        if self.dvspc is not None:
            qs.add(self.dvspc.q)
        if len(qs) != 1:
            raise ValueError(f"inconsistent component counts across bundle members: {qs}")

    def missing_components(self) -> list[str]:
        return [
            name
            for name in ("weights", "dvspc", "hav", "itd")
            if getattr(self, name) is None
        ]

    def require_complete(self) -> None:
        missing = self.missing_components()
        if missing:
            raise ValueError(
                f"bundle is missing trained components: {', '.join(missing)}"
            )


def hemisphere_of(el_deg: float) -> str:
    return "front" if el_deg <= 90.0 else "rear"


def validate_direction(az_deg: float, el_deg: float) -> None:
    if not -90.0 <= az_deg <= 90.0:
        raise ValueError(f"azimuth {az_deg} outside [-90, 90]")
    if not -90.0 <= el_deg < 270.0:
        raise ValueError(f"elevation {el_deg} outside [-90, 270)")


def predict_direction_params(
    bundle: PredictorBundle, az_deg: float, el_deg: float
) -> tuple[np.ndarray, float, str]:
    """(DV-SPC column, H_av value, hemisphere) at an arbitrary direction."""
    validate_direction(az_deg, el_deg)
    hemi = hemisphere_of(el_deg)
    dvspc = bundle.dvspc.predict(hemi, az_deg, el_deg)
    hav = bundle.hav.predict(hemi, az_deg, el_deg)
    return dvspc, hav, hemi


def train_bundle(
    ds: HrtfDataset, q: int = 200, plan: TrainingPlan | None = None
) -> PredictorBundle:
    """Fit the decompositions and train all four families."""
    plan = plan or TrainingPlan()
    fitted = fit_pipeline_spca(ds, q)
    wp = train_weight_nets(ds, fitted, plan)
    dv = train_dvspc_nets(fitted, plan)
    hav = train_hav_nets(fitted, plan)
    itd = train_itd_nets(ds, plan)

    generic_hrirs = generic_itd = None
    if ds.generic_subject_id is not None:
        rec = ds.subject(ds.generic_subject_id)
        generic_hrirs = {"left": rec.hrir_left.copy(), "right": rec.hrir_right.copy()}
        generic_itd = ground_truth_itds(ds)[ds.generic_subject_id]

    return PredictorBundle(
        spca_models=fitted.models,
        mu=fitted.mu,
        weights=wp,
        dvspc=dv,
        hav=hav,
        itd=itd,
        sample_rate=ds.sample_rate,
        training_subjects=tuple(ds.training_subjects),
        test_subjects=tuple(ds.test_subjects),
        generic_subject_id=ds.generic_subject_id,
        generic_hrirs=generic_hrirs,
        generic_itd=generic_itd,
        seed=plan.seed,
    )


def save_bundle(bundle: PredictorBundle, directory: str | Path) -> None:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    meta = {
        "version": bundle.version,
        "q": bundle.q,
        "seed": bundle.seed,
        "sample_rate": bundle.sample_rate,
        "training_subjects": list(bundle.training_subjects),
        "test_subjects": list(bundle.test_subjects),
        "generic_subject_id": bundle.generic_subject_id,
        "mu": bundle.mu.tolist(),
        "has_generic": bundle.generic_hrirs is not None,
        "components": [
            name
            for name in ("weights", "dvspc", "hav", "itd")
            if getattr(bundle, name) is not None
        ],
        "dvspc_references": (
            None
            if bundle.dvspc is None
            else {h: r.tolist() for h, r in bundle.dvspc.references.items()}
        ),
        "hav_references": None if bundle.hav is None else bundle.hav.references,
    }
    (root / "bundle.json").write_text(json.dumps(meta))
    for hemi in HEMISPHERES:
        spca.save_spca(bundle.spca_models[hemi], root / f"spca_{hemi}")
        if bundle.dvspc is not None:
            save_network(bundle.dvspc.nets[hemi], root / f"dvspc_{hemi}.json")
        if bundle.hav is not None:
            save_network(bundle.hav.nets[hemi], root / f"hav_{hemi}.json")
        if bundle.itd is not None:
            save_network(bundle.itd.nets[hemi], root / f"itd_{hemi}.json")
    if bundle.weights is not None:
        weights_dir = root / "weights"
        weights_dir.mkdir(exist_ok=True)
        for k, net in enumerate(bundle.weights.nets):
            save_network(net, weights_dir / f"net_{k:03d}.json")
    if bundle.generic_hrirs is not None:
        bundle.generic_hrirs["left"].astype("<f4").tofile(root / "generic_L.f32")
        bundle.generic_hrirs["right"].astype("<f4").tofile(root / "generic_R.f32")
        bundle.generic_itd.astype("<f4").tofile(root / "generic_itd.f32")


def load_bundle(directory: str | Path) -> PredictorBundle:
    root = Path(directory)
    meta = json.loads((root / "bundle.json").read_text())
    if meta["version"] != BUNDLE_VERSION:
        raise ValueError(f"unsupported bundle version {meta['version']}")
    spca_models = {h: spca.load_spca(root / f"spca_{h}") for h in HEMISPHERES}
    q = int(meta["q"])
    components = set(meta.get("components", ["weights", "dvspc", "hav", "itd"]))
    wp = dv = hav = itd = None
    if "weights" in components:
        wp = WeightPredictor(
            [
                load_network(root / "weights" / f"net_{k:03d}.json")
                for k in range(N_UNIQUE_BINS)
            ],
            q,
        )
    if "dvspc" in components:
        dv = DvspcPredictor(
            {h: load_network(root / f"dvspc_{h}.json") for h in HEMISPHERES},
            {h: np.asarray(v, dtype=float) for h, v in meta["dvspc_references"].items()},
            q,
        )
    if "hav" in components:
        hav = HavPredictor(
            {h: load_network(root / f"hav_{h}.json") for h in HEMISPHERES},
            {h: float(v) for h, v in meta["hav_references"].items()},
        )
    if "itd" in components:
        itd = ItdPredictor({h: load_network(root / f"itd_{h}.json") for h in HEMISPHERES})

    generic_hrirs = generic_itd = None
    if meta["has_generic"]:
        d = spca_models["front"].n_directions + spca_models["rear"].n_directions
        generic_hrirs = {
            ear: np.fromfile(root / f"generic_{tag}.f32", dtype="<f4")
            .astype(float)
            .reshape(d, N_BINS)
            for ear, tag in (("left", "L"), ("right", "R"))
        }
        generic_itd = np.fromfile(root / "generic_itd.f32", dtype="<f4").astype(float)

    return PredictorBundle(
        spca_models=spca_models,
        mu=np.asarray(meta["mu"], dtype=float),
        weights=wp,
        dvspc=dv,
        hav=hav,
        itd=itd,
        sample_rate=float(meta["sample_rate"]),
        training_subjects=tuple(meta["training_subjects"]),
        test_subjects=tuple(meta["test_subjects"]),
        generic_subject_id=meta["generic_subject_id"],
        generic_hrirs=generic_hrirs,
        generic_itd=generic_itd,
        seed=int(meta["seed"]),
        version=int(meta["version"]),
    )
