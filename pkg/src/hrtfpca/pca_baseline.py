"""Per-direction frequency-domain PCA baseline.

The comparison method fits an independent PCA across subjects at every
measured direction (basis over frequency bins), so it can only operate on
the measurement grid; predicting at unmeasured directions is rejected by
contract. Prediction networks map the eight spectral measurements to the
per-direction weights, one network per direction serving both ears.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import HrtfDataset
from .mlp import MlpNetwork, TrainConfig, load_network, save_network, train
from .spca import _canonical_sign

DEFAULT_P = 12


class OffGridError(ValueError):
    """The baseline has no model away from the measurement grid."""


@dataclass
class DirectionPcaModel:
    direction: int  # grid index
    ear: str  # "left", "right", or "both" (stacked observations)
    p: int
    basis: np.ndarray  # (P, N) orthonormal rows over frequency
    h_av_f: np.ndarray  # (N,) mean log spectrum across subjects
    eigenvalues: np.ndarray  # (N,) nonincreasing


def _direction_rows(
    panel: np.ndarray, direction: int, ear: str, mirror_index: int | None = None
) -> np.ndarray:
    if ear == "both" and mirror_index is not None:
        # canonical ear frame: the right ear contributes its spectrum at the
        # azimuth-mirrored direction, so both ears describe the same geometry
        rows = np.stack(
            [panel[:, 0, direction, :], panel[:, 1, mirror_index, :]], axis=1
        )
        return rows.reshape(-1, panel.shape[-1])
    ears = {"left": [0], "right": [1], "both": [0, 1]}[ear]
    rows = panel[:, ears, direction, :]  # (S, len(ears), N)
    return rows.reshape(-1, panel.shape[-1])


def fit_direction_pca(
    panel: np.ndarray,
    direction: int,
    ear: str = "both",
    p: int = DEFAULT_P,
    mirror_index: int | None = None,
) -> tuple[DirectionPcaModel, np.ndarray]:
    """PCA across subjects of log spectra at one direction; returns (model, weights).

    ``panel`` is the (S, 2, D, N) log-magnitude array from
    ``spca.log_magnitude_panel``. Weights have one row per observation in
    subject-major (then ear) order. With ``ear="both"`` and a
    ``mirror_index``, right-ear rows come from the mirrored direction.
    """
    rows = _direction_rows(panel, direction, ear, mirror_index)
    if rows.shape[0] < 2:
        raise ValueError("need at least 2 observations for a per-direction fit")
    n = rows.shape[1]
    if not 1 <= p <= n:
        raise ValueError(f"p={p} out of range 1..{n}")
    h_av_f = rows.mean(axis=0)
    centered = rows - h_av_f
    scatter = centered.T @ centered
    eigenvalues, eigenvectors = np.linalg.eigh(scatter)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.maximum(eigenvalues[order], 0.0)
    basis = _canonical_sign(eigenvectors[:, order].T[:p])
    model = DirectionPcaModel(direction, ear, p, basis, h_av_f, eigenvalues)
    return model, centered @ basis.T


def direction_variance_captured(model: DirectionPcaModel) -> float:
    total = model.eigenvalues.sum()
    if total <= 0:
        return 100.0
    return float(model.eigenvalues[: model.p].sum() / total * 100.0)


def average_variance_captured(panel: np.ndarray, ear: str, p: int = DEFAULT_P) -> float:
    """Mean captured variance over all directions for one ear."""
    d = panel.shape[2]
    values = np.empty(d)
    for j in range(d):
        model, _ = fit_direction_pca(panel, j, ear=ear, p=p)
        values[j] = direction_variance_captured(model)
    return float(values.mean())


def reconstruct_direction(model: DirectionPcaModel, weights: np.ndarray) -> np.ndarray:
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    if weights.shape[-1] != model.p:
        raise ValueError(f"weights have {weights.shape[-1]} columns, model p={model.p}")
    return weights @ model.basis + model.h_av_f


@dataclass
class PcaMethodModel:
    """Per-direction models plus their weight networks (grid directions only).

    Models live in the left-ear frame; right-ear queries go through the
    azimuth-mirror map.
    """

    models: dict[int, DirectionPcaModel]
    nets: dict[int, MlpNetwork]
    p: int
    mirror: dict[int, int] | None = None

    def _effective_direction(self, direction: int, ear: str) -> int:
        if ear == "right" and self.mirror is not None:
            return self.mirror.get(direction, direction)
        return direction

    def predict_log_spectrum(
        self, anthro_vector: np.ndarray, direction: int, ear: str = "left"
    ) -> np.ndarray:
        direction = self._effective_direction(direction, ear)
        if direction not in self.models or direction not in self.nets:
            raise OffGridError(
                f"direction index {direction} has no trained per-direction model"
            )
        weights = self.nets[direction].forward(np.asarray(anthro_vector, dtype=float))
        return reconstruct_direction(self.models[direction], weights)[0]


def train_direction_nets(
    panel: np.ndarray,
    ds: HrtfDataset,
    directions: list[int] | None = None,
    p: int = DEFAULT_P,
    hidden: int = 32,
    cfg: TrainConfig | None = None,
) -> PcaMethodModel:
    """Fit shared-basis PCA and a weight network at the given directions.

    Observations pair each training subject's ear with that ear's
    measurements; the last ten of the sixty training observations hold out
    as validation, mirroring the main weight networks.
    """
    from .dataset import mirror_permutation

    cfg = cfg or TrainConfig(max_epochs=1000)
    directions = list(range(panel.shape[2])) if directions is None else list(directions)
    mirror = mirror_permutation(ds.grid)
    subject_pos = {s.subject_id: i for i, s in enumerate(ds.subjects)}

    def observation_rows(sids):
        inputs, row_index = [], []
        for sid in sids:
            rec = ds.subjects[subject_pos[sid]]
            for ear_idx, ear in enumerate(("left", "right")):
                inputs.append(rec.anthro.spectral_vector(ear))
                row_index.append(subject_pos[sid] * 2 + ear_idx)
        return np.asarray(inputs), row_index

    train_inputs, train_rows = observation_rows(ds.training_subjects)
    n_train = len(train_rows) - 10 if len(train_rows) > 10 else len(train_rows)

    models: dict[int, DirectionPcaModel] = {}
    nets: dict[int, MlpNetwork] = {}
    for j in directions:
        model, weights = fit_direction_pca(
            panel, j, ear="both", p=p, mirror_index=int(mirror[j])
        )
        targets = weights[train_rows]
        net = MlpNetwork([train_inputs.shape[1], hidden, p], seed=cfg.seed + j,
                         output_init="zero")
        net.fit_scalers(train_inputs[:n_train], targets[:n_train])
        net, _ = train(
            net,
            train_inputs[:n_train],
            targets[:n_train],
            train_inputs[n_train:],
            targets[n_train:],
            cfg,
        )
        models[j] = model
        nets[j] = net
    return PcaMethodModel(models, nets, p,
                          mirror={j: int(mirror[j]) for j in directions})


# ---------------------------------------------------------------------------
# Persistence (mirrors the spatial-model layout: JSON metadata + f32 blobs)


def save_pca_method(pm: PcaMethodModel, directory: str | Path) -> None:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    meta = {
        "p": pm.p,
        "directions": sorted(pm.models),
        "mirror": None if pm.mirror is None else {str(k): v for k, v in pm.mirror.items()},
    }
    (root / "pca_method.json").write_text(json.dumps(meta))
    for j, model in pm.models.items():
        np.concatenate([model.basis.ravel(), model.h_av_f, model.eigenvalues]).astype(
            "<f4"
        ).tofile(root / f"dir_{j:04d}.f32")
        save_network(pm.nets[j], root / f"net_{j:04d}.json")


def load_pca_method(directory: str | Path) -> PcaMethodModel:
    root = Path(directory)
    meta = json.loads((root / "pca_method.json").read_text())
    p = int(meta["p"])
    models, nets = {}, {}
    for j in meta["directions"]:
        blob = np.fromfile(root / f"dir_{j:04d}.f32", dtype="<f4").astype(float)
        n = (blob.size) // (p + 2)
        basis = blob[: p * n].reshape(p, n)
        h_av_f = blob[p * n : p * n + n]
        eigenvalues = blob[p * n + n :]
        models[j] = DirectionPcaModel(j, "both", p, basis, h_av_f, eigenvalues)
        nets[j] = load_network(root / f"net_{j:04d}.json")
    mirror = meta.get("mirror")
    if mirror is not None:
        mirror = {int(k): int(v) for k, v in mirror.items()}
    return PcaMethodModel(models, nets, p, mirror=mirror)
