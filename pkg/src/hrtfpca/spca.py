"""Spatial principal component analysis of log-magnitude HRTF sets.

The decomposition treats each (subject-ear, frequency bin) pair as one
observation of a vector over spatial directions: stacking those vectors
gives a matrix H whose column mean is the direction-dependent average
H_av; the eigenvectors of the centered scatter matrix are the spatial
principal components (rows of the basis), and projecting the centered
rows onto them yields the per-observation weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import HrtfDataset
from .dsp import hrir_to_log_spectrum

EIGENVALUE_CLAMP = -1e-9


@dataclass
class SpcaModel:
    hemisphere: str  # "front", "rear", or "full"
    q: int
    basis: np.ndarray  # (Q, D_h); rows are spatial principal components
    h_av: np.ndarray  # (D_h,) mean of the centered-log rows, in dB
    eigenvalues: np.ndarray  # (D_h,) nonincreasing, nonnegative
    mu: np.ndarray | None = None  # (N,) global mean log spectrum in dB
    directions: np.ndarray | None = None  # (D_h, 2) interaural-polar (az, el)
    direction_indices: tuple[int, ...] | None = None  # global grid index per column
    reference_direction: int | None = None  # local column index

    @property
    def n_directions(self) -> int:
        return self.basis.shape[1]

    def reference_dvspc(self) -> np.ndarray:
        """Basis column at the reference direction (the reference DV-SPC)."""
        if self.reference_direction is None:
            raise ValueError("model has no reference direction")
        return self.basis[:, self.reference_direction].copy()


def compute_global_mean(log_panel: np.ndarray) -> np.ndarray:
    """Per-bin mean over every subject, ear, and direction (bins on the last axis)."""
    log_panel = np.asarray(log_panel, dtype=float)
    if log_panel.size == 0:
        raise ValueError("empty panel")
    return log_panel.reshape(-1, log_panel.shape[-1]).mean(axis=0)


def _canonical_sign(vectors: np.ndarray) -> np.ndarray:
    """Flip each row so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(vectors.shape[0]), idx])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def fit_spca(
    rows: np.ndarray,
    q: int,
    *,
    hemisphere: str = "full",
    mu: np.ndarray | None = None,
    directions: np.ndarray | None = None,
    direction_indices: tuple[int, ...] | None = None,
    reference_direction: int | None = None,
) -> tuple[SpcaModel, np.ndarray]:
    """Fit the spatial decomposition and return (model, weights).

    ``rows`` holds one spatial slice per row, shape (R, D) or (obs, bins, D);
    weights come back with the same row order, shape (R, Q).
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 3:
        rows = rows.reshape(-1, rows.shape[-1])
    if rows.ndim != 2:
        raise ValueError("rows must be a 2-D matrix or 3-D tensor")
    if not np.all(np.isfinite(rows)):
        raise ValueError("rows contain non-finite values")
    d = rows.shape[1]
    if not 1 <= q <= d:
        raise ValueError(f"q={q} out of range 1..{d}")

    h_av = rows.mean(axis=0)
    centered = rows - h_av
    scatter = centered.T @ centered
    eigenvalues, eigenvectors = np.linalg.eigh(scatter)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = eigenvalues[order]
    if eigenvalues[-1] < EIGENVALUE_CLAMP * max(1.0, abs(eigenvalues[0])):
        raise ValueError("scatter matrix has a significantly negative eigenvalue")
    eigenvalues = np.maximum(eigenvalues, 0.0)
    basis = _canonical_sign(eigenvectors[:, order].T[:q])
    weights = centered @ basis.T
    model = SpcaModel(
        hemisphere=hemisphere,
        q=q,
        basis=basis,
        h_av=h_av,
        eigenvalues=eigenvalues,
        mu=None if mu is None else np.asarray(mu, dtype=float),
        directions=None if directions is None else np.asarray(directions, dtype=float),
        direction_indices=direction_indices,
        reference_direction=reference_direction,
    )
    return model, weights


def cumulative_variance(model: SpcaModel, q: int) -> float:
    """Percentage of total variance captured by the first q components."""
    ev = model.eigenvalues
    if not 1 <= q <= ev.size:
        raise ValueError(f"q={q} out of range 1..{ev.size}")
    total = float(ev.sum())
    if total <= 0.0:
        return 100.0
    return float(ev[:q].sum()) / total * 100.0


def reconstruct(model: SpcaModel, d_rows: np.ndarray) -> np.ndarray:
    """Centered-log panel from weights: d @ W + H_av (one spatial row per input row)."""
    d_rows = np.atleast_2d(np.asarray(d_rows, dtype=float))
    if d_rows.shape[-1] != model.q:
        raise ValueError(f"weights have {d_rows.shape[-1]} columns, model q={model.q}")
    return d_rows @ model.basis + model.h_av


def project(model: SpcaModel, rows: np.ndarray) -> np.ndarray:
    """Least-squares weights for centered-log spatial rows: (rows - H_av) @ W^T."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[-1] != model.n_directions:
        raise ValueError(
            f"rows have {rows.shape[-1]} directions, model has {model.n_directions}"
        )
    return (rows - model.h_av) @ model.basis.T


# ---------------------------------------------------------------------------
# Dataset assembly


def log_magnitude_panel(ds: HrtfDataset) -> np.ndarray:
    """Log-magnitude spectra of every HRIR: shape (subjects, 2 ears, D, N) in dB."""
    panel = np.empty(
        (len(ds.subjects), 2, ds.grid.direction_count, ds.hrir_length), dtype=float
    )
    for i, s in enumerate(ds.subjects):
        panel[i, 0] = hrir_to_log_spectrum(s.hrir_left)
        panel[i, 1] = hrir_to_log_spectrum(s.hrir_right)
    return panel


def centered_rows(
    log_panel: np.ndarray,
    mu: np.ndarray,
    direction_indices,
    *,
    ear: int | None = None,
    mirror: np.ndarray | None = None,
) -> np.ndarray:
    """Mean-removed spatial rows for a direction subset.

    Returns shape (n_obs * N, |subset|); row order is subject-major, then ear
    (left before right when both), then frequency bin. ``ear`` restricts the
    observations to one ear (0=left, 1=right) for per-ear diagnostics.

    ``mirror`` (a full-grid azimuth-mirror permutation) folds right-ear
    measurements into the left-ear frame, so both ears share one canonical
    spatial coordinate: column j of a right-ear row holds that ear's value
    at the azimuth-mirrored direction.
    """
    delta = log_panel - mu  # (S, 2, D, N)
    idx = np.asarray(direction_indices, dtype=int)
    idx_by_ear = {0: idx, 1: idx if mirror is None else np.asarray(mirror)[idx]}
    ears = (0, 1) if ear is None else (ear,)
    blocks = [np.swapaxes(delta[:, e, idx_by_ear[e], :], 1, 2) for e in ears]
    stacked = np.stack(blocks, axis=1)  # (S, n_ears, N, D_h)
    return stacked.reshape(-1, idx.size)


# ---------------------------------------------------------------------------
# Persistence: spca_model.json + raw float32 blobs for the large arrays.


def save_spca(model: SpcaModel, directory: str | Path) -> None:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    meta = {
        "hemisphere": model.hemisphere,
        "q": model.q,
        "n_directions": model.n_directions,
        "eigenvalues": model.eigenvalues.tolist(),
        "mu": None if model.mu is None else model.mu.tolist(),
        "directions": None if model.directions is None else model.directions.tolist(),
        "direction_indices": (
            None if model.direction_indices is None else list(model.direction_indices)
        ),
        "reference_direction": model.reference_direction,
    }
    (root / "spca_model.json").write_text(json.dumps(meta))
    model.basis.astype("<f4").tofile(root / "W.f32")
    model.h_av.astype("<f4").tofile(root / "H_av.f32")


def load_spca(directory: str | Path) -> SpcaModel:
    root = Path(directory)
    meta = json.loads((root / "spca_model.json").read_text())
    q = int(meta["q"])
    d = int(meta["n_directions"])
    basis = np.fromfile(root / "W.f32", dtype="<f4").astype(float).reshape(q, d)
    h_av = np.fromfile(root / "H_av.f32", dtype="<f4").astype(float)
    if h_av.size != d:
        raise ValueError(f"H_av.f32 holds {h_av.size} values, expected {d}")
    return SpcaModel(
        hemisphere=meta["hemisphere"],
        q=q,
        basis=basis,
        h_av=h_av,
        eigenvalues=np.asarray(meta["eigenvalues"], dtype=float),
        mu=None if meta["mu"] is None else np.asarray(meta["mu"], dtype=float),
        directions=(
            None if meta["directions"] is None else np.asarray(meta["directions"], dtype=float)
        ),
        direction_indices=(
            None
            if meta["direction_indices"] is None
            else tuple(int(i) for i in meta["direction_indices"])
        ),
        reference_direction=meta["reference_direction"],
    )
