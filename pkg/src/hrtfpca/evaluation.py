"""Objective evaluation: spectral distortion, SFRS maps, error statistics.

Spectral distortion here is the mean absolute dB difference over directions
per frequency bin and subject (the metric's plain arithmetic form, not an
RMS log ratio). Reports run over the 101 unique bins of the 200-point DFT.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dsp, spca
from .dataset import HrtfDataset, make_split
from .predictors import EARS, HEMISPHERES, N_BINS, N_UNIQUE_BINS, PredictorBundle

UNIQUE_BINS = slice(0, N_UNIQUE_BINS)


def spectral_distortion(measured: np.ndarray, test: np.ndarray) -> np.ndarray:
    """Per-bin mean |dB difference| over directions; inputs are (D, N) panels."""
    measured = np.asarray(measured, dtype=float)
    test = np.asarray(test, dtype=float)
    if measured.shape != test.shape:
        raise ValueError(
            f"panel shapes disagree: {measured.shape} vs {test.shape}"
        )
    return np.mean(np.abs(measured - test), axis=0)[UNIQUE_BINS]


def synthesize_log_panel(
    bundle: PredictorBundle, anthro, ear: str
) -> np.ndarray:
    """Predicted log-magnitude panel (D, 200) for one ear over the full grid.

    The decomposition lives in the left-ear frame, so the right ear's panel
    queries the direction fields at mirrored azimuths.
    """
    d = bundle.weights.predict(anthro.spectral_vector(ear))
    sign = 1.0 if ear == "left" else -1.0
    n_total = sum(bundle.spca_models[h].n_directions for h in HEMISPHERES)
    panel = np.empty((n_total, N_BINS))
    for hemi in HEMISPHERES:
        model = bundle.spca_models[hemi]
        angles = model.directions
        cols = bundle.dvspc.predict(hemi, sign * angles[:, 0], angles[:, 1])  # (D_h, Q)
        hav = bundle.hav.predict(hemi, sign * angles[:, 0], angles[:, 1])  # (D_h,)
        log_h = cols @ d[hemi].T + hav[:, None] + bundle.mu[None, :]
        panel[list(model.direction_indices)] = log_h
    return panel


def measured_log_panel(ds: HrtfDataset, subject_id: str, ear: str) -> np.ndarray:
    return dsp.hrir_to_log_spectrum(ds.subject(subject_id).hrir(ear))


def generic_log_panel(bundle: PredictorBundle, ear: str) -> np.ndarray:
    if bundle.generic_hrirs is None:
        raise ValueError("bundle carries no generic-subject measurement")
    return dsp.hrir_to_log_spectrum(bundle.generic_hrirs[ear])


def pca_log_panel(bundle: PredictorBundle, anthro, ear: str) -> np.ndarray:
    if bundle.pca_method is None:
        raise ValueError("bundle carries no trained per-direction baseline")
    vec = anthro.spectral_vector(ear)
    directions = sorted(bundle.pca_method.models)
    panel = np.empty((len(directions), N_BINS))
    for j in directions:
        panel[j] = bundle.pca_method.predict_log_spectrum(vec, j, ear=ear)
    return panel


@dataclass
class SdReport:
    bins_hz: np.ndarray  # (101,)
    per_subject: dict[str, np.ndarray]  # method -> (n_subjects, 101)
    subject_ids: tuple[str, ...]
    mean_db: dict[str, np.ndarray] = field(default_factory=dict)  # method -> (101,)
    std_db: dict[str, np.ndarray] = field(default_factory=dict)
    overall: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for method, table in self.per_subject.items():
            self.mean_db[method] = table.mean(axis=0)
            self.std_db[method] = table.std(axis=0)
            self.overall[method] = float(table.mean())


def sd_report(
    bundle: PredictorBundle,
    ds: HrtfDataset,
    methods: tuple[str, ...] = ("spca", "generic"),
    subject_ids: tuple[str, ...] | None = None,
) -> SdReport:
    """Spectral distortion of each method against measured data, per subject.

    Ears are evaluated separately and averaged into the subject's curve.
    """
    subject_ids = tuple(subject_ids or bundle.test_subjects)
    sample_rate = bundle.sample_rate
    tables = {m: np.zeros((len(subject_ids), N_UNIQUE_BINS)) for m in methods}
    for i, sid in enumerate(subject_ids):
        anthro = ds.subject(sid).anthro
        for ear in EARS:
            measured = measured_log_panel(ds, sid, ear)
            for method in methods:
                if method == "spca":
                    predicted = synthesize_log_panel(bundle, anthro, ear)
                elif method == "generic":
                    predicted = generic_log_panel(bundle, ear)
                elif method == "pca":
                    predicted = pca_log_panel(bundle, anthro, ear)
                else:
                    raise ValueError(f"unknown method {method!r}")
                tables[method][i] += spectral_distortion(measured, predicted) / len(EARS)
    return SdReport(
        bins_hz=dsp.bin_frequencies_hz(N_BINS, sample_rate)[UNIQUE_BINS],
        per_subject=tables,
        subject_ids=subject_ids,
    )


@dataclass
class SfrsMap:
    bin_hz: float
    method: str
    azimuths_deg: tuple[float, ...]
    elevations_deg: tuple[float, ...]
    grid_db: np.ndarray  # (n_az, n_el)
    error_db: np.ndarray | None = None  # |measured - test| per cell


def sfrs(
    panel: np.ndarray,
    ds_grid,
    bin_index: int,
    *,
    method: str = "measured",
    sample_rate: float = 44100.0,
    reference: np.ndarray | None = None,
) -> SfrsMap:
    """Magnitude map over (azimuth, elevation) at one frequency bin.

    ``panel`` is (D, N) over the full grid; a partial panel is rejected.
    """
    n_az = len(ds_grid.azimuths_deg)
    n_el = len(ds_grid.elevations_deg)
    panel = np.asarray(panel, dtype=float)
    if panel.shape[0] != n_az * n_el:
        raise ValueError(
            f"panel covers {panel.shape[0]} directions, grid has {n_az * n_el}"
        )
    values = panel[:, bin_index].reshape(n_az, n_el)
    error = None
    if reference is not None:
        reference = np.asarray(reference, dtype=float)
        if reference.shape != panel.shape:
            raise ValueError("reference panel shape mismatch")
        error = np.abs(reference[:, bin_index].reshape(n_az, n_el) - values)
    return SfrsMap(
        bin_hz=float(bin_index * sample_rate / N_BINS),
        method=method,
        azimuths_deg=ds_grid.azimuths_deg,
        elevations_deg=ds_grid.elevations_deg,
        grid_db=values,
        error_db=error,
    )


# ---------------------------------------------------------------------------
# The four reconstruction-error statistics on the designated test partitions.


def weight_error(bundle: PredictorBundle, ds: HrtfDataset) -> float:
    """MSE of predicted weights over held-out subjects (both hemispheres)."""
    from .dataset import mirror_permutation

    panel = spca.log_magnitude_panel(ds)
    mirror = mirror_permutation(ds.grid)
    total, count = 0.0, 0
    for sid in bundle.test_subjects:
        rec = ds.subject(sid)
        s_idx = ds.subject_ids.index(sid)
        for ear_idx, ear in enumerate(EARS):
            predicted = bundle.weights.predict(rec.anthro.spectral_vector(ear))
            for hemi in HEMISPHERES:
                model = bundle.spca_models[hemi]
                rows = spca.centered_rows(
                    panel[s_idx : s_idx + 1], bundle.mu, model.direction_indices,
                    ear=ear_idx, mirror=mirror,
                )
                truth = spca.project(model, rows)  # (200, Q)
                total += float(np.sum((predicted[hemi] - truth) ** 2))
                count += truth.size
    return total / count


def dvspc_error(bundle: PredictorBundle) -> float:
    """Mean squared DV-SPC error over held-out directions, summed over orders."""
    total, count = 0.0, 0
    for hemi in HEMISPHERES:
        model = bundle.spca_models[hemi]
        split = make_split(model.n_directions)
        test = list(split.test_idx)
        angles = model.directions[test]
        predicted = bundle.dvspc.predict(hemi, angles[:, 0], angles[:, 1])
        truth = model.basis.T[test]
        total += float(np.sum((predicted - truth) ** 2))
        count += len(test)
    return total / count


def hav_error(bundle: PredictorBundle) -> float:
    """Mean squared mean-spectrum error over held-out directions."""
    total, count = 0.0, 0
    for hemi in HEMISPHERES:
        model = bundle.spca_models[hemi]
        split = make_split(model.n_directions)
        test = list(split.test_idx)
        angles = model.directions[test]
        predicted = bundle.hav.predict(hemi, angles[:, 0], angles[:, 1])
        total += float(np.sum((predicted - model.h_av[test]) ** 2))
        count += len(test)
    return total / count


def itd_error(bundle: PredictorBundle, ds: HrtfDataset) -> float:
    """Mean absolute ITD error (ms) over held-out subjects' test directions."""
    from .predictors import ground_truth_itds

    itds = ground_truth_itds(ds)
    total, count = 0.0, 0
    for hemi in HEMISPHERES:
        model = bundle.spca_models[hemi]
        indices = np.asarray(model.direction_indices)
        split = make_split(indices.size)
        sel = indices[list(split.test_idx)]
        angles = ds.grid.angles()[sel]
        for sid in bundle.test_subjects:
            head = ds.subject(sid).anthro.itd_vector()
            predicted = bundle.itd.nets[hemi].forward(
                np.column_stack([np.tile(head, (sel.size, 1)), angles])
            )[:, 0]
            total += float(np.sum(np.abs(predicted - itds[sid][sel])))
            count += sel.size
    return total / count


def error_summary(bundle: PredictorBundle, ds: HrtfDataset) -> dict[str, float]:
    """The four statistics {e_d, e_W, e_H, e_T} on the designated test sets."""
    return {
        "e_d": weight_error(bundle, ds),
        "e_W": dvspc_error(bundle),
        "e_H": hav_error(bundle),
        "e_T": itd_error(bundle, ds),
    }
