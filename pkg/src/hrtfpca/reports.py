"""Report writers: delimited outputs plus matplotlib figures rendered to files.

Every ``write_*`` function emits a CSV/JSON artifact; the paired ``plot_*``
function renders the same data as a PNG next to it. All figure rendering is
headless (Agg backend).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .evaluation import SdReport, SfrsMap

METHOD_STYLES = {
    "measured": dict(color="0.3", marker=""),
    "generic": dict(color="tab:gray", marker="s"),
    "pca": dict(color="tab:blue", marker="^"),
    "spca": dict(color="tab:red", marker="o"),
}


def _style(method: str) -> dict:
    return METHOD_STYLES.get(method, dict(color="tab:green", marker="x"))


# ---------------------------------------------------------------------------
# Cumulative-variance table


def write_variance_table(path: str | Path, table: dict[int, dict[str, float]]) -> Path:
    """CSV with one row per component count: q, <ear columns...>."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ears = sorted({ear for row in table.values() for ear in row})
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["q"] + [f"variance_pct_{e}" for e in ears])
        for q in sorted(table):
            writer.writerow([q] + [f"{table[q][e]:.2f}" for e in ears])
    return path


def plot_variance_curve(path: str | Path, eigenvalues_by_ear: dict[str, np.ndarray],
                        marks: tuple[int, ...] = ()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    for ear, ev in eigenvalues_by_ear.items():
        cum = np.cumsum(ev) / ev.sum() * 100.0
        ax.semilogx(np.arange(1, cum.size + 1), cum, label=ear)
    for q in marks:
        ax.axvline(q, color="0.85", lw=0.8, zorder=0)
    ax.set_xlabel("number of retained components")
    ax.set_ylabel("cumulative variance (%)")
    ax.set_ylim(0, 100)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


# ---------------------------------------------------------------------------
# Spectral distortion


def write_sd_report(path: str | Path, report: SdReport) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_hz", "method", "mean_db", "std_db"])
        for method in report.per_subject:
            for hz, mean, std in zip(
                report.bins_hz, report.mean_db[method], report.std_db[method]
            ):
                writer.writerow([f"{hz:.1f}", method, f"{mean:.4f}", f"{std:.4f}"])
    return path


def plot_sd_curves(path: str | Path, report: SdReport) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7, 4))
    for i, method in enumerate(report.per_subject):
        # slight frequency offsets keep the error bars legible
        shift = 1.0 + 0.006 * (i - 1)
        style = _style(method)
        ax.errorbar(
            report.bins_hz[1:] * shift,
            report.mean_db[method][1:],
            yerr=report.std_db[method][1:],
            label=f"{method} (mean {report.overall[method]:.2f} dB)",
            lw=1.0,
            ms=2.5,
            errorevery=4,
            **style,
        )
    ax.set_xscale("log")
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("spectral distortion (dB)")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


# ---------------------------------------------------------------------------
# SFRS maps


def write_sfrs_csv(path: str | Path, sfrs_map: SfrsMap) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["az_deg", "el_deg", "db"])
        for i, az in enumerate(sfrs_map.azimuths_deg):
            for j, el in enumerate(sfrs_map.elevations_deg):
                writer.writerow([az, el, f"{sfrs_map.grid_db[i, j]:.4f}"])
    return path


def plot_sfrs(path: str | Path, maps: list[SfrsMap]) -> Path:
    """One heatmap per method, shared color scale, optional error row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    has_error = any(m.error_db is not None for m in maps)
    n = len(maps)
    rows = 2 if has_error else 1
    fig, axes = plt.subplots(rows, n, figsize=(3.1 * n, 3.0 * rows), squeeze=False)
    vmin = min(float(m.grid_db.min()) for m in maps)
    vmax = max(float(m.grid_db.max()) for m in maps)
    extent = (
        maps[0].elevations_deg[0],
        maps[0].elevations_deg[-1],
        maps[0].azimuths_deg[0],
        maps[0].azimuths_deg[-1],
    )
    for i, m in enumerate(maps):
        ax = axes[0][i]
        im = ax.imshow(m.grid_db, origin="lower", aspect="auto", extent=extent,
                       vmin=vmin, vmax=vmax, cmap="viridis")
        ax.set_title(f"{m.method} @ {m.bin_hz / 1000:.2f} kHz", fontsize=9)
        ax.set_xlabel("elevation (deg)")
        if i == 0:
            ax.set_ylabel("azimuth (deg)")
        if m.error_db is not None:
            exa = axes[1][i]
            ime = exa.imshow(m.error_db, origin="lower", aspect="auto", extent=extent,
                             vmin=0, cmap="magma")
            exa.set_xlabel("elevation (deg)")
            if i == 0:
                exa.set_ylabel("azimuth (deg)")
            fig.colorbar(ime, ax=exa, shrink=0.85, label="|error| dB")
    fig.colorbar(im, ax=list(axes[0]), shrink=0.85, label="dB")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


# ---------------------------------------------------------------------------
# Error statistics and diagnostic figures


def write_errors_json(path: str | Path, errors: dict[str, float]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({k: float(v) for k, v in errors.items()}, indent=1))
    return path


def plot_weight_orders(path: str | Path, true_weights: np.ndarray,
                       predicted_weights: np.ndarray, orders: int = 50,
                       label: str = "") -> Path:
    """True-vs-predicted weight curves for the first orders, one panel each."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    orders = min(orders, true_weights.shape[1])
    fig, axes = plt.subplots(2, 1, figsize=(7, 5), sharex=True, sharey=True)
    for ax, data, title in (
        (axes[0], true_weights, f"decomposition weights {label}"),
        (axes[1], predicted_weights, "network prediction"),
    ):
        im = ax.imshow(data[:, :orders].T, aspect="auto", origin="lower",
                       cmap="coolwarm",
                       vmin=-np.abs(true_weights[:, :orders]).max(),
                       vmax=np.abs(true_weights[:, :orders]).max())
        ax.set_ylabel("order")
        ax.set_title(title, fontsize=9)
    axes[1].set_xlabel("frequency bin")
    fig.colorbar(im, ax=list(axes), shrink=0.8)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_spc_maps(path: str | Path, model, predicted_cols: np.ndarray,
                  n_components: int = 4) -> Path:
    """First spatial components, fitted (top) vs network output (bottom)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n_az = len(set(model.directions[:, 0]))
    n_el = model.n_directions // n_az
    fig, axes = plt.subplots(2, n_components, figsize=(2.6 * n_components, 4.6),
                             squeeze=False)
    scale = np.abs(model.basis[:n_components]).max()
    for c in range(n_components):
        for row, values in ((0, model.basis[c]), (1, predicted_cols[:, c])):
            ax = axes[row][c]
            ax.imshow(values.reshape(n_az, n_el), origin="lower", aspect="auto",
                      cmap="coolwarm", vmin=-scale, vmax=scale)
            ax.set_xticks(())
            ax.set_yticks(())
        axes[0][c].set_title(f"component {c + 1}", fontsize=9)
    axes[0][0].set_ylabel("fitted")
    axes[1][0].set_ylabel("predicted")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path
