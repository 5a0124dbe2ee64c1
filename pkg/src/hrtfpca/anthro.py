"""Anthropometric parameter analysis: regression of per-direction PCA weights
on measurements, pairwise correlation screening, and the fixed key-parameter
sets used by the prediction pipeline.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

# Key parameter sets. The reduction from the full measurement list to these
# trades off simplicity, completeness, and ease of measurement; the analysis
# below reports the evidence but the pipeline always uses the fixed sets.
SPECTRAL_PARAMS = ("x1", "x3", "x12", "d1", "d3", "d4", "d5", "d6")
ITD_PARAMS = ("x1", "x2", "x3")


def selected_parameters() -> dict[str, tuple[str, ...]]:
    return {"spectral": SPECTRAL_PARAMS, "itd": ITD_PARAMS}


@dataclass
class RegressionResult:
    coefficients: np.ndarray  # (n_params + 1, n_orders); row 0 is the intercept
    t_statistics: np.ndarray  # same shape
    residuals: np.ndarray  # (n_subjects, n_orders)
    dof: int


def regress_weights_on_anthro(weights: np.ndarray, anthro: np.ndarray) -> RegressionResult:
    """OLS of per-subject weights on anthropometric columns, with t-statistics.

    ``weights`` is (subjects, orders); ``anthro`` is (subjects, parameters).
    An intercept column is prepended. Raises on rank-deficient designs.
    """
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    anthro = np.atleast_2d(np.asarray(anthro, dtype=float))
    n, p = anthro.shape
    if weights.shape[0] != n:
        raise ValueError("weights and anthro disagree on subject count")
    if n < p + 2:
        raise ValueError(f"need at least {p + 2} subjects for {p} parameters")
    design = np.column_stack([np.ones(n), anthro])
    if np.linalg.matrix_rank(design) < p + 1:
        raise ValueError("rank-deficient design matrix")
    coef, _, _, _ = np.linalg.lstsq(design, weights, rcond=None)
    resid = weights - design @ coef
    dof = n - (p + 1)
    sigma2 = np.sum(resid**2, axis=0) / dof  # (orders,)
    xtx_inv = np.linalg.inv(design.T @ design)
    se = np.sqrt(np.outer(np.diag(xtx_inv), sigma2))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, coef / se, 0.0)
    return RegressionResult(coef, t, resid, dof)


def pearson_matrix(anthro: np.ndarray) -> np.ndarray:
    """Absolute Pearson correlation between parameter columns; NaN diagonal."""
    anthro = np.atleast_2d(np.asarray(anthro, dtype=float))
    n, p = anthro.shape
    if n < 3:
        raise ValueError("need at least 3 subjects")
    std = anthro.std(axis=0)
    if np.any(std == 0):
        bad = [int(i) for i in np.flatnonzero(std == 0)]
        raise ValueError(f"zero-variance columns {bad}")
    r = np.abs(np.corrcoef(anthro, rowvar=False))
    np.fill_diagonal(r, np.nan)
    return np.clip(r, 0.0, 1.0)


@dataclass
class SelectionReport:
    parameter_names: tuple[str, ...]
    significance_counts: dict[str, int]  # directions where any order has |t| > crit
    directions_tested: int
    pearson: np.ndarray
    selected: dict[str, tuple[str, ...]]
    alpha: float = 0.05


def build_selection_report(
    weights_by_direction: np.ndarray,
    anthro: np.ndarray,
    parameter_names: tuple[str, ...],
    alpha: float = 0.05,
) -> SelectionReport:
    """Run the regression at every direction and tally significant parameters.

    ``weights_by_direction`` is (directions, subjects, orders); a parameter
    counts as significant at a direction when any weight order gives it a
    two-sided p below ``alpha``.
    """
    weights_by_direction = np.asarray(weights_by_direction, dtype=float)
    anthro = np.atleast_2d(np.asarray(anthro, dtype=float))
    n_dir = weights_by_direction.shape[0]
    p = anthro.shape[1]
    if len(parameter_names) != p:
        raise ValueError("parameter_names length does not match anthro columns")
    dof = anthro.shape[0] - (p + 1)
    t_crit = stats.t.ppf(1 - alpha / 2, dof)
    counts = np.zeros(p, dtype=int)
    for j in range(n_dir):
        result = regress_weights_on_anthro(weights_by_direction[j], anthro)
        significant = np.any(np.abs(result.t_statistics[1:]) > t_crit, axis=1)
        counts += significant
    return SelectionReport(
        parameter_names=tuple(parameter_names),
        significance_counts={name: int(c) for name, c in zip(parameter_names, counts)},
        directions_tested=n_dir,
        pearson=pearson_matrix(anthro),
        selected=selected_parameters(),
        alpha=alpha,
    )


def save_report(report: SelectionReport, out_dir: str | Path) -> None:
    """Write report.json plus a CSV of the correlation matrix."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "parameter_names": list(report.parameter_names),
        "significance_counts": report.significance_counts,
        "directions_tested": report.directions_tested,
        "alpha": report.alpha,
        "selected": {k: list(v) for k, v in report.selected.items()},
        "pearson": [
            [None if np.isnan(v) else round(float(v), 6) for v in row]
            for row in report.pearson
        ],
    }
    (out / "report.json").write_text(json.dumps(payload, indent=1))
    with open(out / "pearson.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("",) + report.parameter_names)
        for name, row in zip(report.parameter_names, report.pearson):
            writer.writerow([name] + ["" if np.isnan(v) else f"{v:.6f}" for v in row])
