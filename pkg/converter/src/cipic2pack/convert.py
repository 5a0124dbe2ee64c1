"""Convert the upstream CIPIC MATLAB release into the portable dataset layout.

Input tree (as distributed):
    <root>/standard_hrir_database/subject_XXX/hrir_final.mat
    <root>/anthropometry/anthro.mat

Output: manifest.json + <id>_L.f32 / <id>_R.f32 (row-major float32,
[direction][sample], azimuth-major direction order) + optional
<id>_itd.f32 (ms) + anthro.csv with the key-parameter columns.
HRIR values are preserved exactly at 32-bit float precision.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import loadmat

SAMPLE_RATE = 44100.0
HRIR_LENGTH = 200
N_AZ = 25
N_EL = 50
AZIMUTHS_DEG = [-80.0, -65.0, -55.0] + [float(a) for a in range(-45, 50, 5)] + [55.0, 65.0, 80.0]
ELEVATIONS_DEG = [-45.0 + 5.625 * k for k in range(50)]
MAX_ITD_MS = 1.5

PINNA_FIELDS = ("d1", "d3", "d4", "d5", "d6")
# column positions inside the release's X (torso/head) and D (pinna) tables
X_COLUMNS = {"x1": 0, "x2": 1, "x3": 2, "x12": 11}
D_COLUMNS = {"d1": 0, "d3": 2, "d4": 3, "d5": 4, "d6": 5}
D_RIGHT_OFFSET = 8

ANTHRO_CSV_COLUMNS = (
    ("subject_id", "x1", "x2", "x3", "x12")
    + tuple(f"{d}_L" for d in PINNA_FIELDS)
    + tuple(f"{d}_R" for d in PINNA_FIELDS)
)


class ConversionError(Exception):
    """Hard failure: malformed input that prevents any conversion."""


@dataclass
class ConversionReport:
    subjects_converted: int = 0
    subjects_skipped: list[dict] = field(default_factory=list)
    checksums: dict[str, str] = field(default_factory=dict)
    full_anthro_subjects: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "subjects_converted": self.subjects_converted,
                "subjects_skipped": self.subjects_skipped,
                "full_anthro_subjects": self.full_anthro_subjects,
                "checksums": self.checksums,
            },
            indent=1,
        )


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    digest.update(path.read_bytes())
    return digest.hexdigest()


def _subject_dirs(cipic_root: Path) -> list[Path]:
    base = cipic_root / "standard_hrir_database"
    if not base.is_dir():
        base = cipic_root  # allow pointing straight at the subject folders
    return sorted(p for p in base.iterdir() if p.is_dir() and re.match(r"subject_\d+$", p.name))


def _load_anthro_table(cipic_root: Path) -> dict[str, dict[str, float]]:
    """Per-subject key measurements from anthro.mat; NaN cells are missing."""
    candidates = [
        cipic_root / "anthropometry" / "anthro.mat",
        cipic_root / "anthro.mat",
    ]
    path = next((p for p in candidates if p.is_file()), None)
    if path is None:
        return {}
    try:
        mat = loadmat(str(path))
        ids = np.atleast_1d(mat["id"]).ravel()
        x = np.atleast_2d(mat["X"]).astype(float)
        d = np.atleast_2d(mat["D"]).astype(float)
    except Exception as exc:
        raise ConversionError(f"malformed anthropometry table {path}: {exc}") from None

    table: dict[str, dict[str, float]] = {}
    for row, sid_num in enumerate(ids):
        sid = f"{int(sid_num):03d}"
        values: dict[str, float] = {}
        for name, col in X_COLUMNS.items():
            v = float(x[row, col])
            if np.isfinite(v) and v > 0:
                values[name] = v
        for name, col in D_COLUMNS.items():
            left = float(d[row, col])
            right = float(d[row, col + D_RIGHT_OFFSET])
            if np.isfinite(left) and left > 0:
                values[f"{name}_L"] = left
            if np.isfinite(right) and right > 0:
                values[f"{name}_R"] = right
        table[sid] = values
    return table


def _has_full_anthro(values: dict[str, float]) -> bool:
    required = list(X_COLUMNS) + [f"{d}_{s}" for d in PINNA_FIELDS for s in ("L", "R")]
    return all(k in values for k in required)


def _read_hrirs(mat_path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """(left, right, itd_ms) arrays; HRIRs come back as (1250, 200) float32."""
    mat = loadmat(str(mat_path))
    try:
        left = np.asarray(mat["hrir_l"], dtype=np.float32)
        right = np.asarray(mat["hrir_r"], dtype=np.float32)
    except KeyError as exc:
        raise ValueError(f"missing variable {exc} in {mat_path.name}") from None
    expected = (N_AZ, N_EL, HRIR_LENGTH)
    if left.shape != expected or right.shape != expected:
        raise ValueError(
            f"{mat_path.name}: hrir arrays have shape {left.shape}/{right.shape}, "
            f"expected {expected}"
        )
    if not (np.all(np.isfinite(left)) and np.all(np.isfinite(right))):
        raise ValueError(f"{mat_path.name}: non-finite HRIR samples")
    itd_ms = None
    if "ITD" in mat:
        # the release stores onset differences in samples at 44.1 kHz
        itd = np.asarray(mat["ITD"], dtype=float)
        if itd.shape == (N_AZ, N_EL):
            itd_ms = (itd / SAMPLE_RATE * 1000.0).reshape(-1)
            if np.max(np.abs(itd_ms)) >= MAX_ITD_MS or not np.all(np.isfinite(itd_ms)):
                itd_ms = None  # implausible track; drop rather than poison the pack
    return left.reshape(-1, HRIR_LENGTH), right.reshape(-1, HRIR_LENGTH), itd_ms


def convert(
    cipic_root: str | Path,
    out_dir: str | Path,
    training_subjects: list[str] | None = None,
    generic_subject: str = "021",
    n_training: int = 30,
    n_test: int = 7,
) -> ConversionReport:
    """Convert every subject folder found under ``cipic_root``."""
    cipic_root = Path(cipic_root)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = ConversionReport()
    anthro_table = _load_anthro_table(cipic_root)

    entries = []
    anthro_rows = []
    converted_ids = []
    for subject_dir in _subject_dirs(cipic_root):
        sid = subject_dir.name.split("_", 1)[1]
        mat_path = subject_dir / "hrir_final.mat"
        if not mat_path.is_file():
            report.subjects_skipped.append({"id": sid, "reason": "no hrir_final.mat"})
            continue
        try:
            left, right, itd_ms = _read_hrirs(mat_path)
        except Exception as exc:
            report.subjects_skipped.append({"id": sid, "reason": str(exc)})
            continue

        files = {"left": f"{sid}_L.f32", "right": f"{sid}_R.f32"}
        left.astype("<f4").tofile(out / files["left"])
        right.astype("<f4").tofile(out / files["right"])
        if itd_ms is not None:
            files["itd"] = f"{sid}_itd.f32"
            itd_ms.astype("<f4").tofile(out / files["itd"])

        values = anthro_table.get(sid, {})
        has_anthro = bool(values)
        if has_anthro:
            anthro_rows.append(
                [sid] + ["" if c not in values else repr(values[c])
                         for c in ANTHRO_CSV_COLUMNS[1:]]
            )
            if _has_full_anthro(values):
                report.full_anthro_subjects += 1
        entries.append({"id": sid, "has_anthro": has_anthro, "files": files})
        converted_ids.append(sid)
        report.subjects_converted += 1

    complete = [
        sid for sid in converted_ids
        if sid in anthro_table and _has_full_anthro(anthro_table[sid])
    ]
    if training_subjects is None:
        training = complete[:n_training]
        test = complete[n_training : n_training + n_test]
    else:
        unknown = set(training_subjects) - set(converted_ids)
        if unknown:
            raise ConversionError(f"training list names unknown subjects {sorted(unknown)}")
        training = list(training_subjects)
        test = [sid for sid in complete if sid not in set(training)][:n_test]

    manifest = {
        "format_version": 1,
        "sample_rate": SAMPLE_RATE,
        "hrir_length": HRIR_LENGTH,
        "subjects": entries,
        "azimuths_deg": AZIMUTHS_DEG,
        "elevations_deg": ELEVATIONS_DEG,
        "training_subjects": training,
        "test_subjects": test,
        "generic_subject_id": generic_subject if generic_subject in converted_ids else None,
        "source": "cipic",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    with open(out / "anthro.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ANTHRO_CSV_COLUMNS)
        writer.writerows(anthro_rows)

    for path in sorted(out.iterdir()):
        if path.is_file():
            report.checksums[path.name] = _sha256(path)
    return report
