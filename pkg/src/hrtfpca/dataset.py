"""Portable HRTF dataset: loading, validation, grids, and index splits.

A dataset is a directory holding a ``manifest.json``, one pair of raw
float32 HRIR files per subject (``<id>_L.f32`` / ``<id>_R.f32``, row-major
[direction][sample]), an optional ``<id>_itd.f32`` per subject, and an
``anthro.csv`` table of anthropometric measurements in centimeters.
Direction order is azimuth-major over the measurement grid.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1

# Interaural-polar measurement grid of the reference database:
# 25 azimuths, 50 elevations, 1250 directions per ear.
CIPIC_AZIMUTHS_DEG = (
    -80.0, -65.0, -55.0, -45.0, -40.0, -35.0, -30.0, -25.0, -20.0, -15.0,
    -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0,
    55.0, 65.0, 80.0,
)
CIPIC_ELEVATIONS_DEG = tuple(-45.0 + 5.625 * k for k in range(50))

HEAD_FIELDS = ("x1", "x2", "x3", "x12")
PINNA_FIELDS = ("d1", "d3", "d4", "d5", "d6")

ANTHRO_CSV_COLUMNS = (
    ("subject_id",)
    + HEAD_FIELDS
    + tuple(f"{d}_L" for d in PINNA_FIELDS)
    + tuple(f"{d}_R" for d in PINNA_FIELDS)
)


class DatasetError(Exception):
    """Raised when a dataset directory is malformed or violates an invariant."""


@dataclass(frozen=True)
class DirectionGrid:
    """Ordered interaural-polar measurement grid; index = i_az * n_el + i_el."""

    azimuths_deg: tuple[float, ...]
    elevations_deg: tuple[float, ...]

    @property
    def direction_count(self) -> int:
        return len(self.azimuths_deg) * len(self.elevations_deg)

    def angles(self) -> np.ndarray:
        """All (azimuth, elevation) pairs in direction order, shape (D, 2)."""
        az = np.repeat(self.azimuths_deg, len(self.elevations_deg))
        el = np.tile(self.elevations_deg, len(self.azimuths_deg))
        return np.column_stack([az, el])

    def direction(self, index: int) -> tuple[float, float]:
        n_el = len(self.elevations_deg)
        return self.azimuths_deg[index // n_el], self.elevations_deg[index % n_el]

    def index_of(self, az_deg: float, el_deg: float) -> int:
        """Index of an on-grid direction; DatasetError if off-grid."""
        try:
            i_az = self.azimuths_deg.index(az_deg)
            i_el = self.elevations_deg.index(el_deg)
        except ValueError:
            raise DatasetError(
                f"direction (az={az_deg}, el={el_deg}) is not on the measurement grid"
            ) from None
        return i_az * len(self.elevations_deg) + i_el


def cipic_grid() -> DirectionGrid:
    return DirectionGrid(CIPIC_AZIMUTHS_DEG, CIPIC_ELEVATIONS_DEG)


def is_cipic_grid(grid: DirectionGrid) -> bool:
    ref = cipic_grid()
    return (
        len(grid.azimuths_deg) == 25
        and len(grid.elevations_deg) == 50
        and np.allclose(grid.azimuths_deg, ref.azimuths_deg)
        and np.allclose(grid.elevations_deg, ref.elevations_deg)
    )


def require_cipic_grid(grid: DirectionGrid) -> None:
    if not is_cipic_grid(grid):
        raise DatasetError("pipeline requires the 25x50 interaural-polar CIPIC grid")


@dataclass(frozen=True)
class HemispherePartition:
    """Direction indices split at elevation 90 (front: el <= 90, rear: above)."""

    front_indices: tuple[int, ...]
    rear_indices: tuple[int, ...]


def partition_hemispheres(grid: DirectionGrid) -> HemispherePartition:
    el = grid.angles()[:, 1]
    front = tuple(int(i) for i in np.flatnonzero(el <= 90.0))
    rear = tuple(int(i) for i in np.flatnonzero(el > 90.0))
    return HemispherePartition(front, rear)


def mirror_permutation(grid: DirectionGrid) -> np.ndarray:
    """Direction index map azimuth -> -azimuth (elevation unchanged).

    Requires an azimuth list that is symmetric about zero, as the standard
    grid is; used to fold right-ear measurements into the left-ear frame.
    """
    az = np.asarray(grid.azimuths_deg)
    if not np.allclose(az, -az[::-1]):
        raise DatasetError("grid azimuths are not symmetric; cannot mirror ears")
    n_az = az.size
    n_el = len(grid.elevations_deg)
    az_idx, el_idx = np.divmod(np.arange(grid.direction_count), n_el)
    return (n_az - 1 - az_idx) * n_el + el_idx


@dataclass(frozen=True)
class PinnaParams:
    d1: float | None = None  # cavum concha height
    d3: float | None = None  # cavum concha width
    d4: float | None = None  # fossa height
    d5: float | None = None  # pinna height
    d6: float | None = None  # pinna width

    def is_complete(self) -> bool:
        return all(getattr(self, d) is not None for d in PINNA_FIELDS)


@dataclass(frozen=True)
class AnthroParams:
    """Anthropometric measurements in cm; pinna dimensions stored per ear."""

    x1: float | None = None  # head width
    x2: float | None = None  # head height
    x3: float | None = None  # head depth
    x12: float | None = None  # shoulder width
    left: PinnaParams = field(default_factory=PinnaParams)
    right: PinnaParams = field(default_factory=PinnaParams)

    def __post_init__(self):
        for name in HEAD_FIELDS:
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"anthropometric parameter {name} must be > 0, got {v}")
        for ear_name, pinna in (("left", self.left), ("right", self.right)):
            for d in PINNA_FIELDS:
                v = getattr(pinna, d)
                if v is not None and not v > 0:
                    raise ValueError(
                        f"anthropometric parameter {d} ({ear_name}) must be > 0, got {v}"
                    )

    def is_complete(self) -> bool:
        """True when all nine measurement kinds are present (x2 included)."""
        head_ok = all(getattr(self, n) is not None for n in HEAD_FIELDS)
        return head_ok and self.left.is_complete() and self.right.is_complete()

    def spectral_vector(self, ear: str) -> np.ndarray:
        """The eight spectral-model inputs (x1, x3, x12, d1, d3, d4, d5, d6)."""
        pinna = {"left": self.left, "right": self.right}[ear]
        values = [self.x1, self.x3, self.x12] + [getattr(pinna, d) for d in PINNA_FIELDS]
        if any(v is None for v in values):
            raise ValueError(f"incomplete spectral anthropometry for ear {ear!r}")
        return np.asarray(values, dtype=float)

    def itd_vector(self) -> np.ndarray:
        """The three ITD-model inputs (x1, x2, x3)."""
        values = [self.x1, self.x2, self.x3]
        if any(v is None for v in values):
            raise ValueError("incomplete head dimensions for ITD model")
        return np.asarray(values, dtype=float)


@dataclass
class SubjectRecord:
    subject_id: str
    hrir_left: np.ndarray  # (D, hrir_length)
    hrir_right: np.ndarray
    anthro: AnthroParams | None = None
    itd: np.ndarray | None = None  # (D,) in ms

    def hrir(self, ear: str) -> np.ndarray:
        return {"left": self.hrir_left, "right": self.hrir_right}[ear]


@dataclass
class HrtfDataset:
    sample_rate: float
    hrir_length: int
    subjects: list[SubjectRecord]
    grid: DirectionGrid
    generic_subject_id: str | None = None
    training_subjects: tuple[str, ...] = ()
    test_subjects: tuple[str, ...] = ()
    source: str = "unknown"

    @property
    def subject_ids(self) -> list[str]:
        return [s.subject_id for s in self.subjects]

    def subject(self, subject_id: str) -> SubjectRecord:
        for s in self.subjects:
            if s.subject_id == subject_id:
                return s
        raise KeyError(f"no subject {subject_id!r} in dataset")


def subjects_with_full_anthro(ds: HrtfDataset) -> list[str]:
    """Ids of subjects whose anthropometry has all nine measurement kinds."""
    return [s.subject_id for s in ds.subjects if s.anthro is not None and s.anthro.is_complete()]


@dataclass(frozen=True)
class SplitPlan:
    """Deterministic stride split of 0..m-1 into test / validation / training."""

    train_idx: tuple[int, ...]
    valid_idx: tuple[int, ...]
    test_idx: tuple[int, ...]
    m: int
    test_stride: int
    valid_stride: int


def make_split(m: int, test_stride: int = 4, valid_stride: int = 5) -> SplitPlan:
    """Stride split: test = every ``test_stride``-th index starting at 0, then the
    remainder is re-indexed consecutively and validation takes every
    ``valid_stride``-th of it; the rest is training.
    """
    if m < test_stride * valid_stride:
        raise ValueError(f"m={m} too small for strides {test_stride}/{valid_stride}")
    indices = list(range(m))
    test = indices[0::test_stride]
    remaining = [i for i in indices if i % test_stride != 0]
    valid = remaining[0::valid_stride]
    valid_set = set(valid)
    train = [i for i in remaining if i not in valid_set]
    return SplitPlan(tuple(train), tuple(valid), tuple(test), m, test_stride, valid_stride)


# ---------------------------------------------------------------------------
# Directory layout I/O


def _read_f32(path: Path, expect: tuple[int, ...], context: str) -> np.ndarray:
    if not path.is_file():
        raise DatasetError(f"{context}: missing file {path}")
    raw = np.fromfile(path, dtype="<f4")
    n_expected = int(np.prod(expect))
    if raw.size != n_expected:
        raise DatasetError(
            f"{context}: {path} holds {raw.size} float32 values, expected {n_expected} "
            f"(shape {expect})"
        )
    bad = np.flatnonzero(~np.isfinite(raw))
    if bad.size:
        offset = int(bad[0])
        raise DatasetError(
            f"{context}: non-finite sample in {path} at flat offset {offset} "
            f"(direction {offset // expect[-1] if len(expect) == 2 else offset})"
        )
    return raw.reshape(expect).astype(np.float64)


def _parse_anthro_csv(path: Path) -> dict[str, AnthroParams]:
    if not path.is_file():
        return {}
    table: dict[str, AnthroParams] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(ANTHRO_CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise DatasetError(f"{path}: anthro.csv missing columns {sorted(missing)}")
        for line_no, row in enumerate(reader, start=2):
            def get(col: str) -> float | None:
                cell = (row.get(col) or "").strip()
                if not cell:
                    return None
                try:
                    return float(cell)
                except ValueError:
                    raise DatasetError(f"{path}:{line_no}: bad value {cell!r} in {col}") from None

            try:
                table[row["subject_id"]] = AnthroParams(
                    x1=get("x1"), x2=get("x2"), x3=get("x3"), x12=get("x12"),
                    left=PinnaParams(**{d: get(f"{d}_L") for d in PINNA_FIELDS}),
                    right=PinnaParams(**{d: get(f"{d}_R") for d in PINNA_FIELDS}),
                )
            except ValueError as exc:
                raise DatasetError(f"{path}:{line_no}: {exc}") from None
    return table


def load_dataset(path: str | Path) -> HrtfDataset:
    """Load and validate a portable dataset directory."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise DatasetError(f"missing manifest {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{manifest_path}: invalid JSON ({exc})") from None

    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise DatasetError(f"{manifest_path}: unknown format_version {version!r}")

    grid = DirectionGrid(
        tuple(float(a) for a in manifest["azimuths_deg"]),
        tuple(float(e) for e in manifest["elevations_deg"]),
    )
    d = grid.direction_count
    hrir_length = int(manifest["hrir_length"])
    sample_rate = float(manifest["sample_rate"])
    anthro_table = _parse_anthro_csv(root / "anthro.csv")

    subjects = []
    for entry in manifest["subjects"]:
        sid = entry["id"]
        files = entry.get("files", {})
        ctx = f"subject {sid}"
        left = _read_f32(root / files.get("left", f"{sid}_L.f32"), (d, hrir_length), ctx)
        right = _read_f32(root / files.get("right", f"{sid}_R.f32"), (d, hrir_length), ctx)
        itd = None
        itd_name = files.get("itd")
        if itd_name:
            itd = _read_f32(root / itd_name, (d,), ctx)
            worst = float(np.max(np.abs(itd)))
            if worst >= 1.5:
                raise DatasetError(f"{ctx}: ITD magnitude {worst:.3f} ms exceeds 1.5 ms")
        anthro = anthro_table.get(sid)
        if entry.get("has_anthro") and anthro is None:
            raise DatasetError(f"{ctx}: manifest says has_anthro but anthro.csv has no row")
        subjects.append(SubjectRecord(sid, left, right, anthro=anthro, itd=itd))

    ids = {s.subject_id for s in subjects}
    for key in ("training_subjects", "test_subjects"):
        unknown = set(manifest.get(key, ())) - ids
        if unknown:
            raise DatasetError(f"{manifest_path}: {key} lists unknown subjects {sorted(unknown)}")
    overlap = set(manifest.get("training_subjects", ())) & set(manifest.get("test_subjects", ()))
    if overlap:
        raise DatasetError(f"{manifest_path}: subjects in both splits: {sorted(overlap)}")

    generic = manifest.get("generic_subject_id")
    if generic is not None and generic not in ids:
        raise DatasetError(f"{manifest_path}: generic_subject_id {generic!r} not in dataset")

    return HrtfDataset(
        sample_rate=sample_rate,
        hrir_length=hrir_length,
        subjects=subjects,
        grid=grid,
        generic_subject_id=generic,
        training_subjects=tuple(manifest.get("training_subjects", ())),
        test_subjects=tuple(manifest.get("test_subjects", ())),
        source=manifest.get("source", "unknown"),
    )


def _anthro_row(sid: str, a: AnthroParams) -> list[str]:
    def cell(v: float | None) -> str:
        return "" if v is None else repr(float(v))

    return (
        [sid]
        + [cell(getattr(a, n)) for n in HEAD_FIELDS]
        + [cell(getattr(a.left, d)) for d in PINNA_FIELDS]
        + [cell(getattr(a.right, d)) for d in PINNA_FIELDS]
    )


def save_dataset(ds: HrtfDataset, path: str | Path) -> None:
    """Write a dataset as a portable directory (float32 HRIR blobs + manifest)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for s in ds.subjects:
        files = {"left": f"{s.subject_id}_L.f32", "right": f"{s.subject_id}_R.f32"}
        s.hrir_left.astype("<f4").tofile(root / files["left"])
        s.hrir_right.astype("<f4").tofile(root / files["right"])
        if s.itd is not None:
            files["itd"] = f"{s.subject_id}_itd.f32"
            s.itd.astype("<f4").tofile(root / files["itd"])
        entries.append(
            {"id": s.subject_id, "has_anthro": s.anthro is not None, "files": files}
        )

    manifest = {
        "format_version": FORMAT_VERSION,
        "sample_rate": ds.sample_rate,
        "hrir_length": ds.hrir_length,
        "subjects": entries,
        "azimuths_deg": list(ds.grid.azimuths_deg),
        "elevations_deg": list(ds.grid.elevations_deg),
        "training_subjects": list(ds.training_subjects),
        "test_subjects": list(ds.test_subjects),
        "generic_subject_id": ds.generic_subject_id,
        "source": ds.source,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1))

    with open(root / "anthro.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ANTHRO_CSV_COLUMNS)
        for s in ds.subjects:
            if s.anthro is not None:
                writer.writerow(_anthro_row(s.subject_id, s.anthro))
