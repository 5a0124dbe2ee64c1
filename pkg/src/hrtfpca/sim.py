"""Simulated HRTF measurement campaign on the standard interaural-polar grid.

Stands in for a measured database when one is not available: HRIRs are
built from a physically motivated magnitude model (head shadow, pinna
notches, concha resonance, shoulder reflection) driven by per-subject
anthropometry, plus smooth subject-specific structure that anthropometry
cannot explain, ITDs from a spherical-head model, and measurement noise.
Datasets produced here carry ``source="simulated"`` in their manifest.
"""

from __future__ import annotations

import numpy as np

from .dataset import (
    AnthroParams,
    HrtfDataset,
    PinnaParams,
    SubjectRecord,
    cipic_grid,
    subjects_with_full_anthro,
)
from .dsp import log_to_magnitude, min_phase_hrir, mirror_half_spectrum

SPEED_OF_SOUND = 343.0  # m/s
SAMPLE_RATE = 44100.0
HRIR_LENGTH = 200
BASE_DELAY_MS = 0.65  # propagation lead-in before every onset

# population statistics (cm): head width/height/depth, shoulder width,
# cavum concha height/width, fossa height, pinna height/width
ANTHRO_MEAN = {"x1": 14.5, "x2": 21.8, "x3": 20.0, "x12": 45.0,
               "d1": 1.91, "d3": 1.58, "d4": 1.51, "d5": 6.41, "d6": 2.92}
ANTHRO_STD = {"x1": 0.95, "x2": 1.4, "x3": 1.3, "x12": 3.5,
              "d1": 0.18, "d3": 0.22, "d4": 0.23, "d5": 0.51, "d6": 0.27}

IDIO_AZ_ORDERS = 12
IDIO_EL_ORDERS = 16
N_IDIO_MODES = IDIO_AZ_ORDERS * IDIO_EL_ORDERS
IDIO_FREQ_ANCHORS = 9
NOISE_DB = 1.0


def _effective_head_radius_cm(x1: float, x2: float, x3: float) -> float:
    # optimal-sphere fit to head dimensions
    return 0.51 * (x1 / 2) + 0.019 * (x2 / 2) + 0.18 * (x3 / 2) + 3.2


def woodworth_itd_ms(az_deg: np.ndarray, radius_cm: float) -> np.ndarray:
    """Spherical-head ITD; positive when the source is on the right."""
    theta = np.deg2rad(az_deg)
    return (radius_cm / 100.0) / SPEED_OF_SOUND * (theta + np.sin(theta)) * 1000.0


def _direction_vectors(angles: np.ndarray) -> np.ndarray:
    azp = np.deg2rad(angles[:, 0])
    elp = np.deg2rad(angles[:, 1])
    return np.column_stack(
        [np.cos(azp) * np.cos(elp), np.sin(azp), np.cos(azp) * np.sin(elp)]
    )


def _common_base_db(f: np.ndarray) -> np.ndarray:
    # shared entrance resonance and high-frequency rolloff
    return 5.5 * np.exp(-(((f - 4200.0) / 3200.0) ** 2)) - 8.0 * (f / 22050.0) ** 2


def _lowfreq_weight(f: np.ndarray) -> np.ndarray:
    # direction effects vanish toward DC where the head is acoustically small
    return np.clip(f / 700.0, 0.0, 1.0) ** 2


def _nyquist_taper(f: np.ndarray) -> np.ndarray:
    # measurement chains roll off toward Nyquist; fine structure fades with them
    return 1.0 - 0.65 * np.clip((f - 19000.0) / 3050.0, 0.0, 1.0) ** 2


def _idio_direction_modes(angles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Chebyshev-product direction functions and their order-decay weights.

    Returns (modes, decay): modes has shape (M, D); decay scales mode
    amplitude down with combined spatial order so the field has a long but
    fading spectrum of spatial detail.
    """
    u = np.arccos(np.clip(angles[:, 0] / 80.0, -1, 1))
    t = np.arccos(np.clip((angles[:, 1] + 45.0) / 275.625 * 2.0 - 1.0, -1, 1))
    modes = np.empty((N_IDIO_MODES, angles.shape[0]))
    decay = np.empty(N_IDIO_MODES)
    m = 0
    for i in range(IDIO_AZ_ORDERS):
        for j in range(IDIO_EL_ORDERS):
            modes[m] = np.cos(i * u) * np.cos(j * t)
            decay[m] = (1.0 + i + j) ** -0.5
            m += 1
    return modes, decay


def _freq_interp_matrix(f: np.ndarray) -> np.ndarray:
    """Linear interpolation weights from anchor frequencies to all bins, (F, A)."""
    anchors = np.geomspace(500.0, 22050.0, IDIO_FREQ_ANCHORS)
    weights = np.zeros((f.size, IDIO_FREQ_ANCHORS))
    for k, freq in enumerate(f):
        if freq <= anchors[0]:
            weights[k, 0] = 1.0
        elif freq >= anchors[-1]:
            weights[k, -1] = 1.0
        else:
            hi = int(np.searchsorted(anchors, freq))
            lo = hi - 1
            frac = (freq - anchors[lo]) / (anchors[hi] - anchors[lo])
            weights[k, lo] = 1.0 - frac
            weights[k, hi] = frac
    return weights


def _idio_envelope(f: np.ndarray) -> np.ndarray:
    # unexplained inter-subject spread grows with frequency
    return 0.62 + 3.55 * (f / 22050.0) ** 1.1


def _stream(seed: int, subject: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, subject, purpose]))


class _SubjectShape:
    """Sampled geometry for one simulated subject."""

    def __init__(self, rng: np.random.Generator, mannequin: bool = False):
        draw = {}
        for key in ANTHRO_MEAN:
            if mannequin:
                draw[key] = ANTHRO_MEAN[key]
            else:
                draw[key] = float(
                    np.clip(
                        rng.normal(ANTHRO_MEAN[key], ANTHRO_STD[key]),
                        0.35 * ANTHRO_MEAN[key],
                        1.8 * ANTHRO_MEAN[key],
                    )
                )
        if mannequin:
            # small-pinna mannequin configuration
            for key in ("d1", "d3", "d4", "d5", "d6"):
                draw[key] = ANTHRO_MEAN[key] - ANTHRO_STD[key]
        self.head = {k: draw[k] for k in ("x1", "x2", "x3", "x12")}
        asym = 1.0 if mannequin else None
        self.pinna = {}
        for ear in ("left", "right"):
            factor = asym if asym is not None else float(rng.normal(1.0, 0.03))
            self.pinna[ear] = {
                k: max(0.25 * ANTHRO_MEAN[k], draw[k] * factor)
                for k in ("d1", "d3", "d4", "d5", "d6")
            }
        self.radius_cm = _effective_head_radius_cm(
            self.head["x1"], self.head["x2"], self.head["x3"]
        )
        self.itd_asym_ms = 0.0 if mannequin else float(rng.normal(0.0, 0.012))

    def anthro(self) -> AnthroParams:
        return AnthroParams(
            x1=self.head["x1"], x2=self.head["x2"], x3=self.head["x3"],
            x12=self.head["x12"],
            left=PinnaParams(**self.pinna["left"]),
            right=PinnaParams(**self.pinna["right"]),
        )


def _ear_log_magnitude(
    shape: _SubjectShape,
    ear: str,
    angles: np.ndarray,
    f: np.ndarray,
    idio_db: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Designed log-magnitude panel for one ear, shape (D, F) in dB."""
    d = angles.shape[0]
    vec = _direction_vectors(angles)
    ear_sign = -1.0 if ear == "left" else 1.0
    cosinc = ear_sign * vec[:, 1]  # 1 toward this ear, -1 shadowed
    el = angles[:, 1]
    pinna = shape.pinna[ear]
    w_low = _lowfreq_weight(f)[None, :]

    out = np.zeros((d, f.size))

    # head shadow / interaural level difference, growing with frequency;
    # the directivity sharpens with frequency so the pattern is not a
    # single fixed dipole across all bins
    shadow_gain = (3.8 + 13.0 * np.sqrt(f / 22050.0)) * (shape.radius_cm / 8.9) ** 1.8
    sharp = 0.85 + 0.5 * (f / 22050.0)
    directivity = np.sign(cosinc)[:, None] * np.abs(cosinc)[:, None] ** sharp[None, :]
    out += directivity * shadow_gain[None, :]
    # diffraction ripple on the shadowed side
    tau_head = 2.0 * shape.radius_cm / 100.0 / SPEED_OF_SOUND
    out += (
        1.2
        * np.maximum(0.0, -cosinc)[:, None]
        * np.sin(2 * np.pi * f * tau_head + 1.3)[None, :]
    )

    # elevation-tracking pinna notch (front hemisphere carries the sharp cue)
    front = el <= 90.0
    el_eff = np.where(front, el, 180.0 - el)
    el_eff = np.clip(el_eff, -45.0, 90.0)
    hemi_w = np.where(front, 1.0, 0.45)
    fc = (6000.0 + 42.0 * el_eff) * (6.4 / pinna["d5"]) ** 2.2
    depth = (11.0 + 25.0 * np.maximum(0.0, cosinc)) * hemi_w * (pinna["d1"] / 1.91) ** 0.8
    sigma = 0.12 * fc + 500.0
    out -= depth[:, None] * np.exp(
        -(((f[None, :] - fc[:, None]) / sigma[:, None]) ** 2)
    )
    # secondary fossa notch
    fc2 = 1.55 * fc * (1.51 / pinna["d4"]) ** 1.4
    out -= (0.5 * depth)[:, None] * np.exp(
        -(((f[None, :] - fc2[:, None]) / (1.3 * sigma[:, None])) ** 2)
    )

    # concha resonance
    fq = 4300.0 * (1.91 / pinna["d1"]) ** 1.2 * (1.58 / pinna["d3"]) ** 0.5
    gain = (6.0 + 5.5 * np.maximum(0.0, cosinc)) * (pinna["d3"] / 1.58) ** 0.7
    out += gain[:, None] * np.exp(-(((f - fq) / 1400.0) ** 2))[None, :]

    # shoulder reflection comb for elevated sources
    tau_sh = (shape.head["x12"] / 2.0) / 100.0 / SPEED_OF_SOUND
    above = np.maximum(0.0, vec[:, 2])
    out += (
        2.6
        * (shape.head["x12"] / 45.0) ** 1.5
        * above[:, None]
        * (np.cos(2 * np.pi * f * tau_sh) * np.exp(-f / 9000.0))[None, :]
    )

    # broad pinna-size tilt: larger pinnae collect more high-frequency energy
    tilt = 5.5 * (pinna["d6"] / 2.92 - 1.0) + 3.0 * (pinna["d5"] / 6.41 - 1.0)
    out += tilt * (np.sqrt(f / 22050.0) * (1.0 - 0.5 * f / 22050.0))[None, :]
    # head-size low-mid body resonance shift
    body = 4.0 * (shape.head["x3"] / 20.0 - 1.0) + 3.0 * (shape.head["x1"] / 14.5 - 1.0)
    out += body * np.exp(-(((f - 1800.0) / 1500.0) ** 2))[None, :]

    # subject structure not carried by anthropometry, plus measurement noise
    # (noise is correlated over neighboring bins, like magnitude jitter of a
    # windowed measurement, not white across the spectrum)
    out += idio_db
    noise = rng.normal(0.0, NOISE_DB, size=(out.shape[0], out.shape[1] + 2))
    out += noise[:, :-2] * 0.25 + noise[:, 1:-1] * 0.5 + noise[:, 2:] * 0.25
    out = out * w_low * _nyquist_taper(f)[None, :]
    out += _common_base_db(f)[None, :] * np.minimum(1.0, 4.0 * w_low)
    return out


def simulate_subject_panels(
    shape: _SubjectShape, angles: np.ndarray, rng: np.random.Generator
) -> dict[str, np.ndarray]:
    """Log-magnitude panels (D, 101) for both ears of one subject.

    ``rng`` drives only the subject's unexplained field and measurement
    noise; geometry-driven structure is deterministic given ``shape``.
    """
    f = np.arange(101) * (SAMPLE_RATE / HRIR_LENGTH)
    dir_modes, decay = _idio_direction_modes(angles)  # (M, D), (M,)
    interp = _freq_interp_matrix(f)  # (F, A)
    envelope = _idio_envelope(np.geomspace(500.0, 22050.0, IDIO_FREQ_ANCHORS))

    # per-mode coefficients vary smoothly over frequency (anchor interpolation)
    sigma = decay[:, None] * envelope[None, :]  # (M, A)
    coeff_left = rng.normal(size=(N_IDIO_MODES, IDIO_FREQ_ANCHORS)) * sigma
    fresh = rng.normal(size=(N_IDIO_MODES, IDIO_FREQ_ANCHORS)) * sigma
    rho = 0.55  # ears share skull and torso, differ in fine structure
    coeff_right = rho * coeff_left + np.sqrt(1 - rho**2) * fresh

    panels = {}
    for ear, coeff in (("left", coeff_left), ("right", coeff_right)):
        profiles = coeff @ interp.T  # (M, F)
        idio = dir_modes.T @ profiles  # (D, F)
        panels[ear] = _ear_log_magnitude(shape, ear, angles, f, idio, rng)
    return panels


def _fractional_delay(hrirs: np.ndarray, delays_samples: np.ndarray) -> np.ndarray:
    """Causal fractional delay: phase ramp in a padded domain, then truncate.

    Padding keeps the shifted tail from wrapping back to the start (a real
    measurement window simply cuts it), so stored HRIRs stay causal.
    """
    n = hrirs.shape[-1]
    padded = np.concatenate([hrirs, np.zeros_like(hrirs)], axis=-1)
    spectrum = np.fft.fft(padded, axis=-1)
    k = np.fft.fftfreq(2 * n)
    phase = np.exp(-2j * np.pi * k[None, :] * delays_samples[:, None])
    return np.fft.ifft(spectrum * phase, axis=-1).real[..., :n]


def simulate_dataset(
    n_subjects: int = 45,
    seed: int = 1250,
    n_training: int | None = None,
    n_test: int | None = None,
) -> HrtfDataset:
    """Simulate a full measurement campaign on the standard grid.

    Split sizes default to the reference campaign's 30/7 and scale down
    proportionally for smaller cohorts.
    """
    if n_subjects < 3:
        raise ValueError("need at least 3 subjects")
    if n_training is None or n_test is None:
        mannequins = 2 if n_subjects >= 10 else 1
        pool = n_subjects - mannequins
        if n_subjects >= 45:
            n_training, n_test = 30, 7
        else:
            n_test = max(1, round(pool * 7 / 37))
            n_training = max(1, min(pool - n_test, round(pool * 30 / 37)))
    grid = cipic_grid()
    angles = grid.angles()
    rng = np.random.default_rng(seed)

    n_mannequins = 2 if n_subjects >= 10 else 1
    subjects: list[SubjectRecord] = []
    for i in range(n_subjects):
        sid = f"s{i + 1:03d}"
        mannequin = i >= n_subjects - n_mannequins
        # independent streams per subject and purpose, so geometry and the
        # unexplained field can be varied separately in experiments
        shape = _SubjectShape(_stream(seed, i, 1), mannequin=mannequin)
        panels = simulate_subject_panels(shape, angles, _stream(seed, i, 2))

        itd = woodworth_itd_ms(angles[:, 0], shape.radius_cm)
        itd = itd + shape.itd_asym_ms * np.sin(np.deg2rad(angles[:, 0]))
        base = BASE_DELAY_MS * SAMPLE_RATE / 1000.0
        delay_l = base + itd / 2.0 * SAMPLE_RATE / 1000.0
        delay_r = base - itd / 2.0 * SAMPLE_RATE / 1000.0

        hrirs = {}
        for ear, delays in (("left", delay_l), ("right", delay_r)):
            mag = log_to_magnitude(mirror_half_spectrum(panels[ear]))
            hrirs[ear] = _fractional_delay(min_phase_hrir(mag), delays)

        subjects.append(
            SubjectRecord(sid, hrirs["left"], hrirs["right"],
                          anthro=shape.anthro(), itd=itd)
        )

    # mannequins and a few volunteers lack complete anthropometry
    incomplete_humans = n_subjects - n_mannequins - n_training - n_test
    if incomplete_humans < 0:
        raise ValueError("n_training + n_test exceeds the complete-anthro pool")
    human_ids = list(range(n_subjects - n_mannequins))
    drop = _stream(seed, 0, 3).choice(human_ids, size=incomplete_humans, replace=False)
    for j, idx in enumerate(sorted(int(i) for i in drop)):
        a = subjects[idx].anthro
        if j % 2 == 0:
            subjects[idx].anthro = AnthroParams(
                x1=a.x1, x2=a.x2, x3=a.x3, x12=None, left=a.left, right=a.right
            )
        else:
            right = PinnaParams(d1=a.right.d1, d3=a.right.d3, d4=None,
                                d5=a.right.d5, d6=a.right.d6)
            subjects[idx].anthro = AnthroParams(
                x1=a.x1, x2=a.x2, x3=a.x3, x12=a.x12, left=a.left, right=right
            )
    for idx in range(n_subjects - n_mannequins, n_subjects):
        a = subjects[idx].anthro
        right = PinnaParams()  # mannequin right-ear molds were not measured
        subjects[idx].anthro = AnthroParams(
            x1=a.x1, x2=a.x2, x3=a.x3, x12=a.x12, left=a.left, right=right
        )

    ds = HrtfDataset(
        sample_rate=SAMPLE_RATE,
        hrir_length=HRIR_LENGTH,
        subjects=subjects,
        grid=grid,
        generic_subject_id=subjects[-1].subject_id,
        source="simulated",
    )
    complete = subjects_with_full_anthro(ds)
    if len(complete) != n_training + n_test:
        raise AssertionError("incomplete-anthro bookkeeping went wrong")
    ds.training_subjects = tuple(_spread_training_pick(ds, complete, n_training))
    ds.test_subjects = tuple(s for s in complete if s not in set(ds.training_subjects))
    return ds


def _spread_training_pick(ds: HrtfDataset, complete: list[str], n_training: int):
    """Pick training subjects so every parameter's extremes land in training."""
    chosen: list[str] = []

    def add(sid: str):
        if sid not in chosen:
            chosen.append(sid)

    records = {s.subject_id: s.anthro for s in ds.subjects if s.subject_id in set(complete)}
    for field in ("x1", "x2", "x3", "x12"):
        vals = {sid: getattr(a, field) for sid, a in records.items()}
        add(min(vals, key=vals.get))
        add(max(vals, key=vals.get))
    for field in ("d1", "d3", "d4", "d5", "d6"):
        vals = {sid: getattr(a.left, field) for sid, a in records.items()}
        add(min(vals, key=vals.get))
        add(max(vals, key=vals.get))
    for sid in complete:
        if len(chosen) >= n_training:
            break
        add(sid)
    return sorted(chosen[:n_training])
