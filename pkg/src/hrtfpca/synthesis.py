"""End-to-end binaural HRIR generation from anthropometry and direction.

Per ear: the weight networks give the full weight matrix, the direction
networks give the basis column and mean-spectrum value at the target, the
composed log magnitude (weights x column + mean value + global mean) turns
into a minimum-phase HRIR, and the predicted ITD delays the lagging ear.
The generic method instead returns the bundled mannequin measurement; the
per-direction PCA method needs an on-grid target and its trained baseline.
"""

from __future__ import annotations

import json
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dsp
from .dataset import AnthroParams, DatasetError, cipic_grid
from .pca_baseline import OffGridError
from .predictors import (
    EARS,
    PredictorBundle,
    hemisphere_of,
    predict_direction_params,
    validate_direction,
)

METHODS = ("spca", "pca", "generic")


@dataclass(frozen=True)
class SynthRequest:
    anthro: AnthroParams
    az_deg: float
    el_deg: float
    method: str = "spca"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class SynthResult:
    left: np.ndarray
    right: np.ndarray
    itd_ms: float
    log_mag_left: np.ndarray
    log_mag_right: np.ndarray
    az_deg: float
    el_deg: float
    method: str
    bundle_version: int


def _grid_index_or_reject(az_deg: float, el_deg: float, method: str) -> int:
    try:
        return cipic_grid().index_of(az_deg, el_deg)
    except DatasetError:
        raise OffGridError(
            f"off-grid direction (az={az_deg}, el={el_deg}) unsupported by {method}"
        ) from None


def spca_log_magnitude(
    bundle: PredictorBundle,
    anthro: AnthroParams,
    ear: str,
    az_deg: float,
    el_deg: float,
    zero_weights: bool = False,
) -> np.ndarray:
    """Composed log-magnitude spectrum (dB, all 200 bins) for one ear.

    The decomposition lives in the left-ear frame; the right ear queries the
    direction fields at the mirrored azimuth.
    """
    d = bundle.weights.predict(anthro.spectral_vector(ear))
    query_az = az_deg if ear == "left" else -az_deg
    dvspc, hav, hemi = predict_direction_params(bundle, query_az, el_deg)
    if zero_weights:
        return np.full(d[hemi].shape[0], hav) + bundle.mu
    return d[hemi] @ dvspc + hav + bundle.mu


def synthesize(
    bundle: PredictorBundle, req: SynthRequest, *, zero_weights: bool = False
) -> SynthResult:
    """Binaural minimum-phase HRIR pair with the predicted ITD applied."""
    validate_direction(req.az_deg, req.el_deg)

    if req.method == "generic":
        if bundle.generic_hrirs is None:
            raise ValueError("bundle carries no generic-subject measurement")
        idx = _grid_index_or_reject(req.az_deg, req.el_deg, "generic")
        left = bundle.generic_hrirs["left"][idx].copy()
        right = bundle.generic_hrirs["right"][idx].copy()
        return SynthResult(
            left=left,
            right=right,
            itd_ms=float(bundle.generic_itd[idx]),
            log_mag_left=dsp.hrir_to_log_spectrum(left),
            log_mag_right=dsp.hrir_to_log_spectrum(right),
            az_deg=req.az_deg,
            el_deg=req.el_deg,
            method="generic",
            bundle_version=bundle.version,
        )

    if req.method == "pca":
        if bundle.pca_method is None:
            raise ValueError("bundle carries no trained per-direction baseline")
        idx = _grid_index_or_reject(req.az_deg, req.el_deg, "pca")
        log_mags = {
            ear: bundle.pca_method.predict_log_spectrum(
                req.anthro.spectral_vector(ear), idx, ear=ear
            )
            for ear in EARS
        }
    else:
        bundle.require_complete()
        log_mags = {
            ear: spca_log_magnitude(
                bundle, req.anthro, ear, req.az_deg, req.el_deg,
                zero_weights=zero_weights,
            )
            for ear in EARS
        }

    hrirs = {ear: dsp.min_phase_hrir(dsp.log_to_magnitude(log_mags[ear])) for ear in EARS}
    itd = bundle.itd.predict(req.anthro.itd_vector(), req.az_deg, req.el_deg)
    left, right = dsp.apply_itd(hrirs["left"], hrirs["right"], itd, bundle.sample_rate)
    return SynthResult(
        left=left,
        right=right,
        itd_ms=float(itd),
        log_mag_left=log_mags["left"],
        log_mag_right=log_mags["right"],
        az_deg=req.az_deg,
        el_deg=req.el_deg,
        method=req.method,
        bundle_version=bundle.version,
    )


def export_hrir(res: SynthResult, path: str | Path, fmt: str = "f32",
                sample_rate: float = 44100.0) -> Path:
    """Write a stereo HRIR pair plus a JSON sidecar describing it.

    ``f32``: the two channels concatenated channel-major as little-endian
    float32. ``wav``: 2-channel IEEE-float WAV at the dataset rate.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pair = np.stack([res.left, res.right]).astype("<f4")
    if fmt == "f32":
        pair.tofile(path)
    elif fmt == "wav":
        # format tag 3 = WAVE_FORMAT_IEEE_FLOAT
        with wave.open(str(path), "wb") as fh:
            fh.setnchannels(2)
            fh.setsampwidth(4)
            fh.setframerate(int(sample_rate))
            interleaved = pair.T.reshape(-1).copy()
            fh.writeframes(interleaved.tobytes())
        _mark_wav_ieee_float(path)
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    sidecar = {
        "az_deg": res.az_deg,
        "el_deg": res.el_deg,
        "itd_ms": res.itd_ms,
        "method": res.method,
        "bundle_version": res.bundle_version,
        "sample_rate": sample_rate,
        "layout": "channel-major [2][n]" if fmt == "f32" else "wav",
        "samples_per_channel": int(res.left.size),
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=1))
    return path


def _mark_wav_ieee_float(path: Path) -> None:
    # the stdlib writer only emits PCM (tag 1); patch the fmt chunk to tag 3
    data = bytearray(path.read_bytes())
    fmt_at = data.find(b"fmt ")
    if fmt_at == -1:
        raise ValueError("malformed WAV output")
    data[fmt_at + 8 : fmt_at + 10] = (3).to_bytes(2, "little")
    path.write_bytes(bytes(data))


def import_hrir_f32(path: str | Path) -> tuple[np.ndarray, np.ndarray, dict]:
    """Read back an ``f32`` export and its sidecar."""
    sidecar = json.loads(Path(str(path) + ".json").read_text())
    n = sidecar["samples_per_channel"]
    raw = np.fromfile(path, dtype="<f4").astype(float)
    if raw.size != 2 * n:
        raise ValueError(f"{path}: expected {2 * n} samples, found {raw.size}")
    return raw[:n], raw[n:], sidecar
