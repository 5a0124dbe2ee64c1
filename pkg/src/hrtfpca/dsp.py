"""Signal-processing primitives for HRIR/HRTF work.

All spectral operations use the plain N-point DFT of the raw HRIR (no zero
padding), so a 200-sample response at 44.1 kHz has 220.5 Hz bin spacing and
101 unique bins (0..100); bins 101..199 mirror 99..1. Functions accept
arrays with arbitrary leading axes and operate on the last axis.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import resample

MAG_FLOOR = 1e-10  # linear magnitude floor before taking logs (-200 dB)
ITD_UPSAMPLE = 4
ONSET_FRACTION = 0.1


class DegenerateDirectionError(ValueError):
    """Direction lies on the interaural axis; the transform is singular there."""


def bin_frequencies_hz(n: int = 200, sample_rate: float = 44100.0) -> np.ndarray:
    """Center frequency of every DFT bin (length n)."""
    return np.arange(n) * (sample_rate / n)


def mirror_half_spectrum(half: np.ndarray) -> np.ndarray:
    """Extend unique bins 0..n/2 to a full conjugate-symmetric length-n axis."""
    return np.concatenate([half, half[..., -2:0:-1]], axis=-1)


def hrir_to_log_spectrum(hrir: np.ndarray) -> np.ndarray:
    """DFT magnitude of an HRIR in dB (20*log10), floored at -200 dB."""
    hrir = np.asarray(hrir, dtype=float)
    if not np.all(np.isfinite(hrir)):
        raise ValueError("HRIR contains non-finite samples")
    mag = np.abs(np.fft.fft(hrir, axis=-1))
    return 20.0 * np.log10(np.maximum(mag, MAG_FLOOR))


def log_to_magnitude(bins_db: np.ndarray) -> np.ndarray:
    return 10.0 ** (np.asarray(bins_db, dtype=float) / 20.0)


def _check_symmetric(mag: np.ndarray) -> None:
    n = mag.shape[-1]
    upper = mag[..., 1 : (n + 1) // 2]
    lower = mag[..., -1 : n // 2 : -1]
    scale = np.maximum(np.max(mag, axis=-1, keepdims=True), MAG_FLOOR)
    if not np.all(np.abs(upper - lower) <= 1e-6 * scale):
        raise ValueError("magnitude spectrum is not conjugate-symmetric")


def min_phase_hrir(mag: np.ndarray) -> np.ndarray:
    """Minimum-phase HRIR with the given DFT magnitude (real-cepstrum method).

    The real cepstrum of log|H| is folded onto its causal part (bins 1..n/2-1
    doubled, 0 and n/2 kept, the rest zeroed), exponentiated back in the
    frequency domain, and inverted. The output magnitude matches the input to
    FFT round-off.
    """
    mag = np.asarray(mag, dtype=float)
    n = mag.shape[-1]
    if n % 2 != 0:
        raise ValueError("even-length spectra only")
    if np.any(mag < 0) or not np.all(np.isfinite(mag)):
        raise ValueError("magnitude must be finite and nonnegative")
    _check_symmetric(mag)
    cep = np.fft.ifft(np.log(np.maximum(mag, MAG_FLOOR)), axis=-1).real
    folded = np.zeros_like(cep)
    folded[..., 0] = cep[..., 0]
    folded[..., 1 : n // 2] = 2.0 * cep[..., 1 : n // 2]
    folded[..., n // 2] = cep[..., n // 2]
    return np.fft.ifft(np.exp(np.fft.fft(folded, axis=-1)), axis=-1).real


def _onset_index(x: np.ndarray) -> int:
    peak = np.max(np.abs(x))
    if peak == 0:
        raise ValueError("silent ear: cannot locate an onset in an all-zero HRIR")
    return int(np.argmax(np.abs(x) >= ONSET_FRACTION * peak))


def extract_itd(left: np.ndarray, right: np.ndarray, sample_rate: float) -> float:
    """Interaural time difference in ms from onset thresholds.

    Each ear's onset is the first sample (after 4x sinc up-sampling) whose
    amplitude reaches 10% of that ear's peak; positive ITD means the sound
    reaches the right ear first.
    """
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    if left.shape != right.shape:
        raise ValueError("left/right HRIRs must have equal length")
    up_l = resample(left, ITD_UPSAMPLE * left.size)
    up_r = resample(right, ITD_UPSAMPLE * right.size)
    onset_l = _onset_index(up_l)
    onset_r = _onset_index(up_r)
    return (onset_l - onset_r) / (ITD_UPSAMPLE * sample_rate) * 1000.0


def apply_itd(
    left: np.ndarray, right: np.ndarray, itd_ms: float, sample_rate: float
) -> tuple[np.ndarray, np.ndarray]:
    """Delay the lagging ear of a minimum-phase pair by the rounded ITD.

    Positive ITD (right ear leads) delays the left channel; the shift is a
    whole number of samples, zero-prefixed with tail truncation.
    """
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    delay = int(round(abs(itd_ms) * sample_rate / 1000.0))
    if delay >= left.size or delay >= right.size:
        raise ValueError(f"ITD delay of {delay} samples exceeds the HRIR length")

    def shifted(x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x)
        out[delay:] = x[: x.size - delay]
        return out

    if delay == 0:
        return left.copy(), right.copy()
    if itd_ms > 0:
        return shifted(left), right.copy()
    return left.copy(), shifted(right)


# ---------------------------------------------------------------------------
# Interaural-polar <-> head-related spherical coordinates.
#
# Both systems share the Cartesian frame x=front, y=right, z=up. A polar
# direction (az', el') has y = sin(az'), so az' is the angle off the median
# plane and el' sweeps front-overhead-rear in [-90, 270). Spherical
# coordinates measure azimuth in the horizontal plane and elevation from it.

_POLE_EPS = 1e-12


def polar_to_spherical(az_deg: float, el_deg: float) -> tuple[float, float]:
    """Interaural-polar (az', el') to head-related spherical (az, el), degrees."""
    azp = np.deg2rad(az_deg)
    elp = np.deg2rad(el_deg)
    if abs(abs(az_deg) - 90.0) < 1e-9:
        raise DegenerateDirectionError(
            f"polar azimuth {az_deg} deg lies on the interaural axis"
        )
    x = np.cos(azp) * np.cos(elp)
    y = np.sin(azp)
    z = np.cos(azp) * np.sin(elp)
    el = np.arcsin(np.clip(z, -1.0, 1.0))
    az = np.arctan2(y, x)
    return float(np.rad2deg(az)), float(np.rad2deg(el))


def spherical_to_polar(az_deg: float, el_deg: float) -> tuple[float, float]:
    """Head-related spherical (az, el) to interaural-polar (az', el'), degrees.

    Satisfies sin(az') = sin(az)cos(el) and tan(el') = tan(el)/cos(az); the
    polar elevation is returned in [-90, 270).
    """
    az = np.deg2rad(az_deg)
    el = np.deg2rad(el_deg)
    x = np.cos(el) * np.cos(az)
    y = np.cos(el) * np.sin(az)
    z = np.sin(el)
    if x * x + z * z < _POLE_EPS:
        raise DegenerateDirectionError(
            f"spherical (az={az_deg}, el={el_deg}) deg lies on the interaural axis"
        )
    azp = float(np.rad2deg(np.arcsin(np.clip(y, -1.0, 1.0))))
    elp = float(np.rad2deg(np.arctan2(z, x)))
    if elp < -90.0:
        elp += 360.0
    return azp, elp
