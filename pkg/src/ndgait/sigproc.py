"""Preprocessing: bandpass filtering, common average referencing, resampling,
and per-joint z-normalization.

Offline filtering is zero-phase (forward-backward Butterworth); the streaming
path uses the same filter causally with persistent state so the real-time
harness sees sample-by-sample semantics.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal

from .errors import ConfigError, InputError


@dataclass
class FilterSpec:
    """Bandpass specification. Defaults: 0.1-48 Hz, 4th-order Butterworth."""

    f_lo: float = 0.1
    f_hi: float = 48.0
    order: int = 4
    mode: str = "offline"  # "offline" (zero-phase) or "streaming" (causal)

    def validate(self, fs: float) -> None:
        if not (0.0 < self.f_lo < self.f_hi):
            raise ConfigError(f"need 0 < f_lo < f_hi, got ({self.f_lo}, {self.f_hi})")
        if self.f_hi >= fs / 2.0:
            raise ConfigError(f"f_hi={self.f_hi} must be below Nyquist {fs / 2.0}")
        if self.mode not in ("offline", "streaming"):
            raise ConfigError(f"unknown filter mode {self.mode!r}")


def _butter_sos(spec: FilterSpec, fs: float):
    return signal.butter(spec.order, [spec.f_lo, spec.f_hi], btype="bandpass", fs=fs, output="sos")


def bandpass(x: np.ndarray, fs: float, spec: FilterSpec | None = None) -> np.ndarray:
    """Bandpass each channel of (C, T). Zero-phase offline, causal in streaming mode."""
    spec = spec or FilterSpec()
    spec.validate(fs)
    x = np.asarray(x)
    sos = _butter_sos(spec, fs)
    # filtfilt needs padding room; 3x the effective impulse-response head is
    # the scipy default heuristic, kept explicit so the precondition is checkable
    min_len = 3 * (2 * spec.order + 1)
    if x.shape[-1] <= min_len:
        raise InputError(f"signal length {x.shape[-1]} too short for order-{spec.order} bandpass")
    if spec.mode == "offline":
        # Symmetrized forward-backward pass: identical magnitude response, but
        # edge transients become exactly reversal-symmetric, so filtering a
        # reversed signal reverses the filtered signal bit-for-bit.
        fwd = signal.sosfiltfilt(sos, x, axis=-1)
        rev = signal.sosfiltfilt(sos, x[..., ::-1], axis=-1)[..., ::-1]
        return 0.5 * (fwd + rev)
    return signal.sosfilt(sos, x, axis=-1)


class StreamingBandpass:
    """Causal bandpass with persistent per-channel state for chunked input."""

    def __init__(self, n_channels: int, fs: float, spec: FilterSpec | None = None):
        spec = spec or FilterSpec(mode="streaming")
        spec.validate(fs)
        self.sos = _butter_sos(spec, fs)
        zi = signal.sosfilt_zi(self.sos)  # (n_sections, 2)
        self.zi = np.repeat(zi[:, None, :], n_channels, axis=1) * 0.0

    def push(self, chunk: np.ndarray) -> np.ndarray:
        """Filter a (C, n) chunk, carrying filter state across calls."""
        out, self.zi = signal.sosfilt(self.sos, chunk, axis=-1, zi=self.zi)
        return out


def common_average_reference(eeg: np.ndarray) -> np.ndarray:
    """Subtract the instantaneous across-channel mean from every channel."""
    eeg = np.asarray(eeg)
    if eeg.ndim != 2 or eeg.shape[0] < 2:
        raise InputError("common average reference needs at least 2 channels")
    return eeg - eeg.mean(axis=0, keepdims=True)


def resample(x: np.ndarray, fs_in: float, fs_out: float) -> np.ndarray:
    """Polyphase anti-aliased resampling of (C, T) to T_out = round(T*fs_out/fs_in)."""
    if fs_in <= 0 or fs_out <= 0:
        raise ConfigError("sampling rates must be positive")
    x = np.asarray(x)
    t_out = int(round(x.shape[-1] * fs_out / fs_in))
    if fs_in == fs_out:
        return x.copy()
    frac = Fraction(fs_out / fs_in).limit_denominator(1000)
    up, down = frac.numerator, frac.denominator
    y = signal.resample_poly(x, up, down, axis=-1, window=("kaiser", 8.0))
    # resample_poly yields ceil(T*up/down) samples; trim to the contract length
    if y.shape[-1] > t_out:
        y = y[..., :t_out]
    elif y.shape[-1] < t_out:
        pad = [(0, 0)] * (y.ndim - 1) + [(0, t_out - y.shape[-1])]
        y = np.pad(y, pad, mode="edge")
    return y


def znorm_joints(joints: np.ndarray):
    """Zero-mean unit-variance per joint row.

    Zero-variance rows are recorded with std 0 but divided by 1, so constant
    rows come out all-zero instead of raising. Returns (normed, means, stds)
    so the transform can be inverted or reapplied to held-out data.
    """
    joints = np.asarray(joints)
    if joints.ndim != 2 or joints.shape[-1] < 2:
        raise InputError("znorm_joints expects (J, T) with T >= 2")
    means = joints.mean(axis=1)
    stds = joints.std(axis=1)
    divisors = np.where(stds == 0.0, 1.0, stds)
    normed = (joints - means[:, None]) / divisors[:, None]
    return normed, means, stds


def apply_znorm(joints: np.ndarray, means: np.ndarray, stds: np.ndarray) -> np.ndarray:
    """Apply previously computed statistics (train stats reused at test time)."""
    divisors = np.where(np.asarray(stds) == 0.0, 1.0, stds)
    return (np.asarray(joints) - np.asarray(means)[:, None]) / np.asarray(divisors)[:, None]


def invert_znorm(normed: np.ndarray, means: np.ndarray, stds: np.ndarray) -> np.ndarray:
    divisors = np.where(np.asarray(stds) == 0.0, 1.0, stds)
    return np.asarray(normed) * np.asarray(divisors)[:, None] + np.asarray(means)[:, None]
