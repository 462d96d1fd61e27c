"""Synthetic gait/EEG generator.

Stands in for non-distributed walking recordings. Joint angles are a
subject-specific positive-coefficient cosine series of a slowly wandering
gait phase, so each joint has one unambiguous peak per cycle at a known phase
offset (the generator therefore knows ground-truth event times to sub-sample
precision). The right leg repeats the left waveforms half a cycle later.

EEG channels are a linear mixing of the joint angular velocities. The mixing
matrix is a shared base (common neuroanatomy) plus a per-subject perturbation,
and every session applies its own channel gains and slow multiplicative drift;
those two knobs create the cross-subject and cross-session domain shift the
decoder has to survive. Band-limited sensor noise and a common-mode component
(removed exactly by common average referencing) complete the forward model.

Everything is deterministic in (seed, config).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import RawSession
from .errors import ConfigError

LEG_JOINTS = ("hip", "knee", "ankle", "ball")

# per-joint harmonic amplitudes (all positive: the waveform peak stays at the
# joint's phase offset) roughly shaped like sagittal-plane walking traces
_BASE_HARMONICS = {
    "hip": (1.00, 0.25, 0.08, 0.03),
    "knee": (0.80, 0.50, 0.15, 0.05),
    "ankle": (0.60, 0.30, 0.18, 0.06),
    "ball": (0.50, 0.32, 0.14, 0.05),
}


@dataclass
class SynthConfig:
    n_channels: int = 16
    n_joints: int = 6          # bilateral hip/knee/ankle; 8 adds ball-of-foot
    n_sessions: int = 2
    duration_s: float = 120.0
    fs: float = 200.0
    cadence_hz: tuple = (0.85, 1.15)
    wave_var: float = 0.25     # subject waveform perturbation
    mix_var: float = 0.12      # subject mixing-matrix perturbation
    noise_scale: float = 0.6   # band-limited sensor noise RMS (signal is ~unit RMS)
    gain_var: float = 0.08     # per-session channel gain spread
    drift_var: float = 0.05    # slow in-session multiplicative drift
    cm_scale: float = 0.5      # common-mode amplitude (CAR removes it)
    mixing_seed: int = 12345   # shared base mixing matrix, subject-independent

    def validate(self):
        if self.n_joints % 2 != 0 or not 2 <= self.n_joints // 2 <= len(LEG_JOINTS):
            raise ConfigError(f"n_joints must be even in [4, {2 * len(LEG_JOINTS)}], got {self.n_joints}")
        if self.duration_s * self.fs < 4 * self.fs:
            raise ConfigError("duration too short")
        lo, hi = self.cadence_hz
        if not 0 < lo <= hi:
            raise ConfigError(f"bad cadence range {self.cadence_hz}")


def joint_names(cfg: SynthConfig) -> list[str]:
    per_leg = cfg.n_joints // 2
    return [f"{j}_l" for j in LEG_JOINTS[:per_leg]] + [f"{j}_r" for j in LEG_JOINTS[:per_leg]]


def _event_indices(phase: np.ndarray, offset: float) -> np.ndarray:
    """Sample indices where the (monotone) phase crosses offset + 2*pi*k."""
    k = np.floor((phase - offset) / (2 * np.pi))
    steps = np.nonzero(np.diff(k) > 0)[0]  # crossing between i and i+1
    targets = offset + 2 * np.pi * (k[steps] + 1)
    frac = (targets - phase[steps]) / (phase[steps + 1] - phase[steps])
    idx = np.round(steps + frac).astype(int)
    return idx[(idx >= 0) & (idx < len(phase))]


def synthesize_subject(seed: int, cfg: SynthConfig | None = None):
    """Build one subject's sessions plus generator ground truth.

    Returns (sessions, truth): truth[i] holds per-session event indices for
    the four detector event classes, the phase trace, and the mean cycle
    length in samples.
    """
    cfg = cfg or SynthConfig()
    cfg.validate()
    rng = np.random.default_rng(seed)
    base_rng = np.random.default_rng(cfg.mixing_seed)

    per_leg = cfg.n_joints // 2
    t_total = int(round(cfg.duration_s * cfg.fs))
    dt = 1.0 / cfg.fs
    subject_id = f"s{seed:03d}"

    # subject-level draws (order matters for determinism)
    cadence = float(rng.uniform(*cfg.cadence_hz))
    knee_delta = float(rng.uniform(0.3 * np.pi, 0.7 * np.pi))
    extra_offsets = rng.uniform(0.75 * np.pi, 0.95 * np.pi, size=max(0, per_leg - 2))
    amp = np.empty((per_leg, 4))
    for i, name in enumerate(LEG_JOINTS[:per_leg]):
        base = np.array(_BASE_HARMONICS[name])
        amp[i] = base * (1.0 + cfg.wave_var * rng.uniform(-1, 1, size=4))
    mix_base = base_rng.normal(0.0, 1.0, size=(cfg.n_channels, cfg.n_joints)) / np.sqrt(cfg.n_joints)
    mix = mix_base + cfg.mix_var * rng.normal(0.0, 1.0, size=mix_base.shape) / np.sqrt(cfg.n_joints)

    offsets_leg = np.empty(per_leg)
    offsets_leg[0] = 0.0
    offsets_leg[1] = knee_delta
    if per_leg > 2:
        offsets_leg[2:] = extra_offsets
    offsets = np.concatenate([offsets_leg, offsets_leg + np.pi])  # right leg = half cycle later
    harmonics = np.arange(1, 5)

    sessions, truth = [], []
    for s in range(cfg.n_sessions):
        wander_phase = float(rng.uniform(0, 2 * np.pi))
        phase0 = float(rng.uniform(0, 2 * np.pi))
        gains = 1.0 + rng.uniform(-cfg.gain_var, cfg.gain_var, size=(cfg.n_channels, 1))
        drift_phi = rng.uniform(0, 2 * np.pi, size=(cfg.n_channels, 1))
        noise_white = rng.normal(size=(cfg.n_channels, t_total))
        cm_white = rng.normal(size=t_total)

        tgrid = np.arange(t_total) * dt
        freq = cadence * (1.0 + 0.03 * np.sin(2 * np.pi * tgrid / 20.0 + wander_phase))
        phase = phase0 + 2 * np.pi * np.cumsum(freq) * dt
        omega = 2 * np.pi * freq

        amp2 = np.concatenate([amp, amp], axis=0)  # both legs share the waveform
        arg = harmonics[None, :, None] * (phase[None, None, :] - offsets[:, None, None])
        joints = (amp2[:, :, None] * np.cos(arg)).sum(axis=1)
        vel = (amp2[:, :, None] * -np.sin(arg) * harmonics[None, :, None]).sum(axis=1) * omega

        vel_z = (vel - vel.mean(axis=1, keepdims=True)) / vel.std(axis=1, keepdims=True)
        sig = mix @ vel_z
        noise = _bandlimit(noise_white, cfg.fs, 1.0, 45.0)
        noise *= cfg.noise_scale / _rms(noise)
        cm = _bandlimit(cm_white[None, :], cfg.fs, 0.3, 20.0)
        cm *= cfg.cm_scale / _rms(cm)
        drift = 1.0 + cfg.drift_var * np.sin(2 * np.pi * tgrid[None, :] / 60.0 + drift_phi)
        eeg = gains * drift * (sig + noise) + cm

        session_id = f"{subject_id}_r{s}"
        sessions.append(
            RawSession(
                subject_id=subject_id,
                session_id=session_id,
                fs=cfg.fs,
                eeg=eeg.astype(np.float32),
                joints=joints.astype(np.float32),
                channel_names=[f"ch{i:02d}" for i in range(cfg.n_channels)],
                joint_names=joint_names(cfg),
            )
        )
        names = joint_names(cfg)
        events = {
            "hip_l": _event_indices(phase, offsets[names.index("hip_l")]),
            "knee_l": _event_indices(phase, offsets[names.index("knee_l")]),
            "hip_r": _event_indices(phase, offsets[names.index("hip_r")]),
            "knee_r": _event_indices(phase, offsets[names.index("knee_r")]),
        }
        truth.append(
            {
                "events": events,
                "phase": phase,
                "cycle_samples": cfg.fs / cadence,
                "cadence_hz": cadence,
                "knee_delta": knee_delta,
            }
        )
    return sessions, truth


def generate_synthetic_subject(seed: int, cfg: SynthConfig | None = None) -> list[RawSession]:
    """Sessions only (ground truth discarded); deterministic in seed."""
    return synthesize_subject(seed, cfg)[0]


def generate_dataset(out_dir, n_subjects: int = 10, base_seed: int = 0,
                     cfg: SynthConfig | None = None) -> list[str]:
    """Write n_subjects synthetic subjects under out_dir; returns subject ids."""
    from .datamodel import save_session

    cfg = cfg or SynthConfig()
    ids = []
    for i in range(n_subjects):
        sessions = generate_synthetic_subject(base_seed + i, cfg)
        for sess in sessions:
            save_session(sess, f"{out_dir}/{sess.session_id}")
        ids.append(sessions[0].subject_id)
    return ids


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x))))


def _bandlimit(white: np.ndarray, fs: float, f_lo: float, f_hi: float) -> np.ndarray:
    """Shape white noise to a flat band with raised-cosine edges (FFT domain)."""
    n = white.shape[-1]
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    mask = np.ones_like(freqs)
    width = max(f_lo * 0.5, 0.2)
    mask = np.clip((freqs - (f_lo - width)) / width, 0.0, 1.0) * np.clip(
        ((f_hi + width) - freqs) / width, 0.0, 1.0
    )
    spec = np.fft.rfft(white, axis=-1) * mask
    return np.fft.irfft(spec, n=n, axis=-1)
