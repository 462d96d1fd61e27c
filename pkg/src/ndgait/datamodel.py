"""Session/window data model, sliding-window segmentation, subject-wise fold
plans, and the on-disk dataset format.

Dataset layout: one directory per session holding
  meta        UTF-8 JSON (subject_id, session_id, fs, C, J, T_total,
              channel_names, joint_names, format_version)
  eeg.f32     8-byte magic "NDGDATA1" + little-endian float32, row-major (C x T)
  joints.f32  same, (J x T)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    ConfigError,
    EmptySessionError,
    MetaMismatchError,
    TruncatedPayloadError,
)

DATA_MAGIC = b"NDGDATA1"
FORMAT_VERSION = 1
WINDOW = 400  # 2 s at 200 Hz


@dataclass
class RawSession:
    """One subject-session of synchronized EEG (C x T) and joint angles (J x T)."""

    subject_id: str
    session_id: str
    fs: float
    eeg: np.ndarray
    joints: np.ndarray
    channel_names: list[str] = field(default_factory=list)
    joint_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.eeg.shape[1] != self.joints.shape[1]:
            raise MetaMismatchError(
                f"eeg T={self.eeg.shape[1]} and joints T={self.joints.shape[1]} are not synchronized"
            )
        if not self.channel_names:
            self.channel_names = [f"ch{i:02d}" for i in range(self.eeg.shape[0])]
        if not self.joint_names:
            self.joint_names = [f"joint{i}" for i in range(self.joints.shape[0])]

    @property
    def n_channels(self):
        return self.eeg.shape[0]

    @property
    def n_joints(self):
        return self.joints.shape[0]

    @property
    def n_samples(self):
        return self.eeg.shape[1]


@dataclass
class WindowSample:
    """A 2-second aligned EEG/motion pair; arrays are views into the session."""

    eeg: np.ndarray       # (C, 400)
    motion: np.ndarray    # (J, 400)
    session_index: int
    subject_id: str
    t_end: int


@dataclass
class FoldPlan:
    train_subjects: list[str]
    val_subjects: list[str]
    test_subjects: list[str]
    protocol: str  # "kfold" | "loso"

    def validate(self):
        groups = [set(self.train_subjects), set(self.val_subjects), set(self.test_subjects)]
        for i in range(3):
            for j in range(i + 1, 3):
                if groups[i] & groups[j]:
                    raise ConfigError(f"fold plan groups overlap: {groups[i] & groups[j]}")


def segment_windows(session: RawSession, win: int = WINDOW, stride: int = 10,
                    session_index: int = 0) -> list[WindowSample]:
    """Slide a win-length window over the session; the label frame is the
    window's final sample (index t_end). Never crosses session boundaries."""
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    t_total = session.n_samples
    if t_total < win:
        raise EmptySessionError(f"session {session.session_id}: T={t_total} < window {win}")
    count = (t_total - win) // stride + 1
    out = []
    for i in range(count):
        t0 = i * stride
        out.append(
            WindowSample(
                eeg=session.eeg[:, t0 : t0 + win],
                motion=session.joints[:, t0 : t0 + win],
                session_index=session_index,
                subject_id=session.subject_id,
                t_end=t0 + win - 1,
            )
        )
    return out


def make_folds(subjects: list[str], protocol: str, seed: int = 0,
               n_folds: int = 10, exclude: list[str] | None = None) -> list[FoldPlan]:
    """Subject-wise cross-validation plans.

    kfold: subjects are evenly partitioned (in listed order) into n_folds
    groups; each round one group tests, the next group validates, the rest
    train. loso: one test subject per plan, one validation subject drawn
    (seeded) from the remainder. Every subject tests exactly once.
    """
    subjects = [s for s in subjects if not (exclude and s in exclude)]
    rng = np.random.default_rng(seed)
    plans = []
    if protocol == "kfold":
        if len(subjects) < n_folds or len(subjects) % n_folds != 0:
            raise ConfigError(
                f"kfold needs a subject count divisible into {n_folds} groups, got {len(subjects)}"
            )
        size = len(subjects) // n_folds
        groups = [subjects[i * size : (i + 1) * size] for i in range(n_folds)]
        for i in range(n_folds):
            test = groups[i]
            val = groups[(i + 1) % n_folds]
            train = [s for g in groups for s in g if s not in test and s not in val]
            plans.append(FoldPlan(train, val, test, "kfold"))
    elif protocol == "loso":
        if len(subjects) < 3:
            raise ConfigError(f"loso needs at least 3 subjects, got {len(subjects)}")
        for i, test_subject in enumerate(subjects):
            rest = [s for s in subjects if s != test_subject]
            val = rest[int(rng.integers(len(rest)))]
            train = [s for s in rest if s != val]
            plans.append(FoldPlan(train, [val], [test_subject], "loso"))
    else:
        raise ConfigError(f"unknown protocol {protocol!r}")
    for p in plans:
        p.validate()
    return plans


# ---------------------------------------------------------------------------
# on-disk format
# ---------------------------------------------------------------------------


def _write_blob(path: Path, arr: np.ndarray):
    with open(path, "wb") as fh:
        fh.write(DATA_MAGIC)
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_blob(path: Path, rows: int, cols: int) -> np.ndarray:
    raw = path.read_bytes()
    if raw[: len(DATA_MAGIC)] != DATA_MAGIC:
        raise BadMagicError(f"{path}: expected magic {DATA_MAGIC!r}")
    payload = raw[len(DATA_MAGIC) :]
    expected = rows * cols * 4
    if len(payload) < expected:
        raise TruncatedPayloadError(f"{path}: payload {len(payload)} B < expected {expected} B")
    if len(payload) > expected:
        raise MetaMismatchError(f"{path}: payload {len(payload)} B > expected {expected} B")
    return np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()


def save_session(session: RawSession, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "subject_id": session.subject_id,
        "session_id": session.session_id,
        "fs": session.fs,
        "C": session.n_channels,
        "J": session.n_joints,
        "T_total": session.n_samples,
        "channel_names": list(session.channel_names),
        "joint_names": list(session.joint_names),
        "format_version": FORMAT_VERSION,
    }
    (path / "meta").write_text(json.dumps(meta, indent=1), encoding="utf-8")
    _write_blob(path / "eeg.f32", session.eeg)
    _write_blob(path / "joints.f32", session.joints)


def load_session(path) -> RawSession:
    path = Path(path)
    try:
        meta = json.loads((path / "meta").read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MetaMismatchError(f"{path}/meta: invalid JSON ({exc})") from exc
    for key in ("subject_id", "session_id", "fs", "C", "J", "T_total"):
        if key not in meta:
            raise MetaMismatchError(f"{path}/meta: missing field {key!r}")
    c, j, t = int(meta["C"]), int(meta["J"]), int(meta["T_total"])
    if len(meta.get("channel_names", [])) not in (0, c):
        raise MetaMismatchError(f"{path}/meta: {len(meta['channel_names'])} channel names for C={c}")
    if len(meta.get("joint_names", [])) not in (0, j):
        raise MetaMismatchError(f"{path}/meta: {len(meta['joint_names'])} joint names for J={j}")
    eeg = _read_blob(path / "eeg.f32", c, t)
    joints = _read_blob(path / "joints.f32", j, t)
    return RawSession(
        subject_id=meta["subject_id"],
        session_id=meta["session_id"],
        fs=float(meta["fs"]),
        eeg=eeg,
        joints=joints,
        channel_names=list(meta.get("channel_names", [])),
        joint_names=list(meta.get("joint_names", [])),
    )


def list_sessions(root) -> list[Path]:
    """Session directories under root (those containing a meta file), sorted."""
    root = Path(root)
    return sorted(p.parent for p in root.glob("*/meta"))
