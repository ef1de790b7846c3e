"""Multimodal trial container, synthetic generator, splits and augmentation.

Disk layout of a raw dataset directory::

    manifest.json     UTF-8, schema below
    trials/<id>.bin   per-modality concatenated channel-major float32
                      little-endian blocks, in manifest modality order

The manifest lists the modality table (name, channels, rate), the trial
records (id, subject, labels, file, byte length) and optional split
assignments.  Payloads are float32 on disk and float64 in memory.

The synthetic generator stands in for gated recordings: each class label
controls the pairwise phase offsets between channels of the multi-channel
modalities (see ``class_phase_step``), at one carrier frequency per
classification target.  Per-channel amplitude spectra are identical across
classes, so labels are recoverable only from inter-channel relations;
``phase_oracle_labels`` recovers them analytically.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import FormatError, IntegrityError, StratificationError

__all__ = [
    "RAW_MODALITIES",
    "SEGMENT_SHAPES",
    "TRIAL_SECONDS",
    "SEGMENT_SECONDS",
    "TARGET_RATE",
    "EYE_RATE",
    "EEG_CHANNEL_NAMES",
    "RawTrial",
    "TrialDataset",
    "SyntheticSpec",
    "generate_synthetic",
    "class_phase_step",
    "phase_oracle_labels",
    "segment_phase_oracle",
    "SegmentSet",
    "stratified_split",
    "split_segments",
    "augment_segments",
    "save_dataset",
    "load_dataset",
    "manifest_hash",
    "save_segments",
    "load_segments",
]

# (name, channels, native rate). Raw eye data carries left and right eye
# blocks of four quantities each: gaze-x, gaze-y, distance, pupil.
RAW_MODALITIES = (("eeg", 10, 256), ("ecg", 3, 256), ("gsr", 1, 256), ("eye", 8, 60))
EEG_CHANNEL_NAMES = ("F3", "F4", "F5", "F6", "F7", "F8", "T7", "T8", "P7", "P8")

TRIAL_SECONDS = 30
SEGMENT_SECONDS = 10
TARGET_RATE = 128
EYE_RATE = 60

SEGMENT_SHAPES = {
    "eeg": (10, SEGMENT_SECONDS * TARGET_RATE),
    "ecg": (3, SEGMENT_SECONDS * TARGET_RATE),
    "gsr": (1, SEGMENT_SECONDS * TARGET_RATE),
    "eye": (4, SEGMENT_SECONDS * EYE_RATE),
}

_FORMAT_NAME = "hyperx-raw-v1"


@dataclass
class RawTrial:
    """One synchronized recording at native rates, labels in {0, 1, 2}.

    Arrays cover pre_trial_ms of leading context followed by the 30 s trial.
    """

    trial_id: str
    subject: int
    eeg: np.ndarray
    ecg: np.ndarray
    gsr: np.ndarray
    eye: np.ndarray
    arousal: int
    valence: int
    pre_trial_ms: int = 1000

    def validate(self):
        for name, channels, rate in RAW_MODALITIES:
            arr = getattr(self, name)
            want_len = _samples(rate, self.pre_trial_ms)
            if arr.shape != (channels, want_len):
                raise FormatError(
                    f"trial {self.trial_id}: {name} shape {arr.shape} != ({channels}, {want_len})"
                )
        for label_name in ("arousal", "valence"):
            v = getattr(self, label_name)
            if v not in (0, 1, 2):
                raise FormatError(f"trial {self.trial_id}: {label_name}={v} not in {{0,1,2}}")

    def modality(self, name: str) -> np.ndarray:
        return getattr(self, name)


def _samples(rate: int, pre_trial_ms: int) -> int:
    total_ms = pre_trial_ms + TRIAL_SECONDS * 1000
    n = rate * total_ms / 1000.0
    if abs(n - round(n)) > 1e-9:
        raise FormatError(f"pre_trial_ms={pre_trial_ms} gives non-integral sample count at {rate} Hz")
    return int(round(n))


@dataclass
class TrialDataset:
    trials: list[RawTrial]
    pre_trial_ms: int = 1000
    synthetic_spec: dict | None = None
    splits: dict | None = None

    def __len__(self):
        return len(self.trials)


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Deterministic class-coupled multimodal signal generator settings.

    The arousal label sets inter-channel phase offsets at ``arousal_freq``,
    the valence label at ``valence_freq``; label combinations cycle so both
    targets are balanced.  GSR carries no class information (single channel).
    """

    num_subjects: int = 27
    trials_per_subject: int = 20
    seed: int = 0
    noise_level: float = 0.5
    arousal_freq: float = 16.0
    valence_freq: float = 24.0
    amplitude: float = 1.0
    gsr_offset: float = 5.0
    gsr_drift_freq: float = 0.3
    blink_rate: float = 1.0
    blink_ms: float = 150.0
    pre_trial_ms: int = 1000

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def class_phase_step(label: int, n_channels: int) -> float:
    """Adjacent-channel phase increment encoding ``label``.

    For 10-channel EEG the steps are 2*pi*(1+3k)/10: every class's channel
    phasors sum to zero, so the carrier passes through average referencing
    unchanged.  Fewer-channel modalities use steps of k * 2*pi/3.
    """
    if n_channels == 10:
        return 2.0 * math.pi * (1 + 3 * label) / 10.0
    return label * 2.0 * math.pi / 3.0


def _class_signal(t, freq, label, n_channels, phase0, amplitude):
    """Channel c carries phase offset c * class_phase_step at the carrier."""
    offs = np.arange(n_channels)[:, None] * class_phase_step(label, n_channels)
    return amplitude * np.sin(2.0 * math.pi * freq * t[None, :] + phase0 + offs)


def generate_synthetic(spec: SyntheticSpec) -> TrialDataset:
    """Emit RawTrial-format trials; byte-deterministic for a given seed."""
    rng = np.random.default_rng(spec.seed)
    n256 = _samples(256, spec.pre_trial_ms)
    n60 = _samples(60, spec.pre_trial_ms)
    t256 = np.arange(n256) / 256.0
    t60 = np.arange(n60) / 60.0
    blink_len = max(1, int(round(spec.blink_ms / 1000.0 * 60)))

    trials = []
    idx = 0
    for subject in range(spec.num_subjects):
        for _ in range(spec.trials_per_subject):
            arousal = idx % 3
            valence = (idx // 3) % 3

            def tone_pair(t, n_ch):
                pa, pv = rng.uniform(0, 2 * math.pi, size=2)
                return _class_signal(t, spec.arousal_freq, arousal, n_ch, pa, spec.amplitude) + _class_signal(
                    t, spec.valence_freq, valence, n_ch, pv, spec.amplitude
                )

            eeg = tone_pair(t256, 10) + spec.noise_level * rng.standard_normal((10, n256))
            ecg = tone_pair(t256, 3) + spec.noise_level * rng.standard_normal((3, n256))
            gsr = (
                spec.gsr_offset
                + 0.5 * np.sin(2 * math.pi * spec.gsr_drift_freq * t256 + rng.uniform(0, 2 * math.pi))
                + spec.noise_level * rng.standard_normal((1, n256))
            ).reshape(1, n256)
            base = tone_pair(t60, 4)
            eye = np.empty((8, n60))
            eye[0:4] = base + spec.noise_level * rng.standard_normal((4, n60))
            eye[4:8] = base + spec.noise_level * rng.standard_normal((4, n60))
            for block in (slice(0, 4), slice(4, 8)):
                n_blinks = rng.poisson(spec.blink_rate)
                for _ in range(n_blinks):
                    start = int(rng.integers(0, max(1, n60 - blink_len)))
                    eye[block, start : start + blink_len] = -1.0

            trial = RawTrial(
                trial_id=f"s{subject:03d}t{idx:05d}",
                subject=subject,
                eeg=_disk_round(eeg),
                ecg=_disk_round(ecg),
                gsr=_disk_round(gsr),
                eye=_disk_round(eye),
                arousal=arousal,
                valence=valence,
                pre_trial_ms=spec.pre_trial_ms,
            )
            trials.append(trial)
            idx += 1
    return TrialDataset(trials, pre_trial_ms=spec.pre_trial_ms, synthetic_spec=spec.to_dict())


def _disk_round(x: np.ndarray) -> np.ndarray:
    """Round-trip through float32 so in-memory data equals its disk image."""
    return x.astype(np.float32).astype(np.float64)


# ---------------------------------------------------------------------------
# Phase oracle
# ---------------------------------------------------------------------------


def _phase_vote(x: np.ndarray, fs: float, freq: float) -> int:
    """Recover the class from adjacent-channel phase differences at ``freq``."""
    n = x.shape[1]
    k = freq * n / fs
    if abs(k - round(k)) > 1e-6:
        raise ValueError(f"freq {freq} is not an exact DFT bin for length {n} at fs={fs}")
    spectrum = np.fft.rfft(x, axis=1)[:, int(round(k))]
    phases = np.angle(spectrum)
    candidates = [class_phase_step(label, x.shape[0]) for label in range(3)]
    votes = []
    for c in range(x.shape[0] - 1):
        delta = phases[c + 1] - phases[c]
        dist = [abs(math.remainder(delta - theta, 2.0 * math.pi)) for theta in candidates]
        votes.append(int(np.argmin(dist)))
    return int(np.bincount(votes, minlength=3).argmax())


def phase_oracle_labels(ds: TrialDataset, target: str, spec: SyntheticSpec | None = None) -> np.ndarray:
    """Analytic label recovery from raw EEG inter-channel phase differences."""
    spec = spec or SyntheticSpec.from_dict(ds.synthetic_spec)
    freq = spec.arousal_freq if target == "arousal" else spec.valence_freq
    pre = int(round(256 * ds.pre_trial_ms / 1000.0))
    return np.array([_phase_vote(tr.eeg[:, pre:], 256.0, freq) for tr in ds.trials])


def segment_phase_oracle(segs: "SegmentSet", target: str, freq: float) -> np.ndarray:
    """Same oracle on preprocessed 128 Hz EEG segments."""
    return np.array([_phase_vote(segs.eeg[i], float(TARGET_RATE), freq) for i in range(len(segs))])


# ---------------------------------------------------------------------------
# Segments
# ---------------------------------------------------------------------------


@dataclass
class SegmentSet:
    """Fixed-length training samples: EEG [N,10,1280], ECG [N,3,1280],
    GSR [N,1,1280] at 128 Hz and eye [N,4,600] at 60 Hz, with both labels."""

    eeg: np.ndarray
    ecg: np.ndarray
    gsr: np.ndarray
    eye: np.ndarray
    arousal: np.ndarray
    valence: np.ndarray
    trial_ids: np.ndarray
    subjects: np.ndarray

    def __len__(self):
        return self.eeg.shape[0]

    def labels(self, target: str) -> np.ndarray:
        if target not in ("arousal", "valence"):
            raise ValueError(f"target must be arousal or valence, got {target!r}")
        return getattr(self, target)

    def take(self, idx) -> "SegmentSet":
        idx = np.asarray(idx, dtype=np.int64)
        return SegmentSet(
            self.eeg[idx],
            self.ecg[idx],
            self.gsr[idx],
            self.eye[idx],
            self.arousal[idx],
            self.valence[idx],
            self.trial_ids[idx],
            self.subjects[idx],
        )

    def validate_shapes(self):
        for name, shape in SEGMENT_SHAPES.items():
            arr = getattr(self, name)
            if arr.shape[1:] != shape:
                raise FormatError(f"segment array {name} has shape {arr.shape[1:]}, want {shape}")


def stratified_split(labels, train_frac: float = 0.8, seed: int = 0):
    """Split indices so per-class train counts are round(train_frac * n_c).

    Returns (train_idx, test_idx), each sorted, disjoint and exhaustive.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < 2:
            raise StratificationError(f"class {cls} has only {idx.size} item(s); cannot stratify")
        rng.shuffle(idx)
        n_train = int(round(train_frac * idx.size))
        n_train = min(max(n_train, 1), idx.size - 1)
        train.extend(idx[:n_train])
        test.extend(idx[n_train:])
    return np.sort(np.array(train)), np.sort(np.array(test))


def split_segments(
    segs: SegmentSet,
    target: str,
    train_frac: float = 0.8,
    seed: int = 0,
    unit: str = "segment",
):
    """Stratified train/test split of a SegmentSet.

    unit="segment" stratifies individual segments; unit="trial" stratifies
    whole trials so no trial contributes segments to both sides.
    """
    if unit == "segment":
        tr, te = stratified_split(segs.labels(target), train_frac, seed)
        return segs.take(tr), segs.take(te)
    if unit != "trial":
        raise ValueError(f"unit must be 'segment' or 'trial', got {unit!r}")
    trial_ids, first = np.unique(segs.trial_ids, return_index=True)
    trial_labels = segs.labels(target)[first]
    tr_trials, te_trials = stratified_split(trial_labels, train_frac, seed)
    tr_set = set(trial_ids[tr_trials])
    mask = np.array([tid in tr_set for tid in segs.trial_ids])
    return segs.take(np.flatnonzero(mask)), segs.take(np.flatnonzero(~mask))


def augment_segments(segs: SegmentSet, rng: np.random.Generator) -> SegmentSet:
    """Per-segment random scaling plus Gaussian noise; labels unchanged.

    Each modality of each segment is multiplied by s ~ U(0.8, 1.2) and
    perturbed with noise of sigma = 0.05 * per-channel std.  Eye samples
    equal to -1 (blink markers) pass through exactly.
    """
    out = {}
    for name in ("eeg", "ecg", "gsr", "eye"):
        x = getattr(segs, name)
        mask = x == -1.0 if name == "eye" else None
        s = rng.uniform(0.8, 1.2, size=(x.shape[0], 1, 1))
        if mask is None:
            std = x.std(axis=2, keepdims=True)
        else:
            valid = np.where(mask, np.nan, x)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)  # all-blink channels
                std = np.nan_to_num(np.nanstd(valid, axis=2, keepdims=True))
        y = x * s + rng.standard_normal(x.shape) * (0.05 * std)
        if mask is not None:
            y[mask] = -1.0
        out[name] = y
    return SegmentSet(
        out["eeg"], out["ecg"], out["gsr"], out["eye"],
        segs.arousal.copy(), segs.valence.copy(), segs.trial_ids.copy(), segs.subjects.copy(),
    )


# ---------------------------------------------------------------------------
# Disk format
# ---------------------------------------------------------------------------


def save_dataset(ds: TrialDataset, path) -> Path:
    """Write manifest.json + trials/<id>.bin under ``path``."""
    root = Path(path)
    (root / "trials").mkdir(parents=True, exist_ok=True)
    trial_entries = []
    for tr in ds.trials:
        tr.validate()
        blocks = [np.ascontiguousarray(tr.modality(name), dtype="<f4").tobytes() for name, _, _ in RAW_MODALITIES]
        payload = b"".join(blocks)
        rel = f"trials/{tr.trial_id}.bin"
        (root / rel).write_bytes(payload)
        trial_entries.append(
            {
                "id": tr.trial_id,
                "subject": tr.subject,
                "arousal": tr.arousal,
                "valence": tr.valence,
                "file": rel,
                "bytes": len(payload),
            }
        )
    manifest = {
        "schema_version": 1,
        "format": _FORMAT_NAME,
        "modalities": [{"name": n, "channels": c, "rate": r} for n, c, r in RAW_MODALITIES],
        "trial_seconds": TRIAL_SECONDS,
        "pre_trial_ms": ds.pre_trial_ms,
        "synthetic_spec": ds.synthetic_spec,
        "splits": ds.splits,
        "trials": trial_entries,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return root


def load_dataset(path) -> TrialDataset:
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FormatError(f"no manifest.json under {root}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != _FORMAT_NAME:
        raise FormatError(f"unknown dataset format {manifest.get('format')!r}")
    known = {n for n, _, _ in RAW_MODALITIES}
    listed = [(m["name"], m["channels"], m["rate"]) for m in manifest["modalities"]]
    for name, _, _ in listed:
        if name not in known:
            raise FormatError(f"unknown modality name {name!r} in manifest")
    pre_ms = manifest["pre_trial_ms"]
    trials = []
    for entry in manifest["trials"]:
        fpath = root / entry["file"]
        if not fpath.exists():
            raise IntegrityError(f"trial {entry['id']}: missing payload file {entry['file']}")
        payload = fpath.read_bytes()
        want = sum(c * _samples(r, pre_ms) * 4 for _, c, r in listed)
        if len(payload) != want or entry["bytes"] != want:
            raise IntegrityError(
                f"trial {entry['id']}: payload is {len(payload)} bytes (manifest says {entry['bytes']}), expected {want}"
            )
        arrays = {}
        offset = 0
        for name, channels, rate in listed:
            count = channels * _samples(rate, pre_ms)
            block = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
            arrays[name] = block.astype(np.float64).reshape(channels, -1)
            offset += count * 4
        tr = RawTrial(
            trial_id=entry["id"],
            subject=entry["subject"],
            arousal=entry["arousal"],
            valence=entry["valence"],
            pre_trial_ms=pre_ms,
            **arrays,
        )
        tr.validate()
        trials.append(tr)
    return TrialDataset(
        trials,
        pre_trial_ms=pre_ms,
        synthetic_spec=manifest.get("synthetic_spec"),
        splits=manifest.get("splits"),
    )


def manifest_hash(path) -> str:
    """Content hash of a dataset's manifest, for run provenance."""
    return hashlib.sha256((Path(path) / "manifest.json").read_bytes()).hexdigest()


def save_segments(segs: SegmentSet, path, meta: dict | None = None):
    """Cache preprocessed segments as an .npz archive (float32 payloads)."""
    np.savez(
        path,
        eeg=segs.eeg.astype(np.float32),
        ecg=segs.ecg.astype(np.float32),
        gsr=segs.gsr.astype(np.float32),
        eye=segs.eye.astype(np.float32),
        arousal=segs.arousal.astype(np.int64),
        valence=segs.valence.astype(np.int64),
        trial_ids=segs.trial_ids,
        subjects=segs.subjects.astype(np.int64),
        meta=np.frombuffer(json.dumps(meta or {}, sort_keys=True).encode(), dtype=np.uint8),
    )


def load_segments(path) -> tuple[SegmentSet, dict]:
    with np.load(path, allow_pickle=False) as z:
        try:
            segs = SegmentSet(
                z["eeg"].astype(np.float64),
                z["ecg"].astype(np.float64),
                z["gsr"].astype(np.float64),
                z["eye"].astype(np.float64),
                z["arousal"],
                z["valence"],
                z["trial_ids"],
                z["subjects"],
            )
            meta = json.loads(bytes(z["meta"]).decode() or "{}")
        except KeyError as e:
            raise FormatError(f"segment archive {path} is missing array {e}") from e
    segs.validate_shapes()
    return segs, meta
