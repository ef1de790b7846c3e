"""Zero-phase preprocessing chain for the multimodal recordings.

Pipeline per trial (pure function of the trial and the config):

1. GSR low-pass at 60 Hz, applied at the native 256 Hz rate (a 60 Hz
   corner is too close to the 64 Hz Nyquist of the downsampled signal).
2. Downsample EEG/ECG/GSR 256 -> 128 Hz (anti-alias + decimate).
3. EEG average reference.
4. Band-pass EEG 1-45 Hz, ECG 0.5-45 Hz.
5. Notch 50 Hz on EEG, ECG and GSR.
6. GSR baseline correction against the mean of the 200 ms window that
   precedes trial onset; EEG/ECG need none after high-pass filtering,
   so their pre-trial context is simply dropped.
7. Eye: average left/right per quantity, keeping -1 blink markers.
8. Cut into consecutive 10 s segments.

All IIR filtering is forward-backward (zero phase) with odd-reflection
padding of three filter lengths at each end.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np
from scipy import signal as sps

from .dataset import (
    EYE_RATE,
    SEGMENT_SECONDS,
    TARGET_RATE,
    RawTrial,
    SegmentSet,
    TrialDataset,
)
from .errors import ConfigError, TooShortError

__all__ = [
    "IIRFilterSpec",
    "PreprocessConfig",
    "downsample_by2",
    "average_reference",
    "apply_filter",
    "baseline_correct_gsr",
    "merge_eyes",
    "PreprocessedTrial",
    "preprocess_trial",
    "segment_trial",
    "preprocess_dataset",
    "worker_count",
]


@dataclass
class IIRFilterSpec:
    """kind: 'bandpass', 'lowpass' or 'notch'; corners in Hz."""

    kind: str
    low: float = 0.0
    high: float = 0.0
    order: int = 4
    notch_q: float = 30.0

    def design_sos(self, fs: float) -> np.ndarray:
        nyq = fs / 2.0
        if self.order < 1:
            raise ConfigError(f"filter order must be >= 1, got {self.order}")
        if self.kind == "bandpass":
            if not 0 < self.low < self.high < nyq:
                raise ConfigError(f"bandpass corners ({self.low}, {self.high}) invalid for fs={fs}")
            return sps.butter(self.order, [self.low, self.high], btype="bandpass", fs=fs, output="sos")
        if self.kind == "lowpass":
            if not 0 < self.high < nyq:
                raise ConfigError(f"lowpass corner {self.high} invalid for fs={fs}")
            return sps.butter(self.order, self.high, btype="lowpass", fs=fs, output="sos")
        if self.kind == "notch":
            if not 0 < self.high < nyq:
                raise ConfigError(f"notch frequency {self.high} invalid for fs={fs}")
            b, a = sps.iirnotch(self.high, self.notch_q, fs=fs)
            return sps.tf2sos(b, a)
        raise ConfigError(f"unknown filter kind {self.kind!r}")


def _zero_phase(sos: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Forward-backward filtering with odd padding of 3 filter lengths."""
    padlen = 3 * (2 * sos.shape[0] + 1)
    if x.shape[-1] <= padlen:
        raise TooShortError(f"signal length {x.shape[-1]} <= filter warm-up {padlen}")
    return sps.sosfiltfilt(sos, x, axis=-1, padtype="odd", padlen=padlen)


def apply_filter(x: np.ndarray, spec: IIRFilterSpec, fs: float) -> np.ndarray:
    """Zero-phase application of ``spec`` to each channel of [C, L]."""
    return _zero_phase(spec.design_sos(fs), np.asarray(x, dtype=np.float64))


def downsample_by2(x: np.ndarray, fs: float = 256.0) -> np.ndarray:
    """Anti-alias (8th-order Butterworth at 0.8 * new Nyquist, zero phase)
    then keep every second sample.  Odd trailing samples are truncated."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] % 2:
        x = x[..., :-1]
    cutoff = 0.8 * (fs / 4.0)
    sos = sps.butter(8, cutoff, btype="lowpass", fs=fs, output="sos")
    return _zero_phase(sos, x)[..., ::2]


def average_reference(eeg: np.ndarray) -> np.ndarray:
    """Subtract the instantaneous cross-channel mean from every channel."""
    eeg = np.asarray(eeg, dtype=np.float64)
    return eeg - eeg.mean(axis=0, keepdims=True)


def baseline_correct_gsr(
    gsr: np.ndarray, fs: float, pre_trial_samples: int, baseline_ms: float = 200.0
) -> np.ndarray:
    """Subtract the mean of the window preceding trial onset; return the
    trial portion only."""
    window = int(round(baseline_ms / 1000.0 * fs))
    if pre_trial_samples < window:
        raise TooShortError(
            f"need {window} pre-trial samples for a {baseline_ms} ms baseline, have {pre_trial_samples}"
        )
    base = gsr[:, pre_trial_samples - window : pre_trial_samples].mean(axis=1, keepdims=True)
    return gsr[:, pre_trial_samples:] - base


def merge_eyes(eye: np.ndarray) -> np.ndarray:
    """[8, L] left/right quantity blocks -> [4, L] means; any -1 stays -1.

    -1 marks blinks or tracking loss, which is itself informative, so it
    propagates: if either eye reads -1 the merged sample is -1.
    """
    left, right = eye[0:4], eye[4:8]
    merged = 0.5 * (left + right)
    merged[(left == -1.0) | (right == -1.0)] = -1.0
    return merged


@dataclass
class PreprocessConfig:
    eeg_band: tuple = (1.0, 45.0)
    ecg_band: tuple = (0.5, 45.0)
    gsr_lowpass_hz: float = 60.0
    notch_hz: float = 50.0
    notch_q: float = 30.0
    filter_order: int = 4
    baseline_ms: float = 200.0
    segment_seconds: float = float(SEGMENT_SECONDS)
    segment_overlap_seconds: float = 0.0
    # The 60 Hz GSR corner sits at 94% of the post-downsample Nyquist, so
    # by default it is applied before downsampling, at 256 Hz.
    gsr_lowpass_at_native_rate: bool = True

    def to_dict(self):
        return {f.name: list(v) if isinstance(v := getattr(self, f.name), tuple) else v for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("eeg_band", "ecg_band"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class PreprocessedTrial:
    trial_id: str
    subject: int
    arousal: int
    valence: int
    eeg: np.ndarray  # [10, 30 s * 128]
    ecg: np.ndarray  # [3,  30 s * 128]
    gsr: np.ndarray  # [1,  30 s * 128]
    eye: np.ndarray  # [4,  30 s * 60]


def preprocess_trial(trial: RawTrial, cfg: PreprocessConfig | None = None) -> PreprocessedTrial:
    cfg = cfg or PreprocessConfig()
    pre128 = int(round(TARGET_RATE * trial.pre_trial_ms / 1000.0))
    pre60 = int(round(EYE_RATE * trial.pre_trial_ms / 1000.0))

    gsr = trial.gsr
    gsr_lp = IIRFilterSpec("lowpass", high=cfg.gsr_lowpass_hz, order=cfg.filter_order)
    if cfg.gsr_lowpass_at_native_rate:
        gsr = apply_filter(gsr, gsr_lp, 256.0)

    eeg = downsample_by2(trial.eeg, 256.0)
    ecg = downsample_by2(trial.ecg, 256.0)
    gsr = downsample_by2(gsr, 256.0)
    if not cfg.gsr_lowpass_at_native_rate:
        gsr = apply_filter(gsr, gsr_lp, float(TARGET_RATE))

    eeg = average_reference(eeg)
    eeg = apply_filter(eeg, IIRFilterSpec("bandpass", *cfg.eeg_band, order=cfg.filter_order), float(TARGET_RATE))
    ecg = apply_filter(ecg, IIRFilterSpec("bandpass", *cfg.ecg_band, order=cfg.filter_order), float(TARGET_RATE))

    notch = IIRFilterSpec("notch", high=cfg.notch_hz, notch_q=cfg.notch_q)
    eeg = apply_filter(eeg, notch, float(TARGET_RATE))
    ecg = apply_filter(ecg, notch, float(TARGET_RATE))
    gsr = apply_filter(gsr, notch, float(TARGET_RATE))

    gsr = baseline_correct_gsr(gsr, float(TARGET_RATE), pre128, cfg.baseline_ms)
    eeg = eeg[:, pre128:]
    ecg = ecg[:, pre128:]
    eye = merge_eyes(trial.eye)[:, pre60:]

    return PreprocessedTrial(trial.trial_id, trial.subject, trial.arousal, trial.valence, eeg, ecg, gsr, eye)


def segment_trial(pt: PreprocessedTrial, segment_seconds: float | None = None, overlap_seconds: float = 0.0):
    """Cut a preprocessed trial into fixed-length windows.

    Windows are consecutive and non-overlapping by default (3 per 30 s
    trial); a positive overlap shrinks the hop.  Trials shorter than one
    window emit nothing, with a warning.
    """
    win_s = segment_seconds or float(SEGMENT_SECONDS)
    hop_s = win_s - overlap_seconds
    if hop_s <= 0:
        raise ConfigError(f"overlap {overlap_seconds} s >= window {win_s} s")
    win128, hop128 = int(round(win_s * TARGET_RATE)), int(round(hop_s * TARGET_RATE))
    win60, hop60 = int(round(win_s * EYE_RATE)), int(round(hop_s * EYE_RATE))
    duration = pt.eeg.shape[1] / TARGET_RATE
    n = int((pt.eeg.shape[1] - win128) // hop128) + 1 if pt.eeg.shape[1] >= win128 else 0
    if n * hop_s + overlap_seconds < duration - 1e-9 and n != 3:
        warnings.warn(
            f"trial {pt.trial_id}: {duration:.1f} s yields {n} segment(s) of {win_s:.0f} s",
            stacklevel=2,
        )
    segments = []
    for k in range(n):
        s128, s60 = k * hop128, k * hop60
        segments.append(
            dict(
                eeg=pt.eeg[:, s128 : s128 + win128],
                ecg=pt.ecg[:, s128 : s128 + win128],
                gsr=pt.gsr[:, s128 : s128 + win128],
                eye=pt.eye[:, s60 : s60 + win60],
                arousal=pt.arousal,
                valence=pt.valence,
                trial_id=pt.trial_id,
                subject=pt.subject,
            )
        )
    return segments


def worker_count(requested: int | None = None) -> int:
    """Parallel worker count, capped by the HYPERX_THREADS environment variable."""
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("HYPERX_THREADS")
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def preprocess_dataset(
    ds: TrialDataset, cfg: PreprocessConfig | None = None, workers: int | None = None
) -> SegmentSet:
    """Preprocess and segment every trial; trials run in parallel threads."""
    cfg = cfg or PreprocessConfig()
    n_workers = worker_count(workers)

    def work(trial):
        return segment_trial(preprocess_trial(trial, cfg), cfg.segment_seconds, cfg.segment_overlap_seconds)

    if n_workers > 1 and len(ds.trials) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            per_trial = list(pool.map(work, ds.trials))
    else:
        per_trial = [work(t) for t in ds.trials]

    flat = [seg for segs in per_trial for seg in segs]
    if not flat:
        raise ConfigError("no segments produced; are the trials long enough?")
    return SegmentSet(
        eeg=np.stack([s["eeg"] for s in flat]),
        ecg=np.stack([s["ecg"] for s in flat]),
        gsr=np.stack([s["gsr"] for s in flat]),
        eye=np.stack([s["eye"] for s in flat]),
        arousal=np.array([s["arousal"] for s in flat], dtype=np.int64),
        valence=np.array([s["valence"] for s in flat], dtype=np.int64),
        trial_ids=np.array([s["trial_id"] for s in flat]),
        subjects=np.array([s["subject"] for s in flat], dtype=np.int64),
    )
