import json

import numpy as np
import pytest

from hyperx.dataset import (
    SegmentSet,
    SyntheticSpec,
    TrialDataset,
    augment_segments,
    generate_synthetic,
    load_dataset,
    load_segments,
    manifest_hash,
    phase_oracle_labels,
    save_dataset,
    save_segments,
    segment_phase_oracle,
    split_segments,
    stratified_split,
)
from hyperx.errors import FormatError, IntegrityError, StratificationError
from hyperx.sigproc import preprocess_dataset


SMALL = SyntheticSpec(num_subjects=2, trials_per_subject=9, seed=3, noise_level=0.0, blink_rate=0.5)


def test_generation_is_deterministic():
    a = generate_synthetic(SMALL)
    b = generate_synthetic(SMALL)
    for ta, tb in zip(a.trials, b.trials):
        np.testing.assert_array_equal(ta.eeg, tb.eeg)
        np.testing.assert_array_equal(ta.eye, tb.eye)
        assert (ta.arousal, ta.valence) == (tb.arousal, tb.valence)


def test_trial_counts_and_balanced_labels():
    data = generate_synthetic(SMALL)
    assert len(data.trials) == 18
    arousal = np.bincount([t.arousal for t in data.trials], minlength=3)
    valence = np.bincount([t.valence for t in data.trials], minlength=3)
    np.testing.assert_array_equal(arousal, [6, 6, 6])
    np.testing.assert_array_equal(valence, [6, 6, 6])


def test_segments_per_trial():
    data = generate_synthetic(SMALL)
    segs = preprocess_dataset(data)
    assert len(segs) == 3 * len(data.trials)


def test_phase_oracle_perfect_at_zero_noise_raw():
    data = generate_synthetic(SMALL)
    for target in ("arousal", "valence"):
        want = np.array([getattr(t, target) for t in data.trials])
        got = phase_oracle_labels(data, target)
        np.testing.assert_array_equal(got, want)


def test_phase_oracle_perfect_after_preprocessing():
    data = generate_synthetic(SMALL)
    spec = SyntheticSpec.from_dict(data.synthetic_spec)
    segs = preprocess_dataset(data)
    for target, freq in (("arousal", spec.arousal_freq), ("valence", spec.valence_freq)):
        got = segment_phase_oracle(segs, target, freq)
        np.testing.assert_array_equal(got, segs.labels(target))


def test_single_channel_spectra_are_class_independent():
    # same seed phases differ per trial, so compare carrier-bin magnitudes
    spec = SyntheticSpec(num_subjects=1, trials_per_subject=9, seed=5, noise_level=0.0, blink_rate=0.0)
    data = generate_synthetic(spec)
    pre = int(256 * spec.pre_trial_ms / 1000)
    mags = []
    for t in data.trials:
        x = t.eeg[0, pre:]
        bins = np.abs(np.fft.rfft(x))
        k = int(spec.arousal_freq * x.size / 256)
        mags.append(bins[k])
    mags = np.array(mags)
    # all classes produce the same per-channel carrier magnitude (f32 rounding)
    assert mags.std() / mags.mean() < 1e-4


# ---------------------------------------------------------------------------
# stratified splitting
# ---------------------------------------------------------------------------


def test_stratified_split_exact_proportions():
    labels = np.array([0] * 50 + [1] * 30 + [2] * 20)
    tr, te = stratified_split(labels, 0.8, seed=0)
    assert len(tr) == 80 and len(te) == 20
    np.testing.assert_array_equal(np.bincount(labels[tr]), [40, 24, 16])
    np.testing.assert_array_equal(np.bincount(labels[te]), [10, 6, 4])
    assert np.intersect1d(tr, te).size == 0


def test_stratified_split_deterministic():
    labels = np.random.default_rng(1).integers(0, 3, 200)
    a = stratified_split(labels, 0.8, seed=42)
    b = stratified_split(labels, 0.8, seed=42)
    np.testing.assert_array_equal(a[0], b[0])
    c = stratified_split(labels, 0.8, seed=43)
    assert not np.array_equal(a[0], c[0])


def test_stratified_split_proportions_random_label_mixes():
    rng = np.random.default_rng(2)
    for _ in range(25):
        counts = rng.integers(5, 60, size=3)
        labels = np.repeat([0, 1, 2], counts)
        rng.shuffle(labels)
        tr, _ = stratified_split(labels, 0.8, seed=int(rng.integers(1e6)))
        got = np.bincount(labels[tr], minlength=3)
        want = np.round(0.8 * counts)
        assert np.abs(got - want).max() <= 1


def test_stratified_split_small_class_error():
    with pytest.raises(StratificationError):
        stratified_split(np.array([0, 0, 0, 1]), 0.8, seed=0)


def test_trial_unit_split_has_no_leakage(tiny_segments):
    tr, te = split_segments(tiny_segments, "arousal", 0.8, seed=0, unit="trial")
    assert set(tr.trial_ids) & set(te.trial_ids) == set()
    assert len(tr) + len(te) == len(tiny_segments)


def test_segment_unit_split_sizes(tiny_segments):
    tr, te = split_segments(tiny_segments, "arousal", 0.8, seed=0, unit="segment")
    assert len(tr) + len(te) == len(tiny_segments)
    assert abs(len(tr) - 0.8 * len(tiny_segments)) <= 3


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------


def _one_segment_set(rng):
    return SegmentSet(
        eeg=rng.standard_normal((2, 10, 1280)),
        ecg=rng.standard_normal((2, 3, 1280)),
        gsr=rng.standard_normal((2, 1, 1280)),
        eye=rng.standard_normal((2, 4, 600)),
        arousal=np.array([0, 2]),
        valence=np.array([1, 1]),
        trial_ids=np.array(["a", "b"]),
        subjects=np.array([0, 0]),
    )


def test_augment_preserves_labels_and_shapes():
    segs = _one_segment_set(np.random.default_rng(3))
    out = augment_segments(segs, np.random.default_rng(0))
    assert out.eeg.shape == segs.eeg.shape
    np.testing.assert_array_equal(out.arousal, segs.arousal)
    np.testing.assert_array_equal(out.valence, segs.valence)


def test_augment_scale_recoverable_and_noise_sized():
    segs = _one_segment_set(np.random.default_rng(4))
    out = augment_segments(segs, np.random.default_rng(1))
    for si in range(2):
        x = segs.eeg[si].ravel()
        y = out.eeg[si].ravel()
        s_hat = float(np.dot(y, x) / np.dot(x, x))  # noise is orthogonal to x in expectation
        assert 0.8 - 0.02 <= s_hat <= 1.2 + 0.02
        residual = y - s_hat * x
        per_channel = residual.reshape(10, 1280).std(axis=1)
        want = 0.05 * segs.eeg[si].std(axis=1)
        np.testing.assert_allclose(per_channel, want, rtol=0.10)


def test_augment_noise_centered():
    segs = _one_segment_set(np.random.default_rng(5))
    out = augment_segments(segs, np.random.default_rng(2))
    diff = out.ecg - segs.ecg * (out.ecg.sum(axis=(1, 2), keepdims=True) / segs.ecg.sum(axis=(1, 2), keepdims=True))
    assert abs(diff.mean()) < 0.01


def test_augment_keeps_blink_markers_exactly():
    segs = _one_segment_set(np.random.default_rng(6))
    segs.eye[0, 1, 5:25] = -1.0
    segs.eye[1, 3, :] = -1.0
    out = augment_segments(segs, np.random.default_rng(3))
    np.testing.assert_array_equal(out.eye[0, 1, 5:25], -1.0)
    np.testing.assert_array_equal(out.eye[1, 3], -1.0)
    assert not np.array_equal(out.eye[0, 0], segs.eye[0, 0])


def test_augment_deterministic_per_rng():
    segs = _one_segment_set(np.random.default_rng(7))
    a = augment_segments(segs, np.random.default_rng(9)).eeg
    b = augment_segments(segs, np.random.default_rng(9)).eeg
    np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------------------
# disk format
# ---------------------------------------------------------------------------


def test_save_load_roundtrip(tmp_path):
    data = generate_synthetic(SMALL)
    root = save_dataset(data, tmp_path / "ds")
    loaded = load_dataset(root)
    assert len(loaded.trials) == len(data.trials)
    for a, b in zip(data.trials, loaded.trials):
        np.testing.assert_array_equal(a.eeg, b.eeg)
        np.testing.assert_array_equal(a.eye, b.eye)
        assert a.trial_id == b.trial_id and a.subject == b.subject
    assert loaded.synthetic_spec == data.synthetic_spec


def test_save_twice_is_byte_identical(tmp_path):
    a = save_dataset(generate_synthetic(SMALL), tmp_path / "a")
    b = save_dataset(generate_synthetic(SMALL), tmp_path / "b")
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    for f in sorted((a / "trials").iterdir()):
        assert f.read_bytes() == (b / "trials" / f.name).read_bytes()
    assert manifest_hash(a) == manifest_hash(b)


def test_truncated_payload_names_trial(tmp_path):
    root = save_dataset(generate_synthetic(SMALL), tmp_path / "ds")
    victim = sorted((root / "trials").iterdir())[2]
    victim.write_bytes(victim.read_bytes()[:-8])
    with pytest.raises(IntegrityError, match=victim.stem):
        load_dataset(root)


def test_missing_payload_file(tmp_path):
    root = save_dataset(generate_synthetic(SMALL), tmp_path / "ds")
    victim = sorted((root / "trials").iterdir())[0]
    victim.unlink()
    with pytest.raises(IntegrityError, match="missing"):
        load_dataset(root)


def test_unknown_modality_rejected(tmp_path):
    root = save_dataset(generate_synthetic(SMALL), tmp_path / "ds")
    manifest = json.loads((root / "manifest.json").read_text())
    manifest["modalities"][0]["name"] = "emg"
    (root / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(FormatError, match="emg"):
        load_dataset(root)


def test_unknown_format_rejected(tmp_path):
    root = save_dataset(generate_synthetic(SMALL), tmp_path / "ds")
    manifest = json.loads((root / "manifest.json").read_text())
    manifest["format"] = "other-v9"
    (root / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(FormatError, match="format"):
        load_dataset(root)


def test_segment_archive_roundtrip(tmp_path, tiny_segments):
    path = tmp_path / "segs.npz"
    save_segments(tiny_segments, path, meta={"origin": "test"})
    loaded, meta = load_segments(path)
    assert meta == {"origin": "test"}
    assert len(loaded) == len(tiny_segments)
    np.testing.assert_allclose(loaded.eeg, tiny_segments.eeg, atol=1e-6)
    np.testing.assert_array_equal(loaded.arousal, tiny_segments.arousal)
