import numpy as np
import pytest

from hyperx.errors import ConfigError, DimensionError, FormatError, InputValidationError
from hyperx.model import (
    H2Model,
    ModelConfig,
    VARIANTS,
    deserialize_model,
    serialize_model,
)
from hyperx.tensor import backward, clear_tape, softmax_cross_entropy, tape_scope

from tests.conftest import random_batch, tiny_model_config


@pytest.mark.parametrize("variant", VARIANTS)
def test_forward_shapes_all_variants(variant):
    model = H2Model(tiny_model_config(variant=variant), seed=0)
    batch = random_batch(np.random.default_rng(0), batch=3)
    logits = model.forward(**batch)
    assert logits.shape == (3, 3)
    assert np.isfinite(logits.data).all()


def test_embedding_widths_divisible_by_n():
    cfg = ModelConfig()
    model = H2Model(cfg, seed=0)
    batch = random_batch(np.random.default_rng(1), batch=2)
    emb = model.embed(**batch)
    assert emb.shape == (2, cfg.fusion_input_width())
    assert cfg.fusion_input_width() == 464
    assert cfg.embedding_width("eeg") % cfg.n_eeg == 0
    assert cfg.embedding_width("eeg") == 160
    assert cfg.embedding_width("gsr") == 32


def test_config_rejects_indivisible_fusion_width():
    cfg = tiny_model_config(gsr_width=9)  # embeddings sum to 49, not divisible by 4
    with pytest.raises(ConfigError, match="not divisible by n=4"):
        H2Model(cfg, seed=0)


def test_config_rejects_indivisible_fusion_n():
    cfg = tiny_model_config(fusion_n=3)  # 48 % 3 == 0 but 32 % 3 != 0... widths checked too
    with pytest.raises(ConfigError):
        H2Model(cfg, seed=0)


def test_config_rejects_unknown_variant():
    with pytest.raises(ConfigError, match="variant"):
        H2Model(tiny_model_config(variant="dense"), seed=0)


def test_eval_mode_is_bit_deterministic():
    model = H2Model(tiny_model_config(), seed=1)
    batch = random_batch(np.random.default_rng(2))
    a = model.forward(**batch, train=False).data
    b = model.forward(**batch, train=False).data
    np.testing.assert_array_equal(a, b)


def test_zero_inputs_give_finite_logits():
    model = H2Model(tiny_model_config(), seed=2)
    batch = dict(
        eeg=np.zeros((2, 10, 1280)),
        ecg=np.zeros((2, 3, 1280)),
        gsr=np.zeros((2, 1, 1280)),
        eye=np.zeros((2, 4, 600)),
    )
    logits = model.forward(**batch)
    assert np.isfinite(logits.data).all()


def test_argmax_invariant_to_logit_shift():
    model = H2Model(tiny_model_config(), seed=3)
    batch = random_batch(np.random.default_rng(3), batch=4)
    logits = model.forward(**batch).data
    np.testing.assert_array_equal(np.argmax(logits, axis=1), np.argmax(logits + 11.25, axis=1))


def test_nan_input_rejected():
    model = H2Model(tiny_model_config(), seed=0)
    batch = random_batch(np.random.default_rng(4))
    batch["ecg"][0, 0, 5] = np.nan
    with pytest.raises(InputValidationError, match="ecg"):
        model.forward(**batch)


def test_wrong_channel_count_rejected():
    model = H2Model(tiny_model_config(), seed=0)
    batch = random_batch(np.random.default_rng(5))
    batch["eeg"] = batch["eeg"][:, :9, :]
    with pytest.raises(DimensionError, match="eeg"):
        model.forward(**batch)


@pytest.mark.parametrize("variant", VARIANTS)
def test_gradients_reach_every_parameter(variant):
    model = H2Model(tiny_model_config(variant=variant), seed=4)
    batch = random_batch(np.random.default_rng(6), batch=4)
    labels = np.array([0, 1, 2, 1])
    with tape_scope():
        logits = model.forward(**batch, train=True, rng=np.random.default_rng(8))
        backward(softmax_cross_entropy(logits, labels))
    for name, p in model.named_parameters():
        assert p.grad is not None, f"{name} got no gradient"
        assert np.any(p.grad != 0), f"{name} gradient is all zeros"
    clear_tape()


# ---------------------------------------------------------------------------
# parameter counting
# ---------------------------------------------------------------------------


def test_default_counts_match_layer_formulas():
    cfg = ModelConfig()
    model = H2Model(cfg, seed=0)
    counts = model.count_parameters()
    # EEG encoder: two PHC layers (n^3 + Cout*Cin*K/n + bias) plus two BN pairs
    k, n = cfg.kernel_size, cfg.n_eeg
    c0, (c1, c2) = 10, cfg.eeg_channels
    want_eeg = (n**3 + c1 * c0 * k // n + c1) + (n**3 + c2 * c1 * k // n + c2) + 2 * c1 + 2 * c2
    assert counts["eeg"] == want_eeg
    # GSR encoder: PHM with n=1 plus BN
    want_gsr = (1 + cfg.gsr_width * 1280 + cfg.gsr_width) + 2 * cfg.gsr_width
    assert counts["gsr"] == want_gsr
    # fusion: three PHM layers with n=4
    s = cfg.fusion_input_width()
    w1, w2, w3 = cfg.fusion_widths
    want_fusion = (
        (64 + w1 * s // 4 + w1) + (64 + w2 * w1 // 4 + w2) + (64 + w3 * w2 // 4 + w3)
    )
    assert counts["fusion"] == want_fusion
    assert counts["head"] == 3 * w3 + 3
    assert counts["total"] == sum(v for k_, v in counts.items() if k_ != "total")


def test_filter_part_is_exactly_dense_over_n():
    cfg = ModelConfig()
    model = H2Model(cfg, seed=0)
    for name, enc in [("eeg", model.enc_eeg), ("ecg", model.enc_ecg), ("eye", model.enc_eye)]:
        n = cfg.modality_n(name)
        for _, layer in (("conv1", enc.conv1), ("conv2", enc.conv2)):
            dense_count = layer.c_out * layer.c_in * layer.kernel_size
            assert layer.weight.f.size * n == dense_count


def test_variant_ordering_and_total_range():
    totals = {v: H2Model(ModelConfig(variant=v), seed=0).count_parameters()["total"] for v in VARIANTS}
    assert totals["phc"] < totals["phm"] < totals["conv"] < totals["linear"]
    assert 1_000_000 <= totals["phc"] <= 5_000_000


def test_n1_everywhere_phm_equals_linear_plus_algebra_scalars():
    kwargs = dict(n_eeg=1, n_ecg=1, n_eye=1, n_gsr=1, fusion_n=1)
    phm = H2Model(tiny_model_config(variant="phm", **kwargs), seed=0).count_parameters()
    lin = H2Model(tiny_model_config(variant="linear", **kwargs), seed=0).count_parameters()
    # with n=1 each hypercomplex layer carries exactly one extra scalar (its 1x1x1 A)
    n_hyper_encoder_layers = 2 + 2 + 2 + 1
    for mod in ("eeg", "ecg", "eye", "gsr"):
        layers = {"eeg": 2, "ecg": 2, "eye": 2, "gsr": 1}[mod]
        assert phm[mod] == lin[mod] + layers
    assert phm["total"] == lin["total"] + n_hyper_encoder_layers


def test_share_encoder_algebra_counts_once_and_trains():
    cfg = tiny_model_config(variant="phc", share_encoder_algebra=True)
    model = H2Model(cfg, seed=0)
    assert model.enc_eeg.conv1.weight.a is model.enc_eeg.conv2.weight.a
    shared = tiny_model_config(variant="phc", share_encoder_algebra=True)
    own = tiny_model_config(variant="phc", share_encoder_algebra=False)
    diff = (
        H2Model(own, seed=0).count_parameters()["total"]
        - H2Model(shared, seed=0).count_parameters()["total"]
    )
    # one A per conv encoder is deduplicated (EEG 10^3, ECG 3^3, eye 4^3)
    assert diff == 10**3 + 3**3 + 4**3


# ---------------------------------------------------------------------------
# checkpoint container
# ---------------------------------------------------------------------------


def test_checkpoint_roundtrip_bitexact():
    model = H2Model(tiny_model_config(), seed=5)
    batch = random_batch(np.random.default_rng(7))
    # move BN away from init stats so buffers are exercised
    with tape_scope():
        model.forward(**batch, train=True, rng=np.random.default_rng(0))
    blob = serialize_model(model, extra={"note": 1})
    clone, extra = deserialize_model(blob)
    assert extra == {"note": 1}
    np.testing.assert_array_equal(
        model.forward(**batch).data, clone.forward(**batch).data
    )
    assert serialize_model(clone, extra={"note": 1}) == blob


def test_checkpoint_magic_and_missing_tensor_errors():
    model = H2Model(tiny_model_config(), seed=6)
    blob = serialize_model(model)
    with pytest.raises(FormatError, match="magic"):
        deserialize_model(b"XXXX" + blob[4:])
    truncated = blob[: len(blob) // 2]
    with pytest.raises(Exception):
        deserialize_model(truncated)


def test_checkpoint_restores_running_stats():
    model = H2Model(tiny_model_config(), seed=7)
    batch = random_batch(np.random.default_rng(8), batch=4)
    with tape_scope():
        model.forward(**batch, train=True, rng=np.random.default_rng(1))
    clone, _ = deserialize_model(serialize_model(model))
    np.testing.assert_array_equal(model.enc_eeg.bn1.running_mean, clone.enc_eeg.bn1.running_mean)
    assert np.any(clone.enc_eeg.bn1.running_mean != 0)
