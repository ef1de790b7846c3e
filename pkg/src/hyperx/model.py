"""Hierarchical multimodal classifier built from hypercomplex layers.

Four modality encoders produce fixed-width embeddings that are concatenated
and fused by a stack of hypercomplex multiplication layers, ending in a
dense head that emits 3-class logits.  Each encoder's hypercomplex
dimension n equals its signal's channel count (EEG 10, ECG 3, eye 4,
GSR 1), so the Kronecker block structure of the weights lines up exactly
with the physical channels and the algebra matrices mix whole channels.

Encoder variants (same widths everywhere, for ablation comparisons):

* ``phc``    two hypercomplex conv stages + BN + ReLU, global average pool
* ``conv``   the same stack with plain real convolutions
* ``phm``    hypercomplex multiplications on the flattened segment
* ``linear`` plain dense layers on the flattened segment

GSR is single-channel, so its encoder is one multiplication layer (n = 1,
i.e. dense) + BN + ReLU in every variant.

Checkpoint container: magic ``H2CK``, u32 version, u32 length + canonical
JSON config block, u32 tensor count, then per tensor: u32 name length,
name bytes, u32 rank, u32 dims, float64 little-endian data.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .dataset import SEGMENT_SHAPES
from .errors import ConfigError, DimensionError, FormatError, InputValidationError
from .layers import BatchNorm1d, Conv1d, Dense, Dropout, PHCLayer, PHMLayer
from .tensor import Tensor, concat, global_avg_pool, relu, reshape

__all__ = [
    "VARIANTS",
    "ModelConfig",
    "H2Model",
    "count_parameters",
    "serialize_model",
    "save_checkpoint",
    "load_checkpoint",
    "deserialize_model",
]

VARIANTS = ("linear", "phm", "conv", "phc")

_MAGIC = b"H2CK"
_VERSION = 1


@dataclass
class ModelConfig:
    variant: str = "phc"
    n_eeg: int = 10
    n_ecg: int = 3
    n_eye: int = 4
    n_gsr: int = 1
    eeg_channels: tuple = (40, 160)
    ecg_channels: tuple = (36, 144)
    eye_channels: tuple = (32, 128)
    kernel_size: int = 7
    stride: int = 2
    padding: int = 3
    eeg_hidden: int = 30
    ecg_hidden: int = 24
    eye_hidden: int = 24
    gsr_width: int = 32
    fusion_n: int = 4
    fusion_widths: tuple = (4096, 1024, 256)
    dropout_p: float = 0.5
    num_classes: int = 3
    share_encoder_algebra: bool = False

    def modality_n(self, name: str) -> int:
        return {"eeg": self.n_eeg, "ecg": self.n_ecg, "eye": self.n_eye, "gsr": self.n_gsr}[name]

    def conv_channels(self, name: str) -> tuple:
        return {"eeg": self.eeg_channels, "ecg": self.ecg_channels, "eye": self.eye_channels}[name]

    def flat_hidden(self, name: str) -> int:
        return {"eeg": self.eeg_hidden, "ecg": self.ecg_hidden, "eye": self.eye_hidden}[name]

    def embedding_width(self, name: str) -> int:
        if name == "gsr":
            return self.gsr_width
        return self.conv_channels(name)[-1]

    def fusion_input_width(self) -> int:
        return sum(self.embedding_width(m) for m in ("eeg", "ecg", "eye", "gsr"))

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown encoder variant {self.variant!r}; choose from {VARIANTS}")
        hyper = self.variant in ("phm", "phc")
        for name in ("eeg", "ecg", "eye"):
            n = self.modality_n(name)
            channels, length = SEGMENT_SHAPES[name]
            if hyper:
                dims = (channels * length, *self.conv_channels(name), self.flat_hidden(name))
                for d in dims:
                    if d % n:
                        raise ConfigError(f"{name} width {d} is not divisible by n={n}")
        width = self.fusion_input_width()
        for d in (width, *self.fusion_widths):
            if d % self.fusion_n:
                raise ConfigError(f"fusion width {d} is not divisible by n={self.fusion_n}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")

    def to_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("eeg_channels", "ecg_channels", "eye_channels", "fusion_widths"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


class _ConvEncoder:
    """[conv -> BN -> ReLU] x 2 -> global average pool -> [B, c2]."""

    def __init__(self, c_in, cfg: ModelConfig, name: str, rng):
        c1, c2 = cfg.conv_channels(name)
        n = cfg.modality_n(name)
        k, s, p = cfg.kernel_size, cfg.stride, cfg.padding
        if cfg.variant == "phc":
            self.conv1 = PHCLayer(c_in, c1, n, k, rng, stride=s, padding=p)
            algebra = self.conv1.weight.a.data if cfg.share_encoder_algebra else None
            self.conv2 = PHCLayer(c1, c2, n, k, rng, stride=s, padding=p, algebra=algebra)
            if cfg.share_encoder_algebra:
                self.conv2.weight.a = self.conv1.weight.a
        else:
            self.conv1 = Conv1d(c_in, c1, k, rng, stride=s, padding=p)
            self.conv2 = Conv1d(c1, c2, k, rng, stride=s, padding=p)
        self.bn1 = BatchNorm1d(c1)
        self.bn2 = BatchNorm1d(c2)

    def forward(self, x: Tensor, train: bool) -> Tensor:
        h = relu(self.bn1(self.conv1(x), train))
        h = relu(self.bn2(self.conv2(h), train))
        return global_avg_pool(h)

    def submodules(self):
        return [("conv1", self.conv1), ("bn1", self.bn1), ("conv2", self.conv2), ("bn2", self.bn2)]


class _FlatEncoder:
    """[layer -> BN -> ReLU] x 2 on the flattened segment -> [B, emb]."""

    def __init__(self, c_in, length, cfg: ModelConfig, name: str, rng):
        d_flat = c_in * length
        hidden = cfg.flat_hidden(name)
        emb = cfg.embedding_width(name)
        n = cfg.modality_n(name)
        if cfg.variant == "phm":
            self.fc1 = PHMLayer(d_flat, hidden, n, rng)
            algebra = self.fc1.weight.a.data if cfg.share_encoder_algebra else None
            self.fc2 = PHMLayer(hidden, emb, n, rng, algebra=algebra)
            if cfg.share_encoder_algebra:
                self.fc2.weight.a = self.fc1.weight.a
        else:
            self.fc1 = Dense(d_flat, hidden, rng)
            self.fc2 = Dense(hidden, emb, rng)
        self.bn1 = BatchNorm1d(hidden)
        self.bn2 = BatchNorm1d(emb)
        self.d_flat = d_flat

    def forward(self, x: Tensor, train: bool) -> Tensor:
        h = reshape(x, (x.shape[0], self.d_flat))
        h = relu(self.bn1(self.fc1(h), train))
        return relu(self.bn2(self.fc2(h), train))

    def submodules(self):
        return [("fc1", self.fc1), ("bn1", self.bn1), ("fc2", self.fc2), ("bn2", self.bn2)]


class _GsrEncoder:
    """Flattened segment -> one multiplication layer -> BN -> ReLU."""

    def __init__(self, length, cfg: ModelConfig, rng):
        self.d_flat = SEGMENT_SHAPES["gsr"][0] * length
        if cfg.variant in ("phm", "phc"):
            self.fc = PHMLayer(self.d_flat, cfg.gsr_width, cfg.n_gsr, rng)
        else:
            self.fc = Dense(self.d_flat, cfg.gsr_width, rng)
        self.bn = BatchNorm1d(cfg.gsr_width)

    def forward(self, x: Tensor, train: bool) -> Tensor:
        h = reshape(x, (x.shape[0], self.d_flat))
        return relu(self.bn(self.fc(h), train))

    def submodules(self):
        return [("fc", self.fc), ("bn", self.bn)]


class _Fusion:
    """[dropout -> PHM -> ReLU] x k -> dropout -> dense head -> logits."""

    def __init__(self, in_width, cfg: ModelConfig, rng):
        self.dropout = Dropout(cfg.dropout_p)
        self.phms = []
        prev = in_width
        for w in cfg.fusion_widths:
            self.phms.append(PHMLayer(prev, w, cfg.fusion_n, rng))
            prev = w
        self.head = Dense(prev, cfg.num_classes, rng)

    def forward(self, h: Tensor, train: bool, rng) -> Tensor:
        for phm in self.phms:
            h = relu(phm(self.dropout(h, train, rng)))
        return self.head(self.dropout(h, train, rng))

    def submodules(self):
        mods = [(f"phm{i + 1}", phm) for i, phm in enumerate(self.phms)]
        mods.append(("head", self.head))
        return mods


class H2Model:
    """Four modality encoders, hypercomplex fusion, dense classifier head."""

    def __init__(self, cfg: ModelConfig | None = None, seed: int = 0):
        self.cfg = cfg or ModelConfig()
        self.cfg.validate()
        rng = np.random.default_rng(seed)
        c = self.cfg
        if c.variant in ("conv", "phc"):
            self.enc_eeg = _ConvEncoder(SEGMENT_SHAPES["eeg"][0], c, "eeg", rng)
            self.enc_ecg = _ConvEncoder(SEGMENT_SHAPES["ecg"][0], c, "ecg", rng)
            self.enc_eye = _ConvEncoder(SEGMENT_SHAPES["eye"][0], c, "eye", rng)
        else:
            self.enc_eeg = _FlatEncoder(*SEGMENT_SHAPES["eeg"], c, "eeg", rng)
            self.enc_ecg = _FlatEncoder(*SEGMENT_SHAPES["ecg"], c, "ecg", rng)
            self.enc_eye = _FlatEncoder(*SEGMENT_SHAPES["eye"], c, "eye", rng)
        self.enc_gsr = _GsrEncoder(SEGMENT_SHAPES["gsr"][1], c, rng)
        self.fusion = _Fusion(c.fusion_input_width(), c, rng)

    # -- forward ------------------------------------------------------------

    def _validate_inputs(self, eeg, ecg, gsr, eye):
        arrays = {"eeg": eeg, "ecg": ecg, "gsr": gsr, "eye": eye}
        batch = None
        for name, arr in arrays.items():
            want = SEGMENT_SHAPES[name]
            if arr.ndim != 3 or arr.shape[1:] != want:
                raise DimensionError(f"{name} batch has shape {arr.shape}, want [B, {want[0]}, {want[1]}]")
            if batch is None:
                batch = arr.shape[0]
            elif arr.shape[0] != batch:
                raise DimensionError(f"{name} batch size {arr.shape[0]} != {batch}")
            if not np.isfinite(arr).all():
                raise InputValidationError(f"{name} input contains non-finite values")

    def embed(self, eeg, ecg, gsr, eye, train: bool = False) -> Tensor:
        """Concatenated encoder embeddings [B, fusion_input_width]."""
        eeg, ecg, gsr, eye = (np.asarray(a, dtype=np.float64) for a in (eeg, ecg, gsr, eye))
        self._validate_inputs(eeg, ecg, gsr, eye)
        parts = [
            self.enc_eeg.forward(Tensor(eeg), train),
            self.enc_ecg.forward(Tensor(ecg), train),
            self.enc_eye.forward(Tensor(eye), train),
            self.enc_gsr.forward(Tensor(gsr), train),
        ]
        return concat(parts, axis=1)

    def forward(self, eeg, ecg, gsr, eye, train: bool = False, rng=None) -> Tensor:
        """Logits [B, num_classes]; deterministic when train=False."""
        return self.fusion.forward(self.embed(eeg, ecg, gsr, eye, train), train, rng)

    __call__ = forward

    def forward_segments(self, segs, idx=None, train: bool = False, rng=None) -> Tensor:
        if idx is None:
            return self.forward(segs.eeg, segs.ecg, segs.gsr, segs.eye, train, rng)
        return self.forward(segs.eeg[idx], segs.ecg[idx], segs.gsr[idx], segs.eye[idx], train, rng)

    # -- parameter registry ---------------------------------------------------

    def _modules(self):
        return [
            ("eeg", self.enc_eeg),
            ("ecg", self.enc_ecg),
            ("eye", self.enc_eye),
            ("gsr", self.enc_gsr),
            ("fusion", self.fusion),
        ]

    def named_parameters(self):
        """Ordered unique (name, Tensor) pairs; shared tensors appear once."""
        out, seen = [], set()
        for mod_name, mod in self._modules():
            for sub_name, sub in mod.submodules():
                for p_name, p in sub.params():
                    if id(p) in seen:
                        continue
                    seen.add(id(p))
                    out.append((f"{mod_name}.{sub_name}.{p_name}", p))
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self):
        out = []
        for mod_name, mod in self._modules():
            for sub_name, sub in mod.submodules():
                for b_name, b in getattr(sub, "buffers", list)() or []:
                    out.append((f"{mod_name}.{sub_name}.{b_name}", b))
        return out

    def count_parameters(self) -> dict:
        """Learnable-scalar counts per module plus the total."""
        counts = {}
        seen = set()
        for mod_name, mod in self._modules():
            for sub_name, sub in mod.submodules():
                bucket = "head" if sub_name == "head" else mod_name
                for _, p in sub.params():
                    if id(p) in seen:
                        continue
                    seen.add(id(p))
                    counts[bucket] = counts.get(bucket, 0) + p.size
        counts["total"] = sum(v for k, v in counts.items())
        return counts


def count_parameters(model: H2Model) -> dict:
    return model.count_parameters()


# ---------------------------------------------------------------------------
# Checkpoint container
# ---------------------------------------------------------------------------


def serialize_model(model: H2Model, extra: dict | None = None) -> bytes:
    """Deterministic binary image of config, parameters and BN buffers."""
    config = {"model": model.cfg.to_dict(), "extra": extra or {}}
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    chunks = [_MAGIC, struct.pack("<I", _VERSION), struct.pack("<I", len(blob)), blob]
    entries = [(n, p.data) for n, p in model.named_parameters()]
    entries += [(n, b) for n, b in model.named_buffers()]
    chunks.append(struct.pack("<I", len(entries)))
    for name, arr in entries:
        nb = name.encode()
        chunks.append(struct.pack("<I", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(chunks)


def deserialize_model(data: bytes) -> tuple[H2Model, dict]:
    if data[:4] != _MAGIC:
        raise FormatError(f"bad checkpoint magic {data[:4]!r}")
    off = 4
    (version,) = struct.unpack_from("<I", data, off)
    off += 4
    if version != _VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    (blob_len,) = struct.unpack_from("<I", data, off)
    off += 4
    config = json.loads(data[off : off + blob_len].decode())
    off += blob_len
    (n_entries,) = struct.unpack_from("<I", data, off)
    off += 4
    tensors = {}
    for _ in range(n_entries):
        (name_len,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off : off + name_len].decode()
        off += name_len
        (rank,) = struct.unpack_from("<I", data, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}I", data, off)
        off += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(dims)
        off += count * 8
        tensors[name] = arr.astype(np.float64)

    model = H2Model(ModelConfig.from_dict(config["model"]), seed=0)
    for name, p in model.named_parameters():
        if name not in tensors:
            raise FormatError(f"checkpoint is missing parameter {name}")
        if tensors[name].shape != p.data.shape:
            raise FormatError(f"parameter {name} has shape {tensors[name].shape}, want {p.data.shape}")
        p.data = tensors.pop(name)
    for name, b in model.named_buffers():
        if name not in tensors:
            raise FormatError(f"checkpoint is missing buffer {name}")
        b[...] = tensors.pop(name)
    if tensors:
        raise FormatError(f"checkpoint has unknown tensors: {sorted(tensors)[:3]}")
    return model, config.get("extra", {})


def save_checkpoint(model: H2Model, path, extra: dict | None = None):
    Path(path).write_bytes(serialize_model(model, extra))


def load_checkpoint(path) -> tuple[H2Model, dict]:
    return deserialize_model(Path(path).read_bytes())
