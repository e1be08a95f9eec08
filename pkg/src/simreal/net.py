"""Pose-regression network and domain-classifier head.

The network is three valid convolutions with ReLU, a spatial-softmax
feature-point readout, and a linear regressor from feature points to the
label space. A separate linear head maps flattened third-conv activations
to domain logits. Forward passes expose every intermediate needed by the
adaptation losses and by the weak-pairing step.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from simreal import layers
from simreal.errors import DimensionError, FormatError
from simreal.rng import make_rng

MODEL_MAGIC = b"SRAL"
MODEL_FORMAT_VERSION = 1

# Weight std for fresh parameters (variance 0.01); biases start at zero so
# early softmaxes stay near-uniform.
INIT_WEIGHT_STD = 0.1


@dataclass(frozen=True)
class ArchConfig:
    """Architecture hyperparameters; fully determines every tensor shape."""

    in_channels: int = 3
    image_size: int = 64
    conv_channels: tuple = (16, 16, 16)
    kernel_size: int = 5
    conv_strides: tuple = (2, 1, 1)
    n_outputs: int = 2
    n_domains: int = 2
    temperature: float = 1.0

    def conv_output_shapes(self) -> list:
        """[(C,H,W)] after each conv (post-ReLU), chained from the input."""
        h = w = self.image_size
        shapes = []
        for c, s in zip(self.conv_channels, self.conv_strides):
            h = (h - self.kernel_size) // s + 1
            w = (w - self.kernel_size) // s + 1
            if h < 1 or w < 1:
                raise DimensionError("architecture does not fit the input size")
            shapes.append((c, h, w))
        return shapes

    @property
    def alignment_dim(self) -> int:
        c, h, w = self.conv_output_shapes()[0]
        return c * h * w

    @property
    def adaptation_dim(self) -> int:
        c, h, w = self.conv_output_shapes()[2]
        return c * h * w

    @property
    def n_feature_points(self) -> int:
        return 2 * self.conv_channels[2]

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "image_size": self.image_size,
            "conv_channels": list(self.conv_channels),
            "kernel_size": self.kernel_size,
            "conv_strides": list(self.conv_strides),
            "n_outputs": self.n_outputs,
            "n_domains": self.n_domains,
            "temperature": self.temperature,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(
            in_channels=int(d["in_channels"]),
            image_size=int(d["image_size"]),
            conv_channels=tuple(int(c) for c in d["conv_channels"]),
            kernel_size=int(d["kernel_size"]),
            conv_strides=tuple(int(s) for s in d["conv_strides"]),
            n_outputs=int(d["n_outputs"]),
            n_domains=int(d["n_domains"]),
            temperature=float(d["temperature"]),
        )


# Fixed parameter ordering used by serialization, SGD state, and packing.
PARAM_FIELDS = (
    "conv1_w", "conv1_b", "conv2_w", "conv2_b", "conv3_w", "conv3_b",
    "reg_w", "reg_b", "dom_w", "dom_b",
)

# Parameter subsets touched by each optimization phase.
REPR_FIELDS = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "conv3_w", "conv3_b")
TASK_FIELDS = REPR_FIELDS + ("reg_w", "reg_b")
DOMAIN_FIELDS = ("dom_w", "dom_b")


@dataclass
class NetworkParams:
    arch: ArchConfig
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    conv3_w: np.ndarray
    conv3_b: np.ndarray
    reg_w: np.ndarray
    reg_b: np.ndarray
    dom_w: np.ndarray
    dom_b: np.ndarray

    def arrays(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_FIELDS}

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.arch, **{n: v.copy() for n, v in self.arrays().items()})

    def astype(self, dtype) -> "NetworkParams":
        return NetworkParams(
            self.arch, **{n: v.astype(dtype) for n, v in self.arrays().items()}
        )

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays().values())


def init_params(arch: ArchConfig, seed: int, dtype=np.float32) -> NetworkParams:
    """Fresh parameters: weights ~ N(0, 0.01), biases zero, seeded."""
    rng = make_rng(seed)
    k = arch.kernel_size
    chans = (arch.in_channels,) + tuple(arch.conv_channels)

    def w(shape):
        return (rng.standard_normal(shape) * INIT_WEIGHT_STD).astype(dtype)

    def b(n):
        return np.zeros(n, dtype=dtype)

    conv_w = [w((chans[i + 1], chans[i], k, k)) for i in range(3)]
    reg_w = w((arch.n_outputs, arch.n_feature_points))
    dom_w = w((arch.n_domains, arch.adaptation_dim))
    return NetworkParams(
        arch,
        conv1_w=conv_w[0], conv1_b=b(chans[1]),
        conv2_w=conv_w[1], conv2_b=b(chans[2]),
        conv3_w=conv_w[2], conv3_b=b(chans[3]),
        reg_w=reg_w, reg_b=b(arch.n_outputs),
        dom_w=dom_w, dom_b=b(arch.n_domains),
    )


@dataclass
class BatchTrace:
    """Post-ReLU feature maps and readouts for a batch of images."""

    conv1_out: np.ndarray  # [N,C1,H1,W1]
    conv2_out: np.ndarray
    conv3_out: np.ndarray
    feature_points: np.ndarray  # [N, 2*C3]
    predictions: np.ndarray  # [N, n_outputs]

    @property
    def alignment_features(self) -> np.ndarray:
        return self.conv1_out.reshape(self.conv1_out.shape[0], -1)

    @property
    def adaptation_features(self) -> np.ndarray:
        return self.conv3_out.reshape(self.conv3_out.shape[0], -1)


@dataclass
class ForwardTrace:
    """Single-image view of a BatchTrace."""

    conv1_out: np.ndarray
    conv2_out: np.ndarray
    conv3_out: np.ndarray
    alignment_feature: np.ndarray
    adaptation_feature: np.ndarray
    feature_points: np.ndarray
    prediction: np.ndarray


def forward_batch(params: NetworkParams, images: np.ndarray) -> BatchTrace:
    """Run the full network on images [N,C,H,W]."""
    arch = params.arch
    if images.ndim != 4 or images.shape[1:] != (
        arch.in_channels, arch.image_size, arch.image_size,
    ):
        raise DimensionError(
            f"expected images [N,{arch.in_channels},{arch.image_size},"
            f"{arch.image_size}], got {images.shape}"
        )
    s1, s2, s3 = arch.conv_strides
    a1 = layers.relu(layers.conv2d_batch(images, params.conv1_w, params.conv1_b, s1))
    a2 = layers.relu(layers.conv2d_batch(a1, params.conv2_w, params.conv2_b, s2))
    a3 = layers.relu(layers.conv2d_batch(a2, params.conv3_w, params.conv3_b, s3))
    fp = layers.spatial_softmax_batch(a3, arch.temperature)
    pred = layers.linear_batch(fp, params.reg_w, params.reg_b)
    return BatchTrace(a1, a2, a3, fp, pred)


def forward(params: NetworkParams, image: np.ndarray) -> ForwardTrace:
    """Run the network on one image [C,H,W]."""
    if image.ndim != 3:
        raise DimensionError(f"expected image [C,H,W], got shape {image.shape}")
    t = forward_batch(params, image[None])
    return ForwardTrace(
        conv1_out=t.conv1_out[0],
        conv2_out=t.conv2_out[0],
        conv3_out=t.conv3_out[0],
        alignment_feature=t.alignment_features[0],
        adaptation_feature=t.adaptation_features[0],
        feature_points=t.feature_points[0],
        prediction=t.predictions[0],
    )


def predict_from_feature_points(params: NetworkParams, fp: np.ndarray) -> np.ndarray:
    """Regressor readout alone; the prediction depends on the image only
    through the feature points, which this makes testable."""
    return layers.linear_batch(np.atleast_2d(fp), params.reg_w, params.reg_b)[0]


def domain_logits_batch(params: NetworkParams, adaptation_features: np.ndarray) -> np.ndarray:
    return layers.linear_batch(adaptation_features, params.dom_w, params.dom_b)


def domain_logits(params: NetworkParams, trace: ForwardTrace) -> np.ndarray:
    """Pre-softmax domain-classifier logits for one forward trace."""
    f = trace.adaptation_feature
    if f.shape[0] != params.dom_w.shape[1]:
        raise DimensionError(
            f"adaptation feature length {f.shape[0]} != classifier input "
            f"{params.dom_w.shape[1]}"
        )
    return layers.linear(f, params.dom_w, params.dom_b)


def backward_batch(
    params: NetworkParams,
    images: np.ndarray,
    trace: BatchTrace,
    dpred: Optional[np.ndarray] = None,
    dadapt: Optional[np.ndarray] = None,
) -> dict:
    """Backpropagate loss gradients injected at the prediction and/or the
    flattened conv3 activations. Returns gradients for the representation
    and regressor parameters (the domain head has its own update path).
    """
    arch = params.arch
    n = images.shape[0]
    s1, s2, s3 = arch.conv_strides
    grads = {}

    if dpred is not None:
        dfp, grads["reg_w"], grads["reg_b"] = layers.linear_batch_backward(
            dpred, trace.feature_points, params.reg_w
        )
        d3 = layers.spatial_softmax_batch_backward(dfp, trace.conv3_out, arch.temperature)
    else:
        grads["reg_w"] = np.zeros_like(params.reg_w)
        grads["reg_b"] = np.zeros_like(params.reg_b)
        d3 = np.zeros_like(trace.conv3_out)

    if dadapt is not None:
        d3 = d3 + dadapt.reshape(trace.conv3_out.shape)

    d3 = layers.relu_backward(d3, trace.conv3_out)
    d2, grads["conv3_w"], grads["conv3_b"] = layers.conv2d_batch_backward(
        d3, trace.conv2_out, params.conv3_w, s3
    )
    d2 = layers.relu_backward(d2, trace.conv2_out)
    d1, grads["conv2_w"], grads["conv2_b"] = layers.conv2d_batch_backward(
        d2, trace.conv1_out, params.conv2_w, s2
    )
    d1 = layers.relu_backward(d1, trace.conv1_out)
    _, grads["conv1_w"], grads["conv1_b"] = layers.conv2d_batch_backward(
        d1, images, params.conv1_w, s1, need_dx=False
    )
    return grads


# --------------------------------------------------------------------------
# model file format


def _arch_descriptor_bytes(arch: ArchConfig) -> bytes:
    return json.dumps(arch.to_dict(), sort_keys=True).encode("utf-8")


def save_model(params: NetworkParams, path, train_config: Optional[dict] = None) -> None:
    """Write magic/version/descriptor header plus a float32 parameter blob,
    and a JSON sidecar (<path>.json) echoing the architecture and training
    hyperparameters."""
    desc = _arch_descriptor_bytes(params.arch)
    blob = b"".join(
        np.ascontiguousarray(v, dtype="<f4").tobytes() for v in params.arrays().values()
    )
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_FORMAT_VERSION))
        fh.write(struct.pack("<I", len(desc)))
        fh.write(desc)
        fh.write(blob)
    sidecar = {"architecture": params.arch.to_dict()}
    if train_config is not None:
        sidecar["train_config"] = train_config
    with open(f"{path}.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path, expected_arch: Optional[ArchConfig] = None) -> NetworkParams:
    """Read a model file back; raises FormatError on any corruption."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic bytes")
    (version,) = struct.unpack("<I", data[4:8])
    if version != MODEL_FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported model format version {version}")
    (desc_len,) = struct.unpack("<I", data[8:12])
    if len(data) < 12 + desc_len:
        raise FormatError(f"{path}: truncated architecture descriptor")
    try:
        arch = ArchConfig.from_dict(json.loads(data[12 : 12 + desc_len]))
    except (ValueError, KeyError) as exc:
        raise FormatError(f"{path}: invalid architecture descriptor: {exc}") from exc
    if expected_arch is not None and arch != expected_arch:
        raise FormatError(f"{path}: architecture descriptor mismatch")

    template = init_params(arch, seed=0)
    blob = data[12 + desc_len :]
    expected_bytes = sum(4 * v.size for v in template.arrays().values())
    if len(blob) != expected_bytes:
        raise FormatError(
            f"{path}: parameter blob has {len(blob)} bytes, expected {expected_bytes}"
        )
    out = {}
    offset = 0
    for name, tmpl in template.arrays().items():
        nbytes = 4 * tmpl.size
        arr = np.frombuffer(blob[offset : offset + nbytes], dtype="<f4")
        out[name] = arr.reshape(tmpl.shape).astype(np.float32)
        offset += nbytes
    return NetworkParams(arch, **out)
