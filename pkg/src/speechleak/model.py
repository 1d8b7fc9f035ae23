"""Keyword-spotting CNN: parameter container, init, and a numpy reference forward."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .dsp import GRID_SIZE

CLASS_NAMES = ("yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go")
NUM_CLASSES = len(CLASS_NAMES)

CONV1_CHANNELS = 32
CONV2_CHANNELS = 64
KERNEL = 3
POOL = 2
FC1_UNITS = 128
FLAT_UNITS = 14 * 14 * CONV2_CHANNELS  # 12544 after two valid convs and one pool

PARAM_SHAPES = {
    "conv1_w": (CONV1_CHANNELS, 1, KERNEL, KERNEL),
    "conv1_b": (CONV1_CHANNELS,),
    "conv2_w": (CONV2_CHANNELS, CONV1_CHANNELS, KERNEL, KERNEL),
    "conv2_b": (CONV2_CHANNELS,),
    "fc1_w": (FLAT_UNITS, FC1_UNITS),
    "fc1_b": (FC1_UNITS,),
    "fc2_w": (FC1_UNITS, NUM_CLASSES),
    "fc2_b": (NUM_CLASSES,),
}

PARAM_COUNT = sum(int(np.prod(s)) for s in PARAM_SHAPES.values())
if PARAM_COUNT != 1_625_866:  # Table of layer shapes above must never drift
    raise AssertionError(f"parameter count {PARAM_COUNT} != 1,625,866")


@dataclass(frozen=True)
class ModelParams:
    """All trainable tensors of the CNN, float64, in fixed order."""

    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    fc1_w: np.ndarray
    fc1_b: np.ndarray
    fc2_w: np.ndarray
    fc2_b: np.ndarray

    def __post_init__(self) -> None:
        for f in fields(self):
            arr = np.asarray(getattr(self, f.name), dtype=np.float64)
            if arr.shape != PARAM_SHAPES[f.name]:
                raise ValueError(
                    f"{f.name} must have shape {PARAM_SHAPES[f.name]}, got {arr.shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{f.name} contains non-finite values")
            object.__setattr__(self, f.name, arr)

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_SHAPES}

    def as_list(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in PARAM_SHAPES]


def init_params(seed: int) -> ModelParams:
    """He-uniform weights (bound sqrt(6 / fan_in)), zero biases, seeded."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in PARAM_SHAPES.items():
        if name.endswith("_b"):
            tensors[name] = np.zeros(shape)
            continue
        fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
        bound = np.sqrt(6.0 / fan_in)
        tensors[name] = rng.uniform(-bound, bound, size=shape)
    return ModelParams(**tensors)


def _conv2d_valid(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    # x (C, H, W), weight (O, C, k, k) -> (O, H-k+1, W-k+1), stride 1, no padding
    c, h, w = x.shape
    oh, ow = h - KERNEL + 1, w - KERNEL + 1
    patches = np.lib.stride_tricks.sliding_window_view(x, (KERNEL, KERNEL), axis=(1, 2))
    cols = patches.transpose(1, 2, 0, 3, 4).reshape(oh * ow, c * KERNEL * KERNEL)
    out = cols @ weight.reshape(weight.shape[0], -1).T + bias
    return out.T.reshape(weight.shape[0], oh, ow)


def _maxpool2(x: np.ndarray) -> np.ndarray:
    # 2x2 non-overlapping max over each channel
    c, h, w = x.shape
    return x.reshape(c, h // POOL, POOL, w // POOL, POOL).max(axis=(2, 4))


def _forward_parts(params: ModelParams, x: np.ndarray) -> dict[str, np.ndarray]:
    z1 = _conv2d_valid(x[None, :, :], params.conv1_w, params.conv1_b)
    a1 = np.maximum(z1, 0.0)
    z2 = _conv2d_valid(a1, params.conv2_w, params.conv2_b)
    a2 = np.maximum(z2, 0.0)
    pooled = _maxpool2(a2)
    # flatten row-major with channels last: (H, W, C) order
    flat = pooled.transpose(1, 2, 0).ravel()
    zf = flat @ params.fc1_w + params.fc1_b
    hidden = np.maximum(zf, 0.0)
    logits = hidden @ params.fc2_w + params.fc2_b
    return {"z1": z1, "z2": z2, "a2": a2, "flat": flat, "zf": zf, "logits": logits}


def forward(params: ModelParams, grid_values: np.ndarray) -> np.ndarray:
    """Logits (10,) of the CNN on one 32x32 grid; numpy reference path."""
    x = np.asarray(grid_values, dtype=np.float64)
    if x.shape != (GRID_SIZE, GRID_SIZE):
        raise ValueError(f"model input must be {GRID_SIZE}x{GRID_SIZE}, got {x.shape}")
    return _forward_parts(params, x)["logits"]


def _signature_from_parts(parts: dict[str, np.ndarray]) -> np.ndarray:
    c, h, w = parts["a2"].shape
    blocks = parts["a2"].reshape(c, h // POOL, POOL, w // POOL, POOL)
    argmax = blocks.transpose(0, 1, 3, 2, 4).reshape(c, h // POOL, w // POOL, POOL * POOL)
    return np.concatenate(
        [
            (parts["z1"] > 0.0).ravel().astype(np.int8),
            (parts["z2"] > 0.0).ravel().astype(np.int8),
            (parts["zf"] > 0.0).ravel().astype(np.int8),
            argmax.argmax(axis=-1).ravel().astype(np.int8),
        ]
    )


def activation_signature(params: ModelParams, grid_values: np.ndarray) -> np.ndarray:
    """ReLU sign pattern plus pool argmax selections, packed as one int8 vector.

    The network is analytic along any input/parameter segment whose two
    endpoints share a signature, which is exactly when central differences
    across that segment are trustworthy."""
    x = np.asarray(grid_values, dtype=np.float64)
    return _signature_from_parts(_forward_parts(params, x))


def loss_and_signature(
    params: ModelParams, grid_values: np.ndarray, label: int
) -> tuple[float, np.ndarray]:
    """Cross-entropy loss and activation signature from a single forward pass."""
    x = np.asarray(grid_values, dtype=np.float64)
    parts = _forward_parts(params, x)
    return cross_entropy(parts["logits"], label), _signature_from_parts(parts)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax over the class axis."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def cross_entropy(logits: np.ndarray, label: int) -> float:
    """Softmax cross-entropy of one sample: logsumexp(z) - z[label]."""
    z = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < z.size:
        raise ValueError("label out of range")
    m = z.max()
    return float(m + np.log(np.exp(z - m).sum()) - z[label])


def predict(params: ModelParams, grid_values: np.ndarray) -> int:
    """Argmax class index for one grid."""
    return int(np.argmax(forward(params, grid_values)))
