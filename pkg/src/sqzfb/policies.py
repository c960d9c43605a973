"""Feedback policies mapping observations to the control frequency.

Three strategies drive the simulator: no control (always 0), open-loop
control (the record-independent choice -omega that cancels the rotation and
maximizes conditional squeezing), and a feed-forward network trained
elsewhere and loaded from a portable weight container.

Observation layout (version 1, 11 scalars):
r_q, r_p, s_qq, s_qp, s_pp, dr_q, dr_p, ds_qq, ds_qp, ds_pp, dy.
Symmetric matrices contribute their three independent entries.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from .model import SystemParams

__all__ = [
    "OBS_FIELDS",
    "OBS_SIZE",
    "OBS_LAYOUT_VERSION",
    "FeedbackPolicy",
    "NoControl",
    "OpenLoop",
    "NeuralWeights",
    "NeuralPolicy",
    "neural_act",
    "load_weights",
    "save_weights",
    "WeightFormatError",
]

OBS_FIELDS = (
    "r_q", "r_p",
    "s_qq", "s_qp", "s_pp",
    "dr_q", "dr_p",
    "ds_qq", "ds_qp", "ds_pp",
    "dy",
)
OBS_SIZE = len(OBS_FIELDS)
OBS_LAYOUT_VERSION = 1

_ACTIVATIONS = {
    "tanh": np.tanh,
    "relu": lambda x: np.maximum(x, 0.0),
}


@runtime_checkable
class FeedbackPolicy(Protocol):
    """Per-step control chooser.

    ``constant`` policies ignore observations entirely (the engine skips
    building them); ``requires_noise`` policies receive one standard-normal
    draw per trajectory per step from the caller's action stream.
    """

    constant: bool
    requires_noise: bool

    def act(self, obs: np.ndarray, noise=None): ...


class NoControl:
    """Always returns 0: the uncontrolled benchmark."""

    constant = True
    requires_noise = False

    def act(self, obs, noise=None):
        return 0.0


class OpenLoop:
    """Deterministic control -omega, cancelling the rotation.

    Requires prior knowledge of the frequency; not a feedback, since the
    output never depends on the record.
    """

    constant = True
    requires_noise = False

    def __init__(self, params: SystemParams):
        self.value = -params.omega

    def act(self, obs, noise=None):
        return self.value


class WeightFormatError(ValueError):
    """Raised when a weight container is malformed."""


@dataclass
class NeuralWeights:
    """Feed-forward actor parameters.

    ``weights[l]`` has shape (layer_sizes[l+1], layer_sizes[l]) acting as
    y = W x + b; hidden layers use ``activation``, the output is linear.
    Optional observation normalization is applied as (obs - offset) / scale
    before the first layer; ``log_std`` is the log standard deviation of the
    Gaussian action distribution (stochastic mode only).
    """

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"
    log_std: float | None = None
    obs_offset: np.ndarray | None = None
    obs_scale: np.ndarray | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        sizes = self.layer_sizes
        if len(sizes) < 2:
            raise WeightFormatError(f"need at least two layer sizes, got {sizes}")
        if self.activation not in _ACTIVATIONS:
            raise WeightFormatError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise WeightFormatError(
                f"expected {len(sizes) - 1} weight/bias pairs, got "
                f"{len(self.weights)}/{len(self.biases)}"
            )
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            w = np.asarray(w, dtype=float)
            b = np.asarray(b, dtype=float)
            if w.shape != (sizes[l + 1], sizes[l]):
                raise WeightFormatError(
                    f"layer {l} weight shape {w.shape}, expected {(sizes[l + 1], sizes[l])}"
                )
            if b.shape != (sizes[l + 1],):
                raise WeightFormatError(
                    f"layer {l} bias shape {b.shape}, expected {(sizes[l + 1],)}"
                )
            if not np.all(np.isfinite(w)) or not np.all(np.isfinite(b)):
                raise WeightFormatError(f"non-finite entries in layer {l}")
            self.weights[l] = w
            self.biases[l] = b
        if self.log_std is not None and not math.isfinite(self.log_std):
            raise WeightFormatError(f"non-finite log_std {self.log_std}")
        for name in ("obs_offset", "obs_scale"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float)
                if v.shape != (sizes[0],):
                    raise WeightFormatError(
                        f"{name} shape {v.shape}, expected {(sizes[0],)}"
                    )
                if not np.all(np.isfinite(v)):
                    raise WeightFormatError(f"non-finite entries in {name}")
                setattr(self, name, v)
        if self.obs_scale is not None and np.any(self.obs_scale == 0.0):
            raise WeightFormatError("obs_scale contains zeros")


def neural_act(
    weights: NeuralWeights,
    obs: np.ndarray,
    deterministic: bool = True,
    noise=None,
):
    """Forward pass of the actor mean; optionally adds Gaussian exploration.

    ``obs`` has shape (..., n_in); the result drops the trailing unit output
    axis.  Stochastic mode adds exp(log_std) * noise with caller-supplied
    standard-normal ``noise`` broadcastable to the output shape.
    """
    x = np.asarray(obs, dtype=float)
    if x.shape[-1] != weights.layer_sizes[0]:
        raise ValueError(
            f"observation size {x.shape[-1]}, expected {weights.layer_sizes[0]}"
        )
    if weights.obs_offset is not None:
        x = x - weights.obs_offset
    if weights.obs_scale is not None:
        x = x / weights.obs_scale
    activation = _ACTIVATIONS[weights.activation]
    last = len(weights.weights) - 1
    for l, (w, b) in enumerate(zip(weights.weights, weights.biases)):
        x = x @ w.T + b
        if l < last:
            x = activation(x)
    out = x[..., 0]
    if not deterministic:
        if weights.log_std is None:
            raise ValueError("stochastic action requested but weights carry no log_std")
        if noise is None:
            raise ValueError("stochastic action requested without a noise draw")
        out = out + math.exp(weights.log_std) * noise
    if not np.all(np.isfinite(out)):
        raise ValueError("policy produced a non-finite action")
    if out.ndim == 0:
        return float(out)
    return out


@dataclass
class NeuralPolicy:
    """Feedback from a trained actor; deterministic by default.

    An optional symmetric output bound clips extreme actions (a rotation
    cannot destabilize the dynamics, so this is purely an experiment knob).
    """

    weights: NeuralWeights
    deterministic: bool = True
    bound: float | None = None
    constant: bool = field(init=False, default=False)

    @property
    def requires_noise(self) -> bool:
        return not self.deterministic

    def act(self, obs, noise=None):
        out = neural_act(self.weights, obs, deterministic=self.deterministic, noise=noise)
        if self.bound is not None:
            out = np.clip(out, -self.bound, self.bound)
            if np.ndim(out) == 0:
                return float(out)
        return out


_FORMAT_NAME = "sqzfb-weights"
_FORMAT_VERSION = 1


def save_weights(path, weights: NeuralWeights) -> None:
    """Serialize weights to the portable JSON container.

    Floats are written with shortest round-trip decimal encoding, so a
    save/load cycle reproduces every tensor bit for bit.
    """
    doc = {
        "format": _FORMAT_NAME,
        "version": _FORMAT_VERSION,
        "layer_sizes": list(weights.layer_sizes),
        "activation": weights.activation,
        "log_std": weights.log_std,
        "obs_offset": None if weights.obs_offset is None else weights.obs_offset.tolist(),
        "obs_scale": None if weights.obs_scale is None else weights.obs_scale.tolist(),
        "layers": [
            {"weight": w.tolist(), "bias": b.tolist()}
            for w, b in zip(weights.weights, weights.biases)
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_weights(path) -> NeuralWeights:
    """Parse and validate a weight container; errors name the offending field."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise WeightFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != _FORMAT_NAME:
        raise WeightFormatError(f"{path}: missing or wrong 'format' tag")
    if doc.get("version") != _FORMAT_VERSION:
        raise WeightFormatError(f"{path}: unsupported version {doc.get('version')!r}")
    for key in ("layer_sizes", "layers"):
        if key not in doc:
            raise WeightFormatError(f"{path}: missing field '{key}'")
    layers = doc["layers"]
    sizes = doc["layer_sizes"]
    if not isinstance(layers, list) or len(layers) != len(sizes) - 1:
        raise WeightFormatError(
            f"{path}: expected {len(sizes) - 1} layers, found "
            f"{len(layers) if isinstance(layers, list) else type(layers).__name__}"
        )
    ws, bs = [], []
    for l, layer in enumerate(layers):
        for key in ("weight", "bias"):
            if not isinstance(layer, dict) or key not in layer:
                raise WeightFormatError(f"{path}: layer {l} is missing tensor '{key}'")
        ws.append(np.asarray(layer["weight"], dtype=float))
        bs.append(np.asarray(layer["bias"], dtype=float))
    try:
        return NeuralWeights(
            layer_sizes=[int(s) for s in sizes],
            weights=ws,
            biases=bs,
            activation=doc.get("activation", "tanh"),
            log_std=doc.get("log_std"),
            obs_offset=None if doc.get("obs_offset") is None else np.asarray(doc["obs_offset"]),
            obs_scale=None if doc.get("obs_scale") is None else np.asarray(doc["obs_scale"]),
        )
    except WeightFormatError as exc:
        raise WeightFormatError(f"{path}: {exc}") from exc
