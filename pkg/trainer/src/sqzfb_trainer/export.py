"""Checkpointing, actor export and standalone inference.

The exported container follows the documented portable format (see the
simulator's docs/weights-format.md): layer-tagged row-major float64 tensors,
activation name, log std, and whatever observation normalization the trainer
applied.  :func:`forward_mean` reimplements inference from the container so
the trainer can evaluate exported agents without importing the simulator.
"""

from __future__ import annotations

import json

import numpy as np
import torch

__all__ = [
    "save_checkpoint",
    "load_checkpoint",
    "export_actor",
    "write_fixture_pairs",
    "load_container",
    "forward_mean",
]

ACTOR_SIZES = [11, 64, 64, 1]


def save_checkpoint(path, model, norm, config: dict) -> None:
    torch.save(
        {
            "state_dict": model.state_dict(),
            "obs_mean": None if norm is None else norm.mean.copy(),
            "obs_std": None if norm is None else norm.std.copy(),
            "config": config,
        },
        path,
    )


def load_checkpoint(path) -> dict:
    return torch.load(path, weights_only=False)


def _actor_layers(state_dict) -> list[tuple[np.ndarray, np.ndarray]]:
    """Extract the actor-mean layers, validating the architecture.

    A missing critic is fine; wrong actor shapes are not.
    """
    layers = []
    for l in range(len(ACTOR_SIZES) - 1):
        try:
            w = state_dict[f"actor.{2 * l}.weight"]
            b = state_dict[f"actor.{2 * l}.bias"]
        except KeyError as exc:
            raise ValueError(f"checkpoint is missing actor layer {l} ({exc})") from exc
        w = np.asarray(w, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        expect = (ACTOR_SIZES[l + 1], ACTOR_SIZES[l])
        if w.shape != expect or b.shape != (ACTOR_SIZES[l + 1],):
            raise ValueError(
                f"actor layer {l} has shape {w.shape}/{b.shape}, expected {expect}"
            )
        layers.append((w, b))
    return layers


def export_actor(checkpoint_path, out_path, fixtures_path=None, n_fixtures: int = 1000,
                 fixture_seed: int = 20240901) -> dict:
    """Write the portable weight container (and optional fixture pairs)."""
    ckpt = load_checkpoint(checkpoint_path)
    layers = _actor_layers(ckpt["state_dict"])
    log_std = float(np.asarray(ckpt["state_dict"]["log_std"]).reshape(()))
    obs_mean = ckpt.get("obs_mean")
    obs_std = ckpt.get("obs_std")
    doc = {
        "format": "sqzfb-weights",
        "version": 1,
        "layer_sizes": list(ACTOR_SIZES),
        "activation": "tanh",
        "log_std": log_std,
        "obs_offset": None if obs_mean is None else [float(v) for v in obs_mean],
        "obs_scale": None if obs_std is None else [float(v) for v in obs_std],
        "layers": [
            {"weight": w.tolist(), "bias": b.tolist()} for w, b in layers
        ],
    }
    with open(out_path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")
    if fixtures_path is not None:
        write_fixture_pairs(doc, fixtures_path, n_fixtures, fixture_seed)
    return doc


def load_container(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "sqzfb-weights" or doc.get("version") != 1:
        raise ValueError(f"{path} is not a version-1 weight container")
    return doc


def forward_mean(doc: dict, obs: np.ndarray) -> np.ndarray:
    """Actor mean from a weight container; obs shaped (..., 11)."""
    x = np.asarray(obs, dtype=np.float64)
    if doc.get("obs_offset") is not None:
        x = x - np.asarray(doc["obs_offset"])
    if doc.get("obs_scale") is not None:
        x = x / np.asarray(doc["obs_scale"])
    last = len(doc["layers"]) - 1
    for l, layer in enumerate(doc["layers"]):
        w = np.asarray(layer["weight"])
        b = np.asarray(layer["bias"])
        x = x @ w.T + b
        if l < last:
            x = np.tanh(x)
    return x[..., 0]


def write_fixture_pairs(doc: dict, path, n: int = 1000, seed: int = 20240901) -> None:
    """Emit (raw observation, action mean) rows for cross-boundary checks."""
    rng = np.random.default_rng(seed)
    obs = rng.normal(0.0, 2.0, size=(n, doc["layer_sizes"][0]))
    actions = forward_mean(doc, obs)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(f"obs_{i}" for i in range(obs.shape[1])) + ",action\n")
        for row, action in zip(obs, actions):
            fh.write(",".join(repr(float(v)) for v in row) + f",{float(action)!r}\n")
