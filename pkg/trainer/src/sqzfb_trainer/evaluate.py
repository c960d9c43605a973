"""Deterministic evaluation of exported agents against scripted baselines."""

from __future__ import annotations

import numpy as np

from .export import forward_mean, load_container
from .protocol import EnvClient

__all__ = ["episode_returns", "paired_comparison"]


def episode_returns(
    env_config: dict,
    seeds_base: int,
    n_seeds: int,
    weights_path: str | None,
    server_command=None,
    workdir: str = ".",
    action_bound: float | None = 1.0,
) -> np.ndarray:
    """Return of one full episode per seed, run in lockstep.

    ``weights_path`` None means the zero-action baseline.  Environment k of
    the vectorized server runs stream key (seeds_base, k, 0), so agent and
    baseline see identical episodes for the same base seed.  Deterministic
    (mean) actions, clipped like in training.
    """
    doc = None if weights_path is None else load_container(weights_path)
    horizon = int(env_config["horizon_steps"])
    totals = np.zeros(n_seeds)
    active = np.ones(n_seeds, dtype=bool)
    with EnvClient(
        env_config, n_envs=n_seeds, server_command=server_command, workdir=workdir
    ) as client:
        obs = client.reset(seeds_base)
        for _ in range(horizon):
            actions = np.zeros(n_seeds) if doc is None else forward_mean(doc, obs)
            if action_bound is not None:
                actions = np.clip(actions, -action_bound, action_bound)
            obs, rewards, done, truncated, _ = client.step(actions)
            totals += rewards * active
            # an env whose episode ended early (integration failure) has
            # auto-reset; ignore its fresh episode for this evaluation
            active &= ~(done | truncated)
        assert not active.any()
    return totals


def paired_comparison(
    env_config: dict,
    seeds_base: int,
    n_seeds: int,
    weights_path: str,
    server_command=None,
    workdir: str = ".",
) -> dict:
    """Agent vs zero-action baseline on identical held-out episodes."""
    agent = episode_returns(
        env_config, seeds_base, n_seeds, weights_path, server_command, workdir
    )
    baseline = episode_returns(
        env_config, seeds_base, n_seeds, None, server_command, workdir
    )
    diff = agent - baseline
    se = float(diff.std(ddof=1) / np.sqrt(n_seeds))
    return {
        "agent_mean": float(agent.mean()),
        "baseline_mean": float(baseline.mean()),
        "mean_diff": float(diff.mean()),
        "stderr_diff": se,
        "significance": float(diff.mean() / se) if se > 0 else float("inf"),
        "agent": agent,
        "baseline": baseline,
    }
