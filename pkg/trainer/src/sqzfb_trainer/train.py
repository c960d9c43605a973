"""Rollout collection and the training loop.

The trainer owns observation normalization: running mean/std are updated
from raw observations during collection, the policy always sees normalized
inputs, and the statistics are serialized into every exported weight
container so that inference elsewhere is self-contained.  Rewards are scaled
by a running std of the discounted return for optimization only; logged and
evaluated returns are raw.
"""

from __future__ import annotations

import csv
import math
import os
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import yaml

from .export import export_actor, save_checkpoint
from .ppo import ActorCritic, PpoUpdater, RunningNorm, compute_gae
from .protocol import EnvClient, ServerCrashed

__all__ = ["TrainConfig", "train", "load_train_config"]


@dataclass
class TrainConfig:
    total_timesteps: int = 30_000_000
    n_workers: int = 4
    rollout_horizon: int = 128
    batch_size: int = 512
    learning_rate: float = 2.5e-4
    entropy_coef: float = 0.001
    discount_gamma: float = 0.99
    gae_lambda: float = 0.95
    n_epochs: int = 4
    episode_steps: int = 100_000
    seed: int = 0
    checkpoint_every: int = 1_000_000
    normalize_obs: bool = True
    normalize_reward: bool = True
    # exploration actions are clipped to this magnitude before being sent:
    # explicit Euler at coarse steps (dt = 1e-2) tolerates |control| <= 1
    action_bound: float | None = 1.0
    # starting exploration scale; large dithering earns reward through the
    # noise channel alone and swamps the gradient on the policy mean
    initial_log_std: float = -1.2
    out_dir: str = "runs/latest"
    env: dict = field(default_factory=dict)
    server_command: list[str] | None = None

    def env_config(self) -> dict:
        doc = {
            "omega": 0.1,
            "chi": 0.49,
            "eta": 0.9,
            "kappa": 1.0,
            "dt": 1e-3,
            "randomize_init": True,
            "horizon_steps": self.episode_steps,
        }
        doc.update(self.env)
        doc["horizon_steps"] = self.episode_steps
        return doc


def load_train_config(path: str) -> TrainConfig:
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    return TrainConfig(**doc)


class _ReturnScaler:
    """VecNormalize-style reward scaling by the running std of the return."""

    def __init__(self, n_envs: int, gamma: float):
        self.gamma = gamma
        self.returns = np.zeros(n_envs)
        self.rms = RunningNorm(1)

    def scale(self, rewards: np.ndarray, ended: np.ndarray) -> np.ndarray:
        self.returns = self.returns * self.gamma + rewards
        self.rms.update(self.returns.reshape(-1, 1))
        scaled = rewards / float(self.rms.std[0])
        self.returns[ended] = 0.0
        return scaled


def train(config: TrainConfig, log=print) -> dict:
    """Run PPO against the spawned environment server.

    Returns a summary dict with paths of the final weight container, the
    learning-curve CSV and the last checkpoint.
    """
    torch.manual_seed(config.seed)
    torch.set_num_threads(1)
    os.makedirs(config.out_dir, exist_ok=True)

    model = ActorCritic(initial_log_std=config.initial_log_std).double()
    updater = PpoUpdater(
        model,
        learning_rate=config.learning_rate,
        entropy_coef=config.entropy_coef,
        n_epochs=config.n_epochs,
    )
    norm = RunningNorm(model.obs_size) if config.normalize_obs else None

    n, horizon = config.n_workers, config.rollout_horizon
    if config.batch_size != n * horizon:
        raise ValueError(
            f"batch_size {config.batch_size} != n_workers * rollout_horizon = {n * horizon}"
        )
    iterations = config.total_timesteps // config.batch_size
    scaler = _ReturnScaler(n, config.discount_gamma)
    episode_returns = np.zeros(n)
    recent = deque(maxlen=50)
    curve_path = os.path.join(config.out_dir, "learning_curve.csv")
    weights_path = os.path.join(config.out_dir, "actor.json")
    ckpt_path = os.path.join(config.out_dir, "checkpoint.pt")
    curve = open(curve_path, "w", newline="")
    writer = csv.writer(curve)
    writer.writerow(["timesteps", "mean_episode_return", "episodes", "policy_loss",
                     "value_loss", "entropy", "log_std"])

    def checkpoint():
        save_checkpoint(ckpt_path, model, norm, asdict(config))
        export_actor(ckpt_path, weights_path)

    client = EnvClient(
        config.env_config(), n_envs=n, server_command=config.server_command,
        workdir=config.out_dir,
    )
    timesteps = 0
    episodes = 0
    try:
        obs = client.reset(config.seed)
        next_checkpoint = config.checkpoint_every
        for iteration in range(iterations):
            updater.set_lr_fraction(1.0 - timesteps / config.total_timesteps)
            obs_buf = np.empty((horizon, n, model.obs_size))
            act_buf = np.empty((horizon, n))
            logp_buf = np.empty((horizon, n))
            val_buf = np.empty((horizon + 1, n))
            rew_buf = np.empty((horizon, n))
            end_buf = np.zeros((horizon, n), dtype=bool)
            boot_buf = np.zeros((horizon, n))
            for t in range(horizon):
                if norm is not None:
                    norm.update(obs)
                    net_obs = norm.normalize(obs)
                else:
                    net_obs = obs
                actions, logp, values = model.act(net_obs)
                obs_buf[t] = net_obs
                act_buf[t] = actions
                logp_buf[t] = logp
                val_buf[t] = values
                sent = actions
                if config.action_bound is not None:
                    sent = np.clip(actions, -config.action_bound, config.action_bound)
                obs, rewards, done, truncated, info = client.step(sent)
                episode_returns += rewards
                ended = done | truncated
                if np.any(ended):
                    episodes += int(ended.sum())
                    recent.extend(episode_returns[ended].tolist())
                    episode_returns[ended] = 0.0
                    finals = client.final_observations(info)
                    with torch.no_grad():
                        for k, final in enumerate(finals):
                            if ended[k] and final is not None:
                                f = norm.normalize(final) if norm is not None else final
                                boot_buf[t, k] = float(
                                    model.value(torch.as_tensor(f, dtype=torch.float64))
                                )
                end_buf[t] = ended
                rew_buf[t] = (
                    scaler.scale(rewards, ended) if config.normalize_reward else rewards
                )
                timesteps += n
            with torch.no_grad():
                net_obs = norm.normalize(obs) if norm is not None else obs
                val_buf[horizon] = model.value(
                    torch.as_tensor(net_obs, dtype=torch.float64)
                ).numpy()
            advantages, returns = compute_gae(
                rew_buf, val_buf, end_buf, boot_buf,
                config.discount_gamma, config.gae_lambda,
            )
            try:
                stats = updater.update(
                    obs_buf.reshape(-1, model.obs_size),
                    act_buf.reshape(-1),
                    logp_buf.reshape(-1),
                    advantages.reshape(-1),
                    returns.reshape(-1),
                )
            except FloatingPointError:
                checkpoint()
                raise
            mean_return = float(np.mean(recent)) if recent else math.nan
            writer.writerow([
                timesteps, f"{mean_return:.6f}", episodes,
                f"{stats['policy_loss']:.6f}", f"{stats['value_loss']:.6f}",
                f"{stats['entropy']:.6f}", f"{model.log_std.item():.6f}",
            ])
            if iteration % 20 == 0:
                curve.flush()
                log(
                    f"iter {iteration + 1}/{iterations} steps {timesteps} "
                    f"return {mean_return:.1f} entropy {stats['entropy']:.3f}"
                )
            if timesteps >= next_checkpoint:
                checkpoint()
                next_checkpoint += config.checkpoint_every
    except ServerCrashed as exc:
        raise RuntimeError(f"environment server crashed:\n{exc}") from exc
    finally:
        curve.close()
        client.close()
    checkpoint()
    return {
        "weights": weights_path,
        "learning_curve": curve_path,
        "checkpoint": ckpt_path,
        "timesteps": timesteps,
        "episodes": episodes,
    }
