"""Proximal policy optimization for a one-dimensional Gaussian action.

Actor and critic are separate 64x64 tanh networks.  The update is the
standard clipped surrogate with entropy bonus, value loss, advantage
normalization and gradient clipping; the learning rate decays linearly to
zero over the training budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

__all__ = ["ActorCritic", "PpoUpdater", "compute_gae", "RunningNorm"]


def _mlp(sizes: list[int], out_gain: float) -> nn.Sequential:
    layers: list[nn.Module] = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        lin = nn.Linear(a, b)
        last = i == len(sizes) - 2
        nn.init.orthogonal_(lin.weight, out_gain if last else math.sqrt(2.0))
        nn.init.zeros_(lin.bias)
        layers.append(lin)
        if not last:
            layers.append(nn.Tanh())
    return nn.Sequential(*layers)


class ActorCritic(nn.Module):
    """Gaussian policy with state-independent log-std, plus a value head."""

    def __init__(self, obs_size: int = 11, hidden: int = 64, initial_log_std: float = 0.0):
        super().__init__()
        self.obs_size = obs_size
        self.actor = _mlp([obs_size, hidden, hidden, 1], out_gain=0.01)
        self.critic = _mlp([obs_size, hidden, hidden, 1], out_gain=1.0)
        self.log_std = nn.Parameter(torch.full((1,), float(initial_log_std)))

    def distribution(self, obs: torch.Tensor) -> torch.distributions.Normal:
        mean = self.actor(obs).squeeze(-1)
        return torch.distributions.Normal(mean, torch.exp(self.log_std))

    def value(self, obs: torch.Tensor) -> torch.Tensor:
        return self.critic(obs).squeeze(-1)

    @torch.no_grad()
    def act(self, obs: np.ndarray, deterministic: bool = False):
        """Sample (or take the mean of) actions; returns numpy arrays."""
        t = torch.as_tensor(obs, dtype=torch.float64)
        dist = self.distribution(t)
        action = dist.mean if deterministic else dist.sample()
        logp = dist.log_prob(action)
        return (
            action.numpy(),
            logp.numpy(),
            self.value(t).numpy(),
        )


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    episode_ends: np.ndarray,
    bootstrap: np.ndarray,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over a (horizon, n_envs) rollout.

    ``values`` has one extra row holding V(s_T).  Episodes here end by time
    limit only, so at an episode end the tail is bootstrapped from
    ``bootstrap`` (the value of the final observation) rather than cut to
    zero, and the advantage recursion restarts.
    """
    horizon, n_envs = rewards.shape
    advantages = np.zeros((horizon, n_envs))
    last = np.zeros(n_envs)
    for t in range(horizon - 1, -1, -1):
        ended = episode_ends[t]
        next_value = np.where(ended, bootstrap[t], values[t + 1])
        delta = rewards[t] + gamma * next_value - values[t]
        last = delta + gamma * lam * np.where(ended, 0.0, 1.0) * last
        advantages[t] = last
    returns = advantages + values[:-1]
    return advantages, returns


@dataclass
class RunningNorm:
    """Streaming mean/variance (parallel Welford) for observation scaling."""

    size: int
    mean: np.ndarray = field(init=False)
    var: np.ndarray = field(init=False)
    count: float = field(init=False, default=1e-4)

    def __post_init__(self):
        self.mean = np.zeros(self.size)
        self.var = np.ones(self.size)

    def update(self, batch: np.ndarray):
        batch = batch.reshape(-1, self.size)
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        b_count = batch.shape[0]
        delta = b_mean - self.mean
        total = self.count + b_count
        self.mean = self.mean + delta * b_count / total
        m_a = self.var * self.count
        m_b = b_var * b_count
        self.var = (m_a + m_b + delta**2 * self.count * b_count / total) / total
        self.count = total

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var + 1e-8)

    def normalize(self, obs: np.ndarray) -> np.ndarray:
        return (obs - self.mean) / self.std


@dataclass
class PpoUpdater:
    model: ActorCritic
    learning_rate: float = 2.5e-4
    clip_range: float = 0.2
    entropy_coef: float = 0.001
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    n_epochs: int = 4

    def __post_init__(self):
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=self.learning_rate)

    def set_lr_fraction(self, remaining: float):
        for group in self.optimizer.param_groups:
            group["lr"] = self.learning_rate * max(remaining, 0.0)

    def update(self, obs, actions, logp_old, advantages, returns) -> dict:
        """Run the clipped-surrogate epochs on one rollout batch."""
        obs = torch.as_tensor(obs, dtype=torch.float64)
        actions = torch.as_tensor(actions, dtype=torch.float64)
        logp_old = torch.as_tensor(logp_old, dtype=torch.float64)
        advantages = torch.as_tensor(advantages, dtype=torch.float64)
        returns = torch.as_tensor(returns, dtype=torch.float64)
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
        stats = {}
        for _ in range(self.n_epochs):
            dist = self.model.distribution(obs)
            logp = dist.log_prob(actions)
            ratio = torch.exp(logp - logp_old)
            clipped = torch.clamp(ratio, 1.0 - self.clip_range, 1.0 + self.clip_range)
            policy_loss = -torch.min(ratio * advantages, clipped * advantages).mean()
            value_loss = ((self.model.value(obs) - returns) ** 2).mean()
            entropy = dist.entropy().mean()
            loss = policy_loss + self.value_coef * value_loss - self.entropy_coef * entropy
            if not torch.isfinite(loss):
                raise FloatingPointError(f"non-finite loss: {loss.item()}")
            self.optimizer.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(self.model.parameters(), self.max_grad_norm)
            self.optimizer.step()
            stats = {
                "policy_loss": policy_loss.item(),
                "value_loss": value_loss.item(),
                "entropy": entropy.item(),
            }
        return stats
