"""Line-delimited reset/step protocol so an external trainer can drive episodes.

One JSON message per line.  Requests:

    {"cmd": "reset", "seed": <u64 or [ints]>}
    {"cmd": "step", "action": <number or [f64; n]>}
    {"cmd": "close"}

Replies mirror the batch width: with one environment the observation is a
flat 11-vector and reward/done/truncated are scalars; with n > 1 they are
per-environment lists.  Episodes auto-reset on termination: the reply of a
terminating step carries the next episode's first observation, with the
finished episode's last observation under info["final_obs"].  Numbers are
encoded with shortest round-trip decimals, so every float survives a
serialize/parse cycle exactly.

Episode streams are keyed (seed, env_index, episode_index); resetting twice
with the same seed reproduces the same episode bit for bit, and a lockstep
batch is message-for-message equivalent to scalar sessions reset with
seed = [seed, env_index].
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
from dataclasses import dataclass

import numpy as np
import yaml

from .metrology import _qfi_components
from .model import SystemParams
from .policies import OBS_LAYOUT_VERSION
from .trajectory import (
    InitialCondition,
    RandomInit,
    TrajectoryState,
    UnphysicalStateError,
    _seed_key,
    reset as reset_trajectory,
    step as step_trajectory,
)

__all__ = ["EpisodeConfig", "EnvSession", "ProtocolServer", "serve", "serve_vectorized", "main"]


@dataclass(frozen=True)
class EpisodeConfig:
    """Episode shape: physics, horizon, and initial-condition policy."""

    params: SystemParams
    horizon_steps: int
    randomize_init: bool = False
    fixed_init: InitialCondition = InitialCondition()
    obs_layout_version: int = OBS_LAYOUT_VERSION

    def __post_init__(self):
        if self.horizon_steps < 1:
            raise ValueError(f"horizon_steps must be >= 1, got {self.horizon_steps}")
        if self.obs_layout_version != OBS_LAYOUT_VERSION:
            raise ValueError(
                f"unsupported observation layout {self.obs_layout_version}"
            )


class ProtocolError(RuntimeError):
    def __init__(self, code: str, msg: str):
        self.code = code
        super().__init__(msg)


class EnvSession:
    """One environment instance with auto-reset episode bookkeeping."""

    def __init__(self, config: EpisodeConfig, env_index: int = 0):
        self.config = config
        self.env_index = env_index
        self.traj: TrajectoryState | None = None
        self._key: tuple[int, ...] | None = None

    def _init(self) -> InitialCondition | RandomInit:
        return RandomInit() if self.config.randomize_init else self.config.fixed_init

    def reset(self, seed) -> np.ndarray:
        self._key = _seed_key(seed)
        self.traj = reset_trajectory(self.config.params, self._init(), self._key)
        return self.traj.observation()

    def _auto_reset(self):
        base, env, episode = self._key[0], self._key[1], self._key[2]
        self._key = (base, env, episode + 1) + self._key[3:]
        self.traj = reset_trajectory(self.config.params, self._init(), self._key)

    def step(self, action: float):
        """Advance one step; returns (obs, reward, done, truncated, info).

        An integration failure terminates the episode abnormally: the step
        yields zero reward, ``done`` without ``truncated``, no final
        observation to bootstrap from, and the environment auto-resets.
        """
        if self.traj is None:
            raise ProtocolError("protocol", "step before reset")
        try:
            _, result = step_trajectory(self.traj, self.config.params, float(action))
        except UnphysicalStateError as exc:
            t = self.traj
            info = {
                "t": t.t,
                "fhom_integral": t.fhom_integral,
                "qfi": 0.0,
                "failed": True,
                "failed_step": exc.step_index,
            }
            self._auto_reset()
            return self.traj.observation(), 0.0, True, False, info
        t = self.traj
        info = {
            "t": t.t,
            "fhom_integral": t.fhom_integral,
            "qfi": float(
                _qfi_components(t.sqq, t.sqp, t.spp, t.dqq, t.dqp, t.dpp, t.drq, t.drp)
            ),
            "failed": False,
        }
        done = t.step_index >= self.config.horizon_steps
        truncated = done  # healthy episodes end by time limit only
        if done:
            info["final_obs"] = t.observation().tolist()
            self._auto_reset()
            obs = self.traj.observation()
        else:
            obs = t.observation()
        return obs, result.reward_increment, done, truncated, info


class ProtocolServer:
    """n_envs sessions behind one message channel."""

    def __init__(self, config: EpisodeConfig, n_envs: int = 1):
        if n_envs < 1:
            raise ValueError(f"n_envs must be >= 1, got {n_envs}")
        self.n_envs = n_envs
        self.sessions = [EnvSession(config, k) for k in range(n_envs)]

    # -- message handling -------------------------------------------------

    def _handle_reset(self, msg):
        if "seed" not in msg:
            raise ProtocolError("bad_message", "reset requires 'seed'")
        seed = msg["seed"]
        if self.n_envs == 1:
            if not isinstance(seed, (int, list)):
                raise ProtocolError("bad_message", "seed must be an int or a list of ints")
            obs = self.sessions[0].reset(seed)
            return {"obs": obs.tolist()}
        if not isinstance(seed, int):
            raise ProtocolError("bad_message", "vectorized reset requires an integer seed")
        all_obs = [self.sessions[k].reset((seed, k, 0)) for k in range(self.n_envs)]
        return {"obs": [o.tolist() for o in all_obs]}

    def _handle_step(self, msg):
        if "action" not in msg:
            raise ProtocolError("bad_message", "step requires 'action'")
        action = msg["action"]
        if isinstance(action, (int, float)):
            action = [action]
        if not isinstance(action, list) or not all(
            isinstance(a, (int, float)) for a in action
        ):
            raise ProtocolError("bad_message", "action must be a number or list of numbers")
        if len(action) != self.n_envs:
            raise ProtocolError(
                "bad_message",
                f"action batch size {len(action)} does not match n_envs {self.n_envs}",
            )
        results = [s.step(a) for s, a in zip(self.sessions, action)]
        if self.n_envs == 1:
            obs, reward, done, truncated, info = results[0]
            return {
                "obs": obs.tolist(),
                "reward": reward,
                "done": done,
                "truncated": truncated,
                "info": info,
            }
        info = {
            "t": [r[4]["t"] for r in results],
            "fhom_integral": [r[4]["fhom_integral"] for r in results],
            "qfi": [r[4]["qfi"] for r in results],
            "failed": [r[4]["failed"] for r in results],
        }
        if any("final_obs" in r[4] for r in results):
            info["final_obs"] = [r[4].get("final_obs") for r in results]
        return {
            "obs": [r[0].tolist() for r in results],
            "reward": [r[1] for r in results],
            "done": [r[2] for r in results],
            "truncated": [r[3] for r in results],
            "info": info,
        }

    def handle(self, line: str):
        """Process one request line; returns (reply dict, keep_going flag)."""
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            return {"error": {"code": "bad_message", "msg": f"invalid JSON: {exc}"}}, True
        if not isinstance(msg, dict) or "cmd" not in msg:
            return {"error": {"code": "bad_message", "msg": "missing 'cmd'"}}, True
        cmd = msg["cmd"]
        try:
            if cmd == "reset":
                return self._handle_reset(msg), True
            if cmd == "step":
                return self._handle_step(msg), True
            if cmd == "close":
                return {"ok": True}, False
            return {"error": {"code": "bad_message", "msg": f"unknown cmd {cmd!r}"}}, True
        except ProtocolError as exc:
            return {"error": {"code": exc.code, "msg": str(exc)}}, True

    def run(self, reader, writer):
        """Serve line-delimited requests until close or end of input."""
        for line in reader:
            line = line.strip()
            if not line:
                continue
            reply, keep_going = self.handle(line)
            writer.write(json.dumps(reply) + "\n")
            writer.flush()
            if not keep_going:
                break


def serve(channel: tuple, config: EpisodeConfig) -> None:
    """Single-environment server on a (reader, writer) channel."""
    ProtocolServer(config, 1).run(*channel)


def serve_vectorized(channel: tuple, config: EpisodeConfig, n_envs: int) -> None:
    """Batched server carrying n_envs observations/actions per message."""
    ProtocolServer(config, n_envs).run(*channel)


def config_from_dict(doc: dict) -> EpisodeConfig:
    params = SystemParams(
        omega=float(doc.get("omega", 0.1)),
        chi=float(doc.get("chi", 0.49)),
        eta=float(doc.get("eta", 0.9)),
        kappa=float(doc.get("kappa", 1.0)),
        dt=float(doc.get("dt", 1e-3)),
    )
    r0 = doc.get("r0", [0.0, 0.0])
    return EpisodeConfig(
        params=params,
        horizon_steps=int(doc.get("horizon_steps", 100_000)),
        randomize_init=bool(doc.get("randomize_init", False)),
        fixed_init=InitialCondition(
            r0=(float(r0[0]), float(r0[1])), n_th=float(doc.get("n_th", 0.0))
        ),
        obs_layout_version=int(doc.get("obs_layout_version", OBS_LAYOUT_VERSION)),
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sqzfb-env",
        description="Serve the reset/step environment protocol for RL training.",
    )
    parser.add_argument("--config", help="YAML file with physics and episode settings")
    parser.add_argument("--vec", type=int, default=1, help="number of parallel environments")
    parser.add_argument("--transport", choices=("stdio", "socket"), default="stdio")
    parser.add_argument("--port", type=int, default=5555, help="TCP port for socket transport")
    args = parser.parse_args(argv)

    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = yaml.safe_load(fh) or {}
    config = config_from_dict(doc)
    server = ProtocolServer(config, args.vec)

    if args.transport == "stdio":
        server.run(sys.stdin, sys.stdout)
        return 0
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind(("127.0.0.1", args.port))
        sock.listen(1)
        conn, _ = sock.accept()
        with conn, conn.makefile("r") as reader, conn.makefile("w") as writer:
            server.run(reader, writer)
    return 0


if __name__ == "__main__":
    sys.exit(main())
