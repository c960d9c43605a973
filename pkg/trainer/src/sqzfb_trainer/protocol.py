"""Client side of the simulator's newline-delimited JSON protocol.

The trainer spawns the environment server as a subprocess and talks to its
stdio; that channel is the only coupling to the simulator.  An optional
transcript recorder captures (request, reply) lines for replay tests.
"""

from __future__ import annotations

import json
import shutil
import subprocess
import sys
from dataclasses import dataclass, field

import numpy as np
import yaml

__all__ = ["EnvClient", "ServerCrashed", "default_server_command"]


class ServerCrashed(RuntimeError):
    """The environment server exited; carries its captured stderr."""


def default_server_command() -> list[str]:
    """Prefer the installed console script, fall back to the module runner."""
    exe = shutil.which("sqzfb-env")
    if exe:
        return [exe]
    return [sys.executable, "-m", "sqzfb.envserver"]


@dataclass
class EnvClient:
    """Vectorized protocol client over a spawned server process."""

    env_config: dict
    n_envs: int = 1
    server_command: list[str] | None = None
    workdir: str = "."
    transcript: list[tuple[str, str]] | None = field(default=None, repr=False)

    def __post_init__(self):
        import os
        import tempfile

        fd, self._config_path = tempfile.mkstemp(suffix=".yaml", dir=self.workdir)
        with os.fdopen(fd, "w") as fh:
            yaml.safe_dump(self.env_config, fh)
        cmd = list(self.server_command or default_server_command())
        cmd += ["--config", self._config_path, "--vec", str(self.n_envs)]
        self._proc = subprocess.Popen(
            cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )

    # -- raw messaging -----------------------------------------------------

    def request(self, msg: dict) -> dict:
        line = json.dumps(msg)
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except BrokenPipeError as exc:
            raise ServerCrashed(self._stderr()) from exc
        reply_line = self._proc.stdout.readline()
        if not reply_line:
            raise ServerCrashed(self._stderr())
        if self.transcript is not None:
            self.transcript.append((line, reply_line.rstrip("\n")))
        reply = json.loads(reply_line)
        if "error" in reply:
            raise RuntimeError(f"protocol error: {reply['error']}")
        return reply

    def _stderr(self) -> str:
        try:
            return self._proc.stderr.read() or "<no stderr>"
        except Exception:
            return "<stderr unavailable>"

    # -- environment API ----------------------------------------------------

    def reset(self, seed) -> np.ndarray:
        reply = self.request({"cmd": "reset", "seed": seed})
        obs = np.asarray(reply["obs"], dtype=np.float64)
        return obs.reshape(self.n_envs, -1)

    def step(self, actions) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, dict]:
        actions = np.asarray(actions, dtype=np.float64).reshape(-1)
        payload = actions.tolist() if self.n_envs > 1 else float(actions[0])
        reply = self.request({"cmd": "step", "action": payload})
        obs = np.asarray(reply["obs"], dtype=np.float64).reshape(self.n_envs, -1)
        if self.n_envs == 1:
            reward = np.array([reply["reward"]])
            done = np.array([reply["done"]])
            truncated = np.array([reply["truncated"]])
        else:
            reward = np.asarray(reply["reward"], dtype=np.float64)
            done = np.asarray(reply["done"], dtype=bool)
            truncated = np.asarray(reply["truncated"], dtype=bool)
        return obs, reward, done, truncated, reply["info"]

    def final_observations(self, info: dict) -> list[np.ndarray | None]:
        """Per-env last observation of just-finished episodes (None otherwise)."""
        if self.n_envs == 1:
            final = info.get("final_obs")
            return [None if final is None else np.asarray(final, dtype=np.float64)]
        finals = info.get("final_obs")
        if finals is None:
            return [None] * self.n_envs
        return [
            None if f is None else np.asarray(f, dtype=np.float64) for f in finals
        ]

    def close(self):
        import os

        try:
            if self._proc.poll() is None:
                self._proc.stdin.write(json.dumps({"cmd": "close"}) + "\n")
                self._proc.stdin.flush()
                self._proc.wait(timeout=10)
        except Exception:
            self._proc.kill()
        finally:
            try:
                os.unlink(self._config_path)
            except OSError:
                pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
