"""PPO training harness for the monitored squeezed-mode feedback environment.

Talks to the simulator exclusively through its reset/step protocol, exports
actors in the portable weight container, evaluates them against scripted
baselines, and renders figures from the experiment CSVs.
"""

from .evaluate import episode_returns, paired_comparison
from .export import export_actor, forward_mean, load_container
from .ppo import ActorCritic, PpoUpdater, RunningNorm, compute_gae
from .protocol import EnvClient, ServerCrashed
from .train import TrainConfig, load_train_config, train

__version__ = "0.1.0"
