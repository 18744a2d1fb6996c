"""Quality-diversity imitation learning on a two-leg point walker."""

from .archive import Elite, GridArchive
from .config import Config, load_config, save_config
from .demos import DemoSet, Demonstration, load_demos, save_demos
from .explorer import VisitCounts, combined_reward
from .loop import RunResult, run
from .rewards import RewardConfig, RewardModel
from .xnes import CoeffDistribution, adapt, sample_coefficients

__all__ = [
    "Config",
    "CoeffDistribution",
    "DemoSet",
    "Demonstration",
    "Elite",
    "GridArchive",
    "RewardConfig",
    "RewardModel",
    "RunResult",
    "VisitCounts",
    "adapt",
    "combined_reward",
    "load_config",
    "load_demos",
    "run",
    "sample_coefficients",
    "save_config",
    "save_demos",
]
