"""Edge-coordinated vehicular sensing simulator with per-RSU actor-critic agents."""

from .domain import ScenarioConfig, build_scenario, desk_config, full_config, vehicles_in_range
from .env import VcpsEnv, episode_return

__version__ = "0.1.0"

__all__ = [
    "ScenarioConfig",
    "VcpsEnv",
    "build_scenario",
    "desk_config",
    "episode_return",
    "full_config",
    "vehicles_in_range",
]
