"""Bootstrap module for devscripts - logging, settings echo and scenario lookup.

Usage:
    from devscripts.bootstrap import print_config, scenario
    from beam_track.config import CONFIG

    def main() -> None:
        print_config()
        config = scenario('reference_isotropic')

All scripts should:
1. Use CONFIG for settings
2. Load scenarios through ``scenario()`` (a path or a bundled stem)
3. Always call print_config() at script start
"""

import logging
from pathlib import Path

from beam_track.config import CONFIG
from beam_track.model import ScenarioConfig, load_scenario_file

logging.basicConfig(level=getattr(logging, CONFIG.logging_level))


def print_config(**extra: object) -> None:
    """Print key config values for verification. Call at script start."""
    print(f'  workers:  {CONFIG.workers}')
    print(f'  grid:     {CONFIG.grid_sigma_points} σ × {CONFIG.grid_time_steps} steps')
    print(f'  pdmp:     {CONFIG.pdmp_paths} paths')
    for name, value in extra.items():
        print(f'  {name}:  {value}')
    print()


def scenario(name_or_path: str) -> ScenarioConfig:
    """Load a scenario file, or a bundled scenario by stem."""
    path = Path(name_or_path)
    if not path.suffix:
        path = CONFIG.scenario_path(name_or_path)
    return load_scenario_file(path)
