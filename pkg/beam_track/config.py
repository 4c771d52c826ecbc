from pathlib import Path
from typing import Literal

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Config(BaseSettings):
    if Path('.env').exists():
        model_config = SettingsConfigDict(
            env_file='.env', env_file_encoding='utf-8', extra='ignore'
        )
    else:
        model_config = SettingsConfigDict(extra='ignore')

    # Logging level
    logging_level: Literal['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'] = 'INFO'

    # Process pool size for independent runs and PDMP batches
    workers: int = Field(default=1, ge=1)

    # Where `run` and `bound` write their artifacts (one subdirectory per invocation)
    output_dir: Path = Path.cwd() / 'runs'

    # Bundled reference scenarios
    scenarios_dir: Path = Path(__file__).parent.parent / 'scenarios'

    # Bound grid solver (isotropic subclass)
    grid_sigma_points: int = Field(default=256, ge=8)
    grid_time_steps: int = Field(default=2048, ge=16)
    gtable_store_every: int = Field(default=16, ge=1)
    gtable_export_slices: int = Field(default=9, ge=2)

    # PDMP Monte Carlo bound
    pdmp_paths: int = Field(default=100_000, ge=2)
    pdmp_batch: int = Field(default=5_000, ge=1)

    # Sampled power paths averaged for the grid bound when power is stochastic
    bound_power_paths: int = Field(default=8, ge=1)

    # Runs per controller whose full traces are dumped to CSV
    trace_runs: int = Field(default=1, ge=0)

    # Property suite sizes (`verify`)
    verify_seed: int = 20_231
    verify_trials: int = Field(default=1_000, ge=1)
    verify_runs: int = Field(default=100, ge=2)
    verify_steps: int = Field(default=10_000, ge=100)

    @field_validator('scenarios_dir', mode='before')
    def validate_scenarios_dir(cls, scenarios_path: str | Path | None) -> Path:
        if not scenarios_path:
            scenarios_path = Path(__file__).parent.parent / 'scenarios'
        if isinstance(scenarios_path, str):
            scenarios_path = Path(scenarios_path)
        if not scenarios_path.exists():
            raise ValueError(f'Scenario directory doesnt exist: {scenarios_path}')
        return scenarios_path

    def scenario_path(self, name: str) -> Path:
        """Resolve a bundled scenario by stem, e.g. ``reference_isotropic``."""
        return self.scenarios_dir / f'{name}.json'


CONFIG = Config()
