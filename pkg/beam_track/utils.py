from collections.abc import Iterable, Sequence
import math

import numpy as np

# Stream purposes mixed into the seed key; append only, never reorder
STREAM_PURPOSES = ('initial', 'motion', 'power', 'events', 'pdmp', 'bound_power', 'check')
STATIONS = ('a', 'b')


def derive_rng(
    master_seed: int, run_index: int, station: str | None, purpose: str
) -> np.random.Generator:
    """Independent generator for one (run, station, purpose) stream.

    The key never involves the controller, so adding a controller leaves every
    existing stream untouched and all controllers share the same randomness.
    """
    station_code = 0 if station is None else STATIONS.index(station) + 1
    purpose_code = STREAM_PURPOSES.index(purpose)
    sequence = np.random.SeedSequence(
        entropy=master_seed, spawn_key=(run_index, station_code, purpose_code)
    )
    return np.random.default_rng(sequence)


def mean_and_stderr(samples: Sequence[float] | np.ndarray) -> tuple[float, float]:
    """Sample mean and its standard error (normal approximation)."""
    values = np.asarray(samples, dtype=float)
    if values.size == 0:
        return math.nan, math.nan
    if values.size == 1:
        return float(values[0]), math.nan
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def combined_stderr(*errors: float) -> float:
    """Standard error of a sum/difference of independent estimates."""
    return math.sqrt(sum(e * e for e in errors if not math.isnan(e)))


def trapezoid(values: Iterable[float] | np.ndarray, dt: float) -> float:
    """Trapezoidal integral of samples on a uniform grid."""
    return float(np.trapezoid(np.asarray(values, dtype=float), dx=dt))
