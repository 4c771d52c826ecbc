"""Closed-loop runs: truth, detections, filters and controllers stepped together.

Every random stream is keyed by (master seed, run index, station, purpose) and
never by the controller, so all controllers of one scenario see common random
numbers and a run is reproduced bit for bit whatever the worker count.
"""

from collections.abc import Iterable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import logging
import math

import numpy as np
import scipy.linalg

from beam_track.bound import GTable, estimate_gap, has_constant_power
from beam_track.control import ControlLaw, hold_invariant_check
from beam_track.dynamics import Event, PowerProcess, TruthState, generate_events, step_truth
from beam_track.errors import NumericError
from beam_track.filter import FilterTrace, start_tracker
from beam_track.model import ScenarioConfig, eval_matrices
from beam_track.objective import RunRecord, reward_integrals
from beam_track.symmat import FloatArray
from beam_track.utils import STATIONS, derive_rng

LOGGER = logging.getLogger(__name__)

# Installed once per worker process
_WORKER_TABLE: GTable | None = None


@dataclass
class RunPath:
    """Everything one run produced, sampled on the dt grid.

    ``nu_a[k]`` is the power held on step k; the last grid point repeats the last step.
    """

    times: FloatArray
    x_a: FloatArray
    x_b: FloatArray
    nu_a: FloatArray
    nu_b: FloatArray
    traces: dict[str, FilterTrace]
    events: list[Event] = field(default_factory=list)


@dataclass
class RunBatch:
    records: list[RunRecord]
    paths: dict[int, RunPath]


def _initial_state(config: ScenarioConfig, name: str, run_index: int) -> FloatArray:
    entry = config.station(name)
    rng = derive_rng(config.seed, run_index, name, 'initial')
    factor = scipy.linalg.cholesky(entry.sigma0, lower=True)
    return entry.x0_mean + factor @ rng.standard_normal(len(entry.x0_mean))


def simulate_path(config: ScenarioConfig, law: ControlLaw, run_index: int) -> RunPath:
    """One closed-loop run of both stations under ``law``.

    Per step: sample ν, draw each station's detections (rate from the opposite
    state, spots from the own state), advance each filter/controller on its own
    detections, then move the plants with the mean control plus the impulses.
    """
    seed = config.seed
    schedules = {name: config.schedule(name) for name in STATIONS}
    power = {
        name: PowerProcess(
            config.station(name).power,
            config.optics.eta,
            derive_rng(seed, run_index, name, 'power'),
        )
        for name in STATIONS
    }
    motion = {name: derive_rng(seed, run_index, name, 'motion') for name in STATIONS}
    detection = {name: derive_rng(seed, run_index, name, 'events') for name in STATIONS}
    trackers = {name: start_tracker(config, name, law) for name in STATIONS}
    truth = TruthState(
        _initial_state(config, 'a', run_index), _initial_state(config, 'b', run_index)
    )
    rho, R = config.rho, config.optics.R

    times = config.times
    x_path = {name: [truth.x(name)] for name in STATIONS}
    nu_path: dict[str, list[float]] = {name: [] for name in STATIONS}
    events: list[Event] = []
    for t, t_next in zip(times, times[1:]):
        t, dt = float(t), float(t_next - t)
        truth.nu_a = float(power['a'].sample(t, dt)[0])
        truth.nu_b = float(power['b'].sample(t, dt)[0])
        matrices = {name: eval_matrices(schedules[name], t) for name in STATIONS}
        step_events = {}
        for name, other in (('a', 'b'), ('b', 'a')):
            step_events[name] = generate_events(
                name,
                t,
                dt,
                truth.nu(name),
                truth.x(other),
                truth.x(name),
                matrices[name].C,
                rho,
                R,
                detection[name],
                C_j=matrices[other].C,
            )
        moved = {}
        for name in STATIONS:
            outcome = trackers[name].advance(t, dt, step_events[name])
            trackers[name].record(float(t_next))
            x = step_truth(
                truth.x(name), outcome.mean_control, matrices[name], dt, motion[name]
            )
            moved[name] = x + outcome.impulse
            nu_path[name].append(truth.nu(name))
            events.extend(step_events[name])
        truth.x_a, truth.x_b = moved['a'], moved['b']
        for name in STATIONS:
            x_path[name].append(truth.x(name))

    for name in STATIONS:
        nu_path[name].append(nu_path[name][-1])
    return RunPath(
        times=times,
        x_a=np.array(x_path['a']),
        x_b=np.array(x_path['b']),
        nu_a=np.array(nu_path['a']),
        nu_b=np.array(nu_path['b']),
        traces={name: trackers[name].trace() for name in STATIONS},
        events=sorted(events),
    )


def _failed_record(
    config: ScenarioConfig, law: ControlLaw, run_index: int, reason: str
) -> RunRecord:
    return RunRecord(
        run_index=run_index,
        controller=law.kind,
        seed=config.seed,
        j_sample=math.nan,
        filtered_sample=math.nan,
        gap_sample=math.nan,
        events_a=0,
        events_b=0,
        hold_deviation=math.nan,
        min_eigenvalue=math.nan,
        failed=reason,
    )


def run_once(
    config: ScenarioConfig,
    law: ControlLaw,
    run_index: int,
    table: GTable | None = None,
) -> tuple[RunRecord, RunPath | None]:
    """Simulate and score one run; numeric failures are recorded, not raised."""
    try:
        path = simulate_path(config, law, run_index)
        j_sample, filtered_sample = reward_integrals(path, config)
        gap = math.nan
        if table is not None:
            gap = estimate_gap(path.traces, table, config, path.nu_a, path.nu_b)
    except NumericError as e:
        LOGGER.warning('Run %d (%s) failed: %s', run_index, law.kind, e)
        return _failed_record(config, law, run_index, f'{type(e).__name__}: {e}'), None
    traces = path.traces
    record = RunRecord(
        run_index=run_index,
        controller=law.kind,
        seed=config.seed,
        j_sample=j_sample,
        filtered_sample=filtered_sample,
        gap_sample=gap,
        events_a=traces['a'].event_count,
        events_b=traces['b'].event_count,
        hold_deviation=max(
            hold_invariant_check(traces[name], config.schedule(name)) for name in STATIONS
        ),
        min_eigenvalue=float(
            min(traces[name].min_eigenvalues().min() for name in STATIONS)
        ),
    )
    return record, path


def _install_table(table: GTable | None) -> None:
    global _WORKER_TABLE
    _WORKER_TABLE = table


def _run_task(
    args: tuple[ScenarioConfig, ControlLaw, int, bool],
) -> tuple[RunRecord, RunPath | None]:
    config, law, run_index, keep = args
    record, path = run_once(config, law, run_index, _WORKER_TABLE)
    return record, path if keep else None


def simulate_runs(
    config: ScenarioConfig,
    law: ControlLaw,
    run_indices: Iterable[int],
    table: GTable | None = None,
    workers: int = 1,
    keep_paths: int = 0,
) -> RunBatch:
    """Score many runs of one controller, in run-index order.

    ``table`` enables the gap diagnostic; it is ignored unless both stations have
    constant power, since the table is computed for one fixed power path.
    Paths are kept for the first ``keep_paths`` run indices.
    """
    if table is not None and not has_constant_power(config):
        LOGGER.warning('Gap diagnostic skipped: it needs constant power at both stations')
        table = None
    tasks = [(config, law, index, index < keep_paths) for index in sorted(run_indices)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(
            max_workers=min(workers, len(tasks)),
            initializer=_install_table,
            initargs=(table,),
        ) as executor:
            chunksize = max(1, len(tasks) // (4 * workers))
            outcomes = list(executor.map(_run_task, tasks, chunksize=chunksize))
    else:
        _install_table(table)
        outcomes = [_run_task(task) for task in tasks]
    records = [record for record, _ in outcomes]
    paths = {record.run_index: path for record, path in outcomes if path is not None}
    failed = sum(not record.ok for record in records)
    if failed:
        LOGGER.warning('%d of %d runs of %s failed', failed, len(records), law.kind)
    return RunBatch(records, paths)
