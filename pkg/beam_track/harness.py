"""Command implementations: controller comparison runs, bound solves and property checks.

Every command writes into one directory per invocation, named from the command and
the scenario digest, so rerunning the same scenario and seed overwrites the same
files with the same bytes. Wall-clock time goes to ``timing.json``, never into the
report itself.
"""

from collections.abc import Iterable, Sequence
import json
import logging
import math
from pathlib import Path
import time

from pydantic import BaseModel, ConfigDict

from beam_track.bound import BoundResult, compute_bound, has_constant_power
from beam_track.checks import CheckContext, CheckResult, registry
from beam_track.config import CONFIG, Config
from beam_track.control import ControlLaw
from beam_track.dynamics import write_events_csv
from beam_track.errors import PropertyFailure
from beam_track.model import ScenarioConfig, scenario_digest
from beam_track.objective import RunRecord, summarize, write_records_csv
from beam_track.simulation import RunBatch, RunPath, simulate_runs
from beam_track.utils import STATIONS, combined_stderr, mean_and_stderr

LOGGER = logging.getLogger(__name__)

REPORT_FILE = 'report.json'
BOUND_FILE = 'bound.json'
VERIFY_FILE = 'verify.json'
TIMING_FILE = 'timing.json'
GTABLE_FILE = 'gtable.csv'
GTABLE_HEADER_FILE = 'gtable.json'
TRACES_DIR = 'traces'


class _Report(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')


class ControllerSummary(_Report):
    kind: str
    runs: int
    failed_runs: int
    j_mean: float
    std_error: float
    filtered_mean: float
    gap_mean: float | None
    max_hold_deviation: float
    pd_violations: int
    exceeds_bound: bool | None


class BoundReport(_Report):
    g0_grid: float | None
    g0_grid_std_error: float | None
    g0_pdmp: float | None
    std_error: float | None
    discrepancy: float | None
    grid_declined: str | None
    params: dict[str, float]


class InvariantSummary(_Report):
    pd_violations: int
    max_hold_deviation: float | None
    bound_violations: int


class ExperimentReport(_Report):
    scenario_digest: str
    seed: int
    controllers: list[ControllerSummary]
    bound: BoundReport
    invariants: InvariantSummary


class VerifyReport(_Report):
    seed: int
    passed: int
    failed: int
    results: list[dict[str, str | int | bool]]


# =============================================================================
# Output layout
# =============================================================================


def invocation_dir(out: Path, command: str, config: ScenarioConfig) -> Path:
    """``out/<command>-<digest prefix>``, created if missing."""
    path = out / f'{command}-{scenario_digest(config)[:12]}'
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, model: BaseModel) -> None:
    path.write_text(model.model_dump_json(indent=2) + '\n', encoding='utf-8')
    LOGGER.info('Wrote %s', path)


def _write_timing(directory: Path, timings: dict[str, float]) -> None:
    rounded = {key: round(value, 3) for key, value in timings.items()}
    (directory / TIMING_FILE).write_text(json.dumps(rounded, indent=2), encoding='utf-8')


def _finite(value: float | None) -> float | None:
    return None if value is None or math.isnan(value) else value


def bound_report(result: BoundResult) -> BoundReport:
    return BoundReport(
        g0_grid=_finite(result.g0_grid),
        g0_grid_std_error=_finite(result.g0_grid_std_error),
        g0_pdmp=_finite(result.g0_pdmp),
        std_error=_finite(result.pdmp_std_error),
        discrepancy=_finite(result.discrepancy),
        grid_declined=result.grid_declined,
        params=result.params,
    )


def _reference_bound(result: BoundResult) -> tuple[float, float] | None:
    """The g₀ controllers are compared against, with its standard error."""
    if result.g0_grid is not None:
        return result.g0_grid, result.g0_grid_std_error or 0.0
    if result.g0_pdmp is not None:
        return result.g0_pdmp, result.pdmp_std_error or 0.0
    return None


# =============================================================================
# run
# =============================================================================


def write_traces(directory: Path, kind: str, paths: dict[int, RunPath]) -> None:
    """Per kept run: filter and control dumps per station, plus the event stream."""
    traces = directory / TRACES_DIR
    traces.mkdir(exist_ok=True)
    for run_index, path in sorted(paths.items()):
        stem = f'{kind}_run{run_index:04d}'
        for name in STATIONS:
            trace = path.traces[name]
            trace.to_frame().to_csv(traces / f'{stem}_{name}_filter.csv', index=False)
            trace.control_frame().to_csv(traces / f'{stem}_{name}_control.csv', index=False)
        write_events_csv(path.events, traces / f'{stem}_events.csv')


def summarize_controller(
    kind: str, records: Sequence[RunRecord], bound: tuple[float, float] | None
) -> ControllerSummary:
    ok = [record for record in records if record.ok]
    j_mean, std_error = summarize(records)
    filtered_mean, _ = mean_and_stderr([record.filtered_sample for record in ok])
    gaps = [record.gap_sample for record in ok if not math.isnan(record.gap_sample)]
    exceeds = None
    if bound is not None and not math.isnan(std_error):
        g0, g0_error = bound
        exceeds = j_mean > g0 + 3.0 * combined_stderr(std_error, g0_error)
    return ControllerSummary(
        kind=kind,
        runs=len(records),
        failed_runs=len(records) - len(ok),
        j_mean=j_mean,
        std_error=std_error,
        filtered_mean=filtered_mean,
        gap_mean=mean_and_stderr(gaps)[0] if gaps else None,
        max_hold_deviation=max((record.hold_deviation for record in ok), default=0.0),
        pd_violations=sum(
            not record.ok or record.min_eigenvalue <= 0.0 for record in records
        ),
        exceeds_bound=exceeds,
    )


def run_controller(
    config: ScenarioConfig, law: ControlLaw, result: BoundResult, settings: Config
) -> RunBatch:
    table = result.table if has_constant_power(config) else None
    LOGGER.info('Controller %s: %d runs', law.kind, config.runs)
    return simulate_runs(
        config,
        law,
        range(config.runs),
        table=table,
        workers=settings.workers,
        keep_paths=settings.trace_runs,
    )


def cmd_run(
    config: ScenarioConfig,
    out: Path,
    settings: Config = CONFIG,
    sigma_points: int | None = None,
    time_steps: int | None = None,
) -> ExperimentReport:
    """Simulate every configured controller and compare it with the bound."""
    directory = invocation_dir(out, 'run', config)
    timings: dict[str, float] = {}
    started = time.perf_counter()
    result = compute_bound(
        config,
        sigma_points or settings.grid_sigma_points,
        time_steps or settings.grid_time_steps,
        settings.gtable_store_every,
        settings.bound_power_paths,
        settings.pdmp_paths,
        settings.pdmp_batch,
        settings.workers,
    )
    timings['bound'] = time.perf_counter() - started
    if result.table is not None:
        result.table.export(
            directory / GTABLE_FILE,
            directory / GTABLE_HEADER_FILE,
            settings.gtable_export_slices,
        )
    bound = _reference_bound(result)

    summaries = []
    for law in config.controller:
        started = time.perf_counter()
        batch = run_controller(config, law, result, settings)
        timings[law.kind] = time.perf_counter() - started
        write_records_csv(batch.records, directory / f'runs_{law.kind}.csv')
        write_traces(directory, law.kind, batch.paths)
        summary = summarize_controller(law.kind, batch.records, bound)
        LOGGER.info(
            'J(%s) = %.6g ± %.2g (%d failed)',
            law.kind,
            summary.j_mean,
            summary.std_error,
            summary.failed_runs,
        )
        summaries.append(summary)

    holds = [s.max_hold_deviation for s in summaries if s.kind == 'optimal']
    report = ExperimentReport(
        scenario_digest=scenario_digest(config),
        seed=config.seed,
        controllers=summaries,
        bound=bound_report(result),
        invariants=InvariantSummary(
            pd_violations=sum(s.pd_violations for s in summaries),
            max_hold_deviation=max(holds) if holds else None,
            bound_violations=sum(bool(s.exceeds_bound) for s in summaries),
        ),
    )
    _write_json(directory / REPORT_FILE, report)
    _write_timing(directory, timings)
    if report.invariants.bound_violations:
        LOGGER.warning(
            '%d controllers exceed the bound by more than 3 standard errors',
            report.invariants.bound_violations,
        )
    return report


# =============================================================================
# bound
# =============================================================================


def cmd_bound(
    config: ScenarioConfig,
    out: Path,
    settings: Config = CONFIG,
    sigma_points: int | None = None,
    time_steps: int | None = None,
) -> BoundReport:
    """Both bound estimates (grid only for isotropic scenarios) and the table export."""
    directory = invocation_dir(out, 'bound', config)
    started = time.perf_counter()
    result = compute_bound(
        config,
        sigma_points or settings.grid_sigma_points,
        time_steps or settings.grid_time_steps,
        settings.gtable_store_every,
        settings.bound_power_paths,
        settings.pdmp_paths,
        settings.pdmp_batch,
        settings.workers,
    )
    if result.table is not None:
        result.table.export(
            directory / GTABLE_FILE,
            directory / GTABLE_HEADER_FILE,
            settings.gtable_export_slices,
        )
    report = bound_report(result)
    _write_json(directory / BOUND_FILE, report)
    _write_timing(directory, {'bound': time.perf_counter() - started})
    if report.discrepancy is not None:
        LOGGER.info('Grid vs PDMP discrepancy %.3g', report.discrepancy)
    return report


# =============================================================================
# verify
# =============================================================================


def _result_row(result: CheckResult) -> dict[str, str | int | bool]:
    return {
        'suite': result.suite,
        'name': result.name,
        'passed': result.passed,
        'total': result.total,
        'ok': result.ok,
        'detail': result.detail,
    }


def cmd_verify(
    context: CheckContext,
    suites: Iterable[str] | None = None,
    out: Path | None = None,
) -> VerifyReport:
    """Run the selected property suites.

    Raises:
        PropertyFailure: if any check fails; the report is written first.
    """
    results = registry.run(context, suites)
    failed = [result for result in results if not result.ok]
    report = VerifyReport(
        seed=context.seed,
        passed=len(results) - len(failed),
        failed=len(failed),
        results=[_result_row(result) for result in results],
    )
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / VERIFY_FILE, report)
    LOGGER.info('%d of %d checks passed', report.passed, len(results))
    if failed:
        names = ', '.join(f'{result.suite}/{result.name}' for result in failed)
        raise PropertyFailure(f'{len(failed)} checks failed: {names}')
    return report
