"""Property-check infrastructure for the ``verify`` command.

Checks are plain functions taking a ``CheckContext`` and returning a
``CheckOutcome``. Suite modules register them at import time under a suite name;
the registry runs a selection and turns every outcome (or crash) into a
``CheckResult``.
"""

from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
import logging
import zlib

import numpy as np

from beam_track.config import CONFIG
from beam_track.errors import DomainError
from beam_track.model import ScenarioConfig, load_scenario_file
from beam_track.symmat import FloatArray, s_map
from beam_track.utils import derive_rng

LOGGER = logging.getLogger(__name__)

SMap = Callable[[FloatArray, FloatArray, FloatArray], FloatArray]


@dataclass(frozen=True)
class CheckContext:
    """Sizes and fixtures shared by every check of one ``verify`` invocation.

    Attributes:
        seed: Master seed; each check derives its own stream from it and its name.
        trials: Random instances per matrix or statistical property.
        runs: Closed-loop runs per Monte Carlo property.
        steps: Steps per run for the long positivity runs.
        s_map: Covariance update map under test (replaced by mutation fixtures).
        dt_scale: Factor applied to the time step of the hold-invariant tolerance check.
        workers: Process pool size for closed-loop runs.
    """

    seed: int
    trials: int = 1_000
    runs: int = 100
    steps: int = 10_000
    s_map: SMap = s_map
    dt_scale: float = 1.0
    workers: int = 1

    def rng(self, name: str) -> np.random.Generator:
        return derive_rng(self.seed, zlib.crc32(name.encode('utf-8')), None, 'check')


@dataclass(frozen=True)
class CheckOutcome:
    """What a check reports: how many instances passed out of how many, and the bar."""

    passed: int
    total: int
    required: int | None = None
    detail: str = ''

    @property
    def ok(self) -> bool:
        required = self.total if self.required is None else self.required
        return self.total > 0 and self.passed >= required


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: int
    total: int
    ok: bool
    detail: str = ''


Check = Callable[[CheckContext], CheckOutcome]


@dataclass(frozen=True)
class _CheckEntry:
    suite: str
    name: str
    check: Check


@dataclass
class CheckRegistry:
    """Named checks grouped in suites, run in registration order."""

    _checks: dict[str, _CheckEntry] = field(default_factory=dict)

    def register(self, suite: str, name: str, check: Check) -> None:
        """Register a check.

        Raises:
            ValueError: If a check with the same name is already registered.
        """
        if name in self._checks:
            msg = f'Check already registered: {name}'
            raise ValueError(msg)
        self._checks[name] = _CheckEntry(suite, name, check)

    def check(self, suite: str, name: str) -> Callable[[Check], Check]:
        """Decorator form of ``register``."""

        def decorator(func: Check) -> Check:
            self.register(suite, name, func)
            return func

        return decorator

    def suites(self) -> list[str]:
        return list(dict.fromkeys(entry.suite for entry in self._checks.values()))

    def names(self, suites: Iterable[str] | None = None) -> list[str]:
        selected = None if suites is None else set(suites)
        return [
            entry.name
            for entry in self._checks.values()
            if selected is None or entry.suite in selected
        ]

    def run_one(self, name: str, context: CheckContext) -> CheckResult:
        entry = self._checks[name]
        try:
            outcome = entry.check(context)
        except Exception as e:
            LOGGER.exception('Check %s crashed', name)
            return CheckResult(entry.suite, name, 0, 0, False, f'{type(e).__name__}: {e}')
        level = logging.INFO if outcome.ok else logging.WARNING
        LOGGER.log(
            level,
            '%s %s/%s: %d/%d %s',
            'PASS' if outcome.ok else 'FAIL',
            entry.suite,
            name,
            outcome.passed,
            outcome.total,
            outcome.detail,
        )
        return CheckResult(
            entry.suite, name, outcome.passed, outcome.total, outcome.ok, outcome.detail
        )

    def run(
        self, context: CheckContext, suites: Iterable[str] | None = None
    ) -> list[CheckResult]:
        """Run every check of the selected suites (all suites when None).

        Raises:
            DomainError: If a selected suite has no checks.
        """
        if suites is not None:
            suites = list(suites)
            unknown = set(suites) - set(self.suites())
            if unknown:
                raise DomainError(f'unknown suites: {", ".join(sorted(unknown))}')
        return [self.run_one(name, context) for name in self.names(suites)]


registry = CheckRegistry()
"""Global check registry instance."""


def bundled_scenario(name: str) -> ScenarioConfig:
    """One of the reference scenarios shipped with the package."""
    return load_scenario_file(CONFIG.scenario_path(name))
