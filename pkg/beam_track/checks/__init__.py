"""Property checks run by ``beam-track verify``.

Re-exports the registry API. Suite modules in this package register their
checks at import time; importing this package activates every suite.

Adding a check:
    1. Write ``def my_check(context: CheckContext) -> CheckOutcome`` in a suite module
    2. Decorate it with ``@registry.check(SUITE, 'my_check')``
    3. For a new suite module, add its import at the bottom of this file
"""

from beam_track.checks.registry import (
    CheckContext,
    CheckOutcome,
    CheckRegistry,
    CheckResult,
    bundled_scenario,
    registry,
)

__all__ = [
    'CheckContext',
    'CheckOutcome',
    'CheckRegistry',
    'CheckResult',
    'bundled_scenario',
    'registry',
]

# ---- Suite registration imports ----
# Registration order is the run order of `verify`.
from beam_track.checks import matrix as matrix  # noqa: F401, E402
from beam_track.checks import points as points  # noqa: F401, E402
from beam_track.checks import filter as filter  # noqa: F401, E402
from beam_track.checks import control as control  # noqa: F401, E402
from beam_track.checks import objective as objective  # noqa: F401, E402
from beam_track.checks import bound as bound  # noqa: F401, E402
from beam_track.checks import corollary as corollary  # noqa: F401, E402
