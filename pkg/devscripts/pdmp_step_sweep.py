"""Print the PDMP g₀ estimate as the time step is halved.

Usage:
    uv run python -m devscripts.pdmp_step_sweep [--scenario NAME] [--paths 20000]
"""

import argparse

from beam_track.bound import estimate_bound_pdmp
from beam_track.config import CONFIG
from beam_track.model import with_overrides
from devscripts.bootstrap import print_config, scenario


def main() -> None:
    parser = argparse.ArgumentParser(description='PDMP time-step sweep')
    parser.add_argument('--scenario', default='reference_isotropic')
    parser.add_argument('--paths', type=int, default=20_000)
    parser.add_argument('--halvings', type=int, default=3)
    args = parser.parse_args()
    print_config(scenario=args.scenario, paths=args.paths)

    base = scenario(args.scenario)
    # Start coarse: the bundled scenarios use the finest step they need
    dt = base.dt * 2**args.halvings
    for _ in range(args.halvings + 1):
        config = with_overrides(base, dt=dt)
        g0, std_error = estimate_bound_pdmp(
            config, args.paths, CONFIG.pdmp_batch, CONFIG.workers
        )
        print(f'dt={dt:.2e}   g0={g0:.6f} ± {std_error:.1e}')
        dt /= 2.0


if __name__ == '__main__':
    main()
