"""Print g₀ from the grid solver over a ladder of resolutions.

Usage:
    uv run python -m devscripts.grid_sweep [--scenario reference_isotropic] [--levels 4]
"""

import argparse

from beam_track.bound import isotropic_reduction, solve_g_isotropic
from devscripts.bootstrap import print_config, scenario


def main() -> None:
    parser = argparse.ArgumentParser(description='Grid resolution sweep')
    parser.add_argument('--scenario', default='reference_isotropic')
    parser.add_argument('--levels', type=int, default=4)
    args = parser.parse_args()
    print_config(scenario=args.scenario, levels=args.levels)

    config = scenario(args.scenario)
    params = isotropic_reduction(config)
    nu_a = config.optics.eta * config.stations.a.power.mean_power
    nu_b = config.optics.eta * config.stations.b.power.mean_power

    previous = None
    for level in range(args.levels):
        points, steps = 32 * 2**level, 256 * 2**level
        g0 = solve_g_isotropic(params, nu_a, nu_b, points, steps).g0
        change = '' if previous is None else f'  Δ={g0 - previous:+.3e}'
        print(f'{points:5d} σ × {steps:6d} steps   g0={g0:.8f}{change}')
        previous = g0


if __name__ == '__main__':
    main()
