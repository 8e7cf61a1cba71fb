"""
Command line entry point.

    random-chemostat simulate  --config run.json [--override a=0] [--seed 3] [--out dir]
    random-chemostat analyze   --config run.json [--paper-verbatim-f] [--proof-consistent]
    random-chemostat ensemble  --config run.json --out dir [--seed 1 2 3]
    random-chemostat reproduce --figure 3 [--seed 1] [--out dir]   (default ./out/fig3)

Diagnostics go to standard error, tables and CSV data to standard output.
Exit status: 0 success, 1 configuration error, 2 integration blowup,
3 analysis error.
"""
import argparse
import os
import sys
from dataclasses import replace
from typing import List, Optional

from random_chemostat.analysis import report
from random_chemostat.experiment import ExperimentPreset, default_export_path
from random_chemostat.integrator import SimConfig, integrate
from random_chemostat.model import to_aggregate
from random_chemostat.noise import CSV_FLOAT_FORMAT, NoiseConfig, NoisePath, sample_ou_path
from random_chemostat.utils.exceptions import ChemostatError, ConfigurationError, exit_code
from random_chemostat.utils.helpers import RunConfig, load_config, save_config, write_json
from random_chemostat.utils.logger import logger, verbosity_level

logger = logger()


class ArgumentParser(argparse.ArgumentParser):
    """Turns argparse usage errors into ConfigurationError (exit 1)."""

    def error(self, message):
        raise ConfigurationError(f"{self.prog}: {message}")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog='random-chemostat',
                            description='Random chemostat simulation and analysis')
    subparsers = parser.add_subparsers(dest='command', parser_class=ArgumentParser)
    subparsers.required = True

    common = ArgumentParser(add_help=False)
    common.add_argument('--verbosity', type=int, default=1,
                        help='0: warnings only, 1: info (default), 2: debug')
    common.add_argument('--out', default=None, help='output directory')
    common.add_argument('--override', action='append', default=[], metavar='KEY=VALUE',
                        help='dotted override applied onto the config, repeatable')

    seeded = ArgumentParser(add_help=False)
    seeded.add_argument('--seed', type=int, nargs='+', default=None,
                        help='noise seed(s), replacing the configured list')

    with_config = ArgumentParser(add_help=False)
    with_config.add_argument('--config', required=True, help='JSON or YAML config file')
    with_config.add_argument('--save-config', default=None, metavar='PATH',
                             help='write the config after overrides to PATH')

    variants = ArgumentParser(add_help=False)
    variants.add_argument('--paper-verbatim-f', action='store_true',
                          help='evaluate s* without s_in in the consumption coefficient')
    variants.add_argument('--proof-consistent', action='store_true',
                          help='use the proof-consistent persistence conditions')

    simulate = subparsers.add_parser('simulate', parents=[common, seeded, with_config],
                                     help='integrate one trajectory')
    simulate.add_argument('--competition', choices=('printed', 'consistent'), default=None,
                          help='integrate the aggregate (s, m, p) system with this crowding term')
    subparsers.add_parser('analyze', parents=[common, with_config, variants],
                          help='evaluate the extinction and persistence conditions')
    subparsers.add_parser('ensemble', parents=[common, seeded, with_config, variants],
                          help='deterministic reference plus seeded noisy runs')
    reproduce = subparsers.add_parser('reproduce', parents=[common, seeded, variants],
                                      help='rerun one of the four published experiments, '
                                           'writing to ./out/fig<N> unless --out is given')
    reproduce.add_argument('--figure', type=int, required=True, choices=(1, 2, 3, 4))
    return parser


def _load(args) -> RunConfig:
    cfg = load_config(args.config, args.override)
    if args.save_config:
        save_config(cfg, args.save_config)
        logger.debug(f"Config saved at {args.save_config}")
    return cfg


def _simulate(args) -> None:
    cfg = _load(args)
    sim, params = cfg.simulation, cfg.params
    initial = sim.initial_state
    if args.competition is not None:
        initial = to_aggregate(initial, params)
    sim_config = SimConfig(t_end=sim.t_end, initial=initial, dt=sim.dt,
                           record_every=sim.record_every,
                           competition=args.competition or 'printed')
    if params.is_deterministic:
        noise, name = NoisePath.zeros(sim.t_end, sim.dt), 'traj_det.csv'
    else:
        seeds = args.seed or sim.seed_list or [1]
        noise = sample_ou_path(NoiseConfig(seed=seeds[0], t_end=sim.t_end, dt=sim.dt,
                                           burn_in=sim.burn_in))
        name = f"traj_seed{seeds[0]}.csv"
    trajectory = integrate(params, noise, sim_config)
    if args.out is None:
        trajectory.to_frame().to_csv(sys.stdout, index=False, float_format=CSV_FLOAT_FORMAT)
    else:
        os.makedirs(args.out, exist_ok=True)
        trajectory.to_csv(os.path.join(args.out, name))
        logger.info(f"Saved at {os.path.join(args.out, name)}")


def _analyze(args) -> None:
    cfg = _load(args)
    result = report(cfg.params, paper_verbatim_f=args.paper_verbatim_f,
                    strict_proof_consistent=args.proof_consistent,
                    verbosity=args.verbosity)
    print(result.to_table())
    if args.out is not None:
        write_json(result.to_dict(), os.path.join(args.out, 'analysis.json'))


def _ensemble(preset: ExperimentPreset, args) -> None:
    summary = preset.run(export_path=args.out, paper_verbatim_f=args.paper_verbatim_f,
                         strict_proof_consistent=args.proof_consistent,
                         verbosity=args.verbosity)
    print(summary.to_frame().to_string(index=False))
    print(f"classification: {summary.classification}")


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one subcommand

    Parameters
    ----------
    argv : List[str], optional
        Arguments without the program name, by default sys.argv[1:]

    Returns
    -------
    int
        Exit status
    """
    try:
        args = build_parser().parse_args(argv)
        logger.setLevel(verbosity_level(args.verbosity).upper())
        if args.command == 'simulate':
            _simulate(args)
        elif args.command == 'analyze':
            _analyze(args)
        elif args.command == 'ensemble':
            preset = ExperimentPreset.from_config(_load(args))
            if args.seed:
                preset = replace(preset, seeds=args.seed)
            _ensemble(preset, args)
        else:
            if args.override:
                raise ConfigurationError("reproduce runs the published values; "
                                         "use ensemble with a config to change them")
            name = f"fig{args.figure}"
            if args.out is None:
                args.out = default_export_path(name)
            _ensemble(ExperimentPreset.from_name(name, seeds=args.seed), args)
    except SystemExit as error:
        return error.code if isinstance(error.code, int) else 0
    except ChemostatError as error:
        logger.error(str(error))
        return exit_code(error)
    return 0


if __name__ == '__main__':
    sys.exit(main())
