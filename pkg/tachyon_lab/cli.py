"""
Command line entry point::

    tachyon-lab run <scenario> --config demo.json [--out DIR] [--check]
    tachyon-lab list
    tachyon-lab validate --config demo.json

Exit codes: 0 success, 2 usage or configuration error, 3 physics guard,
4 failed acceptance check (``--check`` only).
"""
import logging
import os
import sys
from argparse import ArgumentParser
from pathlib import Path

import pytorch_lightning as pl

from tachyon_lab import __version__
from tachyon_lab.config import load_config
from tachyon_lab.errors import AcceptanceError, TachyonLabError
from tachyon_lab.scenarios import SCENARIOS, require_margin, run_scenario

log = logging.getLogger(__name__)

OUT_ENV = "TACHYON_LAB_OUT"
DEFAULT_OUT = "results"


def add_run_args(parent_parser):
    parser = ArgumentParser(parents=[parent_parser], add_help=False)
    parser.add_argument('scenario', choices=sorted(SCENARIOS))
    parser.add_argument('--config', required=True, type=Path)
    parser.add_argument('--out', type=Path, default=None)
    parser.add_argument('--check', action='store_true', help='fail with exit code 4 if an acceptance check fails')
    parser.add_argument('--seed', type=int, default=1234)
    return parser


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument('-v', '--verbose', action='store_true')

    parser = ArgumentParser(prog='tachyon-lab')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    commands = parser.add_subparsers(dest='command', required=True)
    commands.add_parser('run', parents=[add_run_args(common)], help='run one scenario')
    commands.add_parser('list', parents=[common], help='list the scenarios')
    validate = commands.add_parser('validate', parents=[common], help='check a config without running it')
    validate.add_argument('--config', required=True, type=Path)
    return parser


def _output_directory(args, config) -> Path:
    if args.out is not None:
        return args.out
    if config.output.directory:
        return Path(config.output.directory)
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


def _run(args) -> int:
    pl.seed_everything(args.seed)
    config = load_config(args.config)
    record = run_scenario(args.scenario, config)
    directory = _output_directory(args, config)
    written = record.write(directory)
    print(f"{args.scenario}: wrote {len(written)} files to {directory}")
    failed = record.failed_checks
    for name in failed:
        log.warning("acceptance check %s failed", name)
    if args.check and failed:
        raise AcceptanceError(f"{args.scenario}: failed checks {', '.join(failed)}")
    return 0


def _validate(args) -> int:
    config = load_config(args.config)
    margin = require_margin(config, config.schedule.horizon)
    print(f"{args.config}: ok (sha256 {config.digest[:12]}, domain margin {margin:.4g})")
    return 0


def cli_main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(levelname)s %(name)s: %(message)s',
        stream=sys.stderr,
    )

    if args.command == 'list':
        for name in sorted(SCENARIOS):
            print(f"{name:14s} {SCENARIOS[name][1]}")
        return 0
    try:
        return _run(args) if args.command == 'run' else _validate(args)
    except TachyonLabError as err:
        log.error("%s", err)
        return err.exit_code


if __name__ == '__main__':
    sys.exit(cli_main())
