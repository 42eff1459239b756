"""
cacheleak command line

  cacheleak serve --config F [--realtime]
  cacheleak attack psa|pna|doc --config F [--assert]
  cacheleak mitigate ksweep|anonymize --config F [--assert]
  cacheleak roc kv|semantic --config F [--assert]
  cacheleak roc --input samples.csv
  cacheleak check [--config F]

Every configuration key is also a flag: section.key becomes --section-key.
Exit codes: 0 success, 1 error, 2 failed acceptance check with --assert
(or usage error), 130 interrupted.
"""

import argparse
import logging
import sys
from typing import Dict, List, Optional

from .check_setup import run_checks
from .config import ExperimentConfig, config_keys, load_config
from .engine import ServingEngine
from .errors import CacheLeakError
from .report import export_to_csv, output_path
from .roc import ROC_FIELDS, read_samples, roc, roc_rows
from .server import make_server

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ASSERT = 2
EXIT_INTERRUPTED = 130

ATTACKS = ('psa', 'pna', 'doc')
MITIGATIONS = ('ksweep', 'anonymize')
ROC_KINDS = {'kv': 'roc-kv', 'semantic': 'roc-semantic'}


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', help='TOML experiment configuration')
    parser.add_argument('--debug', action='store_true', help='Enable debug logging')
    group = parser.add_argument_group('configuration overrides')
    for key in config_keys():
        if key.dotted == 'debug':
            continue
        group.add_argument(key.flag, dest=f"set:{key.dotted}", metavar='VALUE', default=argparse.SUPPRESS,
                           help=f"Override {key.dotted}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='cacheleak', description='LLM cache timing side-channel lab')
    commands = parser.add_subparsers(dest='command', required=True)

    serve = commands.add_parser('serve', help='Run the serving engine over HTTP')
    serve.add_argument('--realtime', action='store_true', help='Pace events by their virtual timestamps')
    _add_config_flags(serve)

    attack = commands.add_parser('attack', help='Run an attack scenario')
    attack.add_argument('scenario', choices=ATTACKS)
    attack.add_argument('--assert', dest='check', action='store_true', help='Exit 2 if a check fails')
    _add_config_flags(attack)

    mitigate = commands.add_parser('mitigate', help='Run a mitigation scenario')
    mitigate.add_argument('scenario', choices=MITIGATIONS)
    mitigate.add_argument('--assert', dest='check', action='store_true', help='Exit 2 if a check fails')
    _add_config_flags(mitigate)

    roc_cmd = commands.add_parser('roc', help='Leakage characterization, or ROC of a samples file')
    roc_cmd.add_argument('kind', nargs='?', choices=sorted(ROC_KINDS))
    roc_cmd.add_argument('--input', help='CSV with label and score (or delta_ms) columns')
    roc_cmd.add_argument('--assert', dest='check', action='store_true', help='Exit 2 if a check fails')
    _add_config_flags(roc_cmd)

    check = commands.add_parser('check', help='Verify the installation and configuration')
    check.add_argument('--config', help='TOML experiment configuration')
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, str]:
    return {name[len('set:'):]: value for name, value in vars(args).items() if name.startswith('set:')}


def _setup_logging(debug: bool) -> None:
    logging.basicConfig(level=logging.DEBUG if debug else logging.INFO,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')


def _banner(title: str) -> None:
    print("=" * 70)
    print(title)
    print("=" * 70)
    print()


def _load(args: argparse.Namespace, scenario: Optional[str] = None) -> ExperimentConfig:
    overrides = _overrides(args)
    if scenario is not None:
        overrides['scenario'] = scenario
    if getattr(args, 'debug', False):
        overrides['debug'] = 'true'
    return load_config(args.config, overrides)


def cmd_serve(args: argparse.Namespace) -> int:
    _banner("cacheleak - Serving Engine")
    print("Step 1: Loading configuration...")
    config = _load(args)
    _setup_logging(config.debug)
    if args.realtime:
        config.server.realtime = True
    engine = ServingEngine(latency=config.latency, kv_config=config.kv_cache,
                           semantic_config=config.semantic_cache)
    server = make_server(engine, config.server)
    print(f"Step 2: Listening on {server.url} (admin={config.server.admin}, realtime={config.server.realtime})")
    print("Press Ctrl+C to stop.")
    try:
        server.serve_forever()
    finally:
        engine.close()
        server.server_close()
    return EXIT_OK


def cmd_scenario(args: argparse.Namespace, scenario: str) -> int:
    from .scenarios import run

    _banner(f"cacheleak - Scenario: {scenario}")
    print("Step 1: Loading configuration...")
    config = _load(args, scenario)
    _setup_logging(config.debug)
    print(f"  seed = {config.seed}, output_dir = {config.output_dir}")
    print()

    print("Step 2: Running scenario...")
    result = run(config)
    print()

    print("Step 3: Reports written:")
    for path in result.files:
        print(f"  {path}")
    print()

    print("Checks:")
    for check in result.checks:
        status = 'OK' if check.passed else 'FAIL'
        detail = f" ({check.detail})" if check.detail else ''
        print(f"  [{status}] {check.name}{detail}")
    passed = sum(1 for c in result.checks if c.passed)
    print()
    print("=" * 70)
    print(f"Check Results: {passed}/{len(result.checks)} passed")
    print("=" * 70)

    if args.check and not result.passed:
        print("ERROR: Acceptance checks failed")
        return EXIT_ASSERT
    return EXIT_OK


def cmd_roc_file(args: argparse.Namespace) -> int:
    _banner("cacheleak - ROC from samples")
    config = _load(args)
    _setup_logging(config.debug)
    scores, labels = read_samples(args.input)
    points, auc = roc(scores, labels)
    path = output_path(config.output_dir, 'roc.csv')
    export_to_csv(roc_rows(points), path, ROC_FIELDS)
    print(f"Samples: {len(scores)}  AUC: {auc:.4f}")
    print(f"ROC written to: {path}")
    return EXIT_OK


def dispatch(args: argparse.Namespace) -> int:
    if args.command == 'serve':
        return cmd_serve(args)
    if args.command in ('attack', 'mitigate'):
        return cmd_scenario(args, args.scenario)
    if args.command == 'roc':
        if args.input:
            return cmd_roc_file(args)
        if not args.kind:
            print("ERROR: roc needs a kind (kv or semantic) or --input FILE")
            return EXIT_ASSERT
        return cmd_scenario(args, ROC_KINDS[args.kind])
    return run_checks(args.config)


def main(argv: Optional[List[str]] = None) -> int:
    """Main execution function."""
    args = build_parser().parse_args(argv)
    try:
        return dispatch(args)
    except KeyboardInterrupt:
        print("\nInterrupted.")
        return EXIT_INTERRUPTED
    except CacheLeakError as e:
        print(f"ERROR: {e}")
        return EXIT_ERROR
    except OSError as e:
        print(f"ERROR: {e}")
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
