import argparse
import logging
import sys

from src.db import init_db, save_report
from src.export import compare_reports, emit_report
from src.scenario import PRESETS, parse_scenario
from src.suites import run_checks


def run_scenario(source,
                 out: str | None = None,
                 seed: int | None = None,
                 fmt: str | None = None,
                 to_db: bool = False,
                 db_path: str = 'data/db/phaseflow.db',
                 log_level: str = 'INFO') -> object:
    """
    Executa cenário: parse -> checks da camada -> (relatório em disco) -> (db)
    Aceita caminho, nome de preset ou ScenarioConfig já validado.
    Retorna o RunReport.
    """
    numeric_level = getattr(logging, log_level.upper(), logging.INFO)
    logging.basicConfig(level=numeric_level, format='%(levelname)s: %(message)s')
    logger = logging.getLogger(__name__)

    config = parse_scenario(source) if isinstance(source, str) else source
    if seed is not None:
        config = config.with_seed(seed)
    config = config.with_output(out, fmt)
    logger.info("Running scenario %s (layer=%s, checks=%s)", config.name, config.layer, ",".join(config.checks))

    report = run_checks(config)

    out_dir = config.output["dir"]
    paths = emit_report(report, out_dir, config.output["format"])
    logger.info(f"[emit] {len(paths)} arquivos em {out_dir}")

    if to_db:
        logger.info(f"Initializing DB and saving to SQLite: {db_path}")
        engine = init_db(db_path)
        save_report(engine, report)

    failed = [c.name for c in report.checks if not c.passed]
    logger.info("Scenario finished in %.2fs: %d/%d checks passed", report.wall_time,
                len(report.checks) - len(failed), len(report.checks))
    if failed:
        logger.warning("Checks reprovados: %s", ", ".join(failed))
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Run PhaseFlow verification scenarios")
    parser.add_argument('--log-level', default='INFO', help='Logging level (DEBUG, INFO, WARNING, ERROR)')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='Run a scenario file or built-in preset')
    run.add_argument('config', help='Path to scenario file or preset name')
    run.add_argument('--out', required=False, help='Output directory (overrides [output] dir)')
    run.add_argument('--seed', type=int, default=None, help='Seed for randomized probes')
    run.add_argument('--format', dest='fmt', choices=['csv', 'text'], default=None, help='Report format')
    run.add_argument('--to-db', action='store_true', help='Archive the report in SQLite')
    run.add_argument('--db', dest='db_path', default='data/db/phaseflow.db', help='SQLite DB path')

    sub.add_parser('list', help='Print built-in scenario presets')

    cmp = sub.add_parser('compare', help='Tolerance-aware diff of two CSV reports')
    cmp.add_argument('report_a')
    cmp.add_argument('report_b')
    cmp.add_argument('--rtol', type=float, default=1e-9, help='Relative tolerance on values')

    args = parser.parse_args(argv)

    if args.command == 'list':
        for name in sorted(PRESETS):
            print(name)
        return 0

    if args.command == 'compare':
        numeric_level = getattr(logging, args.log_level.upper(), logging.INFO)
        logging.basicConfig(level=numeric_level, format='%(levelname)s: %(message)s')
        diff = compare_reports(args.report_a, args.report_b, rtol=args.rtol)
        if diff.empty:
            print("reports match")
            return 0
        print(diff.to_string(index=False))
        return 1

    report = run_scenario(args.config,
                          out=args.out,
                          seed=args.seed,
                          fmt=args.fmt,
                          to_db=args.to_db,
                          db_path=args.db_path,
                          log_level=args.log_level)
    return report.exit_code


if __name__ == '__main__':
    sys.exit(main())
