"""
hrg-extremes experiment pipeline

Runs one experiment config end to end: replicate counts, the raw counts CSV
and the JSON report comparing them with the limit constants.

Steps:
- counts: sample, build the distance-R graph, count isolated/extreme points
- export: write `<name>_counts.csv`
- report: write `<name>_report.json`

Modules:
- experiments: config loader, replicate runner, report sections
- measures: limit constants and variance constants
- sampler / graph / scores: one replicate
"""

import os
import sys
import logging

from modules.config import HrgError, ParameterError, PreconditionError, set_quiet_mode, safe_print
from modules.experiments import (
    ExperimentRunner,
    build_report,
    load_experiment_config,
    read_counts_csv,
    write_counts_csv,
    write_report,
)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_INTERRUPTED = 130


def output_paths(config, out_dir):
    return (
        os.path.join(out_dir, f"{config.name}_counts.csv"),
        os.path.join(out_dir, f"{config.name}_report.json"),
    )


def run_pipeline(config_path, out_dir, threads=None, quiet=False):
    """Run counts, export and report for one config; returns an exit code"""
    logger = logging.getLogger(__name__)
    logger.info(f"Starting experiment pipeline for {config_path}")

    set_quiet_mode(quiet)

    safe_print("Starting hrg-extremes experiment pipeline...")
    safe_print("=" * 50)

    try:
        config = load_experiment_config(config_path)
    except (HrgError, KeyError, TypeError, ValueError) as e:
        error_msg = f"Invalid experiment config: {e}"
        safe_print(error_msg)
        logger.error(error_msg)
        return EXIT_USAGE
    except OSError as e:
        error_msg = f"Cannot read config: {e}"
        safe_print(error_msg)
        logger.error(error_msg)
        return EXIT_IO

    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        safe_print(f"Cannot create output directory: {e}")
        logger.error(f"Cannot create output directory {out_dir}: {e}")
        return EXIT_IO

    csv_path, report_path = output_paths(config, out_dir)
    success_count = 0
    total_steps = 3
    rows = None

    # Step 1: replicate counts
    safe_print("\nStep 1/3: Running replicate counts...")
    safe_print("-" * 30)
    logger.info("Step 1/3: Running replicate counts")

    try:
        runner = ExperimentRunner(config, threads=threads)
        rows = runner.run_counts(partial_path=csv_path)
        success_msg = f"Counts completed! Replicates: {len(rows)}"
        safe_print(success_msg)
        logger.info(success_msg)
        success_count += 1
    except KeyboardInterrupt:
        msg = f"Interrupted; partial counts in {csv_path}"
        safe_print(f"\n{msg}")
        logger.warning(msg)
        return EXIT_INTERRUPTED
    except (ParameterError, PreconditionError) as e:
        error_msg = f"Counts refused: {e}"
        safe_print(error_msg)
        logger.error(error_msg)
        return EXIT_USAGE
    except Exception as e:
        error_msg = f"Counts error: {e}"
        safe_print(error_msg)
        logger.error(error_msg, exc_info=True)

    if rows is None:
        return EXIT_PARTIAL

    # Step 2: raw counts CSV
    safe_print("\nStep 2/3: Writing raw counts...")
    safe_print("-" * 30)
    logger.info("Step 2/3: Writing raw counts")

    try:
        write_counts_csv(rows, csv_path)
        safe_print(f"Counts written to {csv_path}")
        success_count += 1
    except OSError as e:
        error_msg = f"Cannot write counts: {e}"
        safe_print(error_msg)
        logger.error(error_msg, exc_info=True)
        return EXIT_IO

    # Step 3: report
    safe_print("\nStep 3/3: Building report...")
    safe_print("-" * 30)
    logger.info("Step 3/3: Building report")

    try:
        report = build_report(config, rows)
        write_report(report, report_path)
        safe_print(f"Report written to {report_path}")
        if report.skipped:
            safe_print(f"   Sections skipped: {', '.join(sorted(report.skipped))}")
        success_count += 1
    except OSError as e:
        error_msg = f"Cannot write report: {e}"
        safe_print(error_msg)
        logger.error(error_msg, exc_info=True)
        return EXIT_IO
    except Exception as e:
        error_msg = f"Report error: {e}"
        safe_print(error_msg)
        logger.error(error_msg, exc_info=True)

    # Final Summary
    safe_print("\n" + "=" * 50)
    safe_print("PROCESS SUMMARY")
    safe_print("=" * 50)
    safe_print(f"Completed steps: {success_count}/{total_steps}")

    logger.info(f"Pipeline completed: {success_count}/{total_steps} steps successful")

    if success_count == total_steps:
        final_msg = "All steps completed successfully!"
        safe_print(final_msg)
        logger.info(final_msg)
        return EXIT_OK
    final_msg = "Pipeline completed with some issues."
    safe_print(final_msg)
    logger.warning(final_msg)
    return EXIT_PARTIAL


def run_report_only(config_path, counts_path, report_path):
    """Rebuild the report from an existing counts CSV"""
    logger = logging.getLogger(__name__)
    logger.info("Running report only")
    config = load_experiment_config(config_path)
    rows = read_counts_csv(counts_path)
    report = build_report(config, rows)
    write_report(report, report_path)
    logger.info(f"Report only completed: {report_path}")
    return report


if __name__ == "__main__":
    if len(sys.argv) != 3:
        print("usage: python main.py CONFIG OUT_DIR")
        sys.exit(EXIT_USAGE)
    sys.exit(run_pipeline(sys.argv[1], sys.argv[2]))
