"""
hrg-extremes command line

Subcommands:
- generate:   sample a Poisson point set (disc or ideal band) into a CSV
- graph:      build the distance-R graph of a point CSV into an edge list
- constants:  evaluate the limit constants by quadrature
- experiment: run an experiment config (counts CSV + report JSON)

Exit codes:
- 0 success
- 1 partial pipeline or quadrature failure
- 2 invalid parameters, config or precondition
- 3 I/O failure
- 4 invariant breach (builder verification mismatch)
- 130 interrupted experiment
"""

import os
import sys
import json
import math
import logging
import argparse

from modules.config import (
    DATE_FORMAT,
    LOG_FORMAT,
    HrgError,
    InvariantBreach,
    ParameterError,
    PreconditionError,
    load_settings,
    set_quiet_mode,
)
from modules.experiments import json_safe
from modules.graph import GraphBuilder, write_edge_list
from modules.measures import (
    Truncation,
    ext_expectation_constant,
    iso_expectation_constant,
    sigma_ext_constant,
)
from modules.model import make_params, mean_degree_constant
from modules.sampler import read_point_csv, sample_band, sample_disc, write_point_csv
from main import EXIT_IO, EXIT_OK, EXIT_USAGE, run_pipeline

EXIT_BREACH = 4
EXIT_FAILURE = 1

# constants depend on (alpha, nu) only; any admissible n gives the same values
REFERENCE_LOG_RATIO = 30.0


def setup_logging(quiet=False, log_level=None):
    """Setup logging configuration for quiet and normal modes"""
    settings = load_settings()
    logs_dir = settings.log_dir
    if not os.path.isabs(logs_dir):
        logs_dir = os.path.join(os.path.dirname(os.path.abspath(__file__)), logs_dir)
    os.makedirs(logs_dir, exist_ok=True)

    log_file = os.path.join(logs_dir, "hrg_extremes.log")
    level = getattr(logging, (log_level or settings.log_level).upper(), logging.INFO)

    logging.basicConfig(
        level=level,
        format=LOG_FORMAT,
        datefmt=DATE_FORMAT,
        handlers=[
            logging.FileHandler(log_file, mode="a", encoding="utf-8"),
            logging.StreamHandler() if not quiet else logging.NullHandler(),
        ],
    )

    logger = logging.getLogger(__name__)
    logger.info(f"Logging initialized. Mode: {'Quiet' if quiet else 'Normal'}")
    logger.info(f"Log file: {log_file}")

    return logger


def emit(payload):
    """JSON result on stdout"""
    sys.stdout.write(json.dumps(json_safe(payload), indent=2, sort_keys=True, allow_nan=False) + "\n")
    sys.stdout.flush()


def cmd_generate(args):
    params = make_params(args.alpha, args.nu, args.n, args.C_eps)
    if args.band:
        ps = sample_band(params, args.seed, y_max=args.y_max)
    else:
        ps = sample_disc(params, args.seed)
    write_point_csv(ps, args.out)
    emit(
        {
            "N": len(ps),
            "R": params.R,
            "H": params.H,
            "seed": args.seed,
            "process_kind": ps.process_kind.value,
            "out": args.out,
        }
    )
    return EXIT_OK


def cmd_graph(args):
    logger = logging.getLogger(__name__)
    ps = read_point_csv(args.input)
    builder = GraphBuilder(args.builder)
    g = builder.build(ps)
    verified = False
    if args.verify:
        verified = builder.verify(ps, g)
    write_edge_list(g, args.out, ps)
    logger.info(f"Graph built: {g.n_vertices} vertices, {g.n_edges} edges")
    emit(
        {
            "n_vertices": g.n_vertices,
            "n_edges": g.n_edges,
            "builder": args.builder,
            "verified": verified,
            "out": args.out,
        }
    )
    return EXIT_OK


def constants_payload(alpha, nu, image_intensity=False, sigma2=False, y_cut=30.0, z_cut=None):
    """The values printed by the constants subcommand"""
    params = make_params(alpha, nu, nu * math.exp(REFERENCE_LOG_RATIO))
    intensity = params.disc_beta if image_intensity else params.beta
    payload = {
        "alpha": params.alpha,
        "nu": params.nu,
        "intensity": intensity,
        "iso_constant": iso_expectation_constant(params, intensity=intensity),
        "ext_constant": ext_expectation_constant(params, intensity=intensity),
        "mean_degree_constant": mean_degree_constant(params),
    }
    if sigma2:
        result = sigma_ext_constant(params, Truncation(y_cut=y_cut, z_cut=z_cut), intensity=intensity)
        payload["sigma2"] = result.value
        payload["truncation_report"] = result.truncation_report()
    return payload


def cmd_constants(args):
    emit(constants_payload(args.alpha, args.nu, args.image_intensity, args.sigma2, args.ycut, args.zcut))
    return EXIT_OK


def cmd_experiment(args):
    return run_pipeline(args.config, args.out_dir, threads=args.threads, quiet=args.quiet)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hrg-extremes",
        description="Hyperbolic random geometric graphs: isolated and extreme points",
    )
    parser.add_argument("-q", "--quiet", action="store_true", help="Log to file only")
    parser.add_argument("--log-level", default=None, help="Override HRG_LOG_LEVEL")
    parser.add_argument("--help-extended", action="store_true", help="Show extended help message")
    sub = parser.add_subparsers(dest="command")

    gen = sub.add_parser("generate", help="Sample a point set into a CSV")
    gen.add_argument("--alpha", type=float, required=True)
    gen.add_argument("--nu", type=float, required=True)
    gen.add_argument("--n", type=float, required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--C-eps", dest="C_eps", type=float, default=None)
    gen.add_argument("--band", action="store_true", help="Sample the ideal band process")
    gen.add_argument("--y-max", dest="y_max", type=float, default=None)
    gen.set_defaults(handler=cmd_generate)

    gr = sub.add_parser("graph", help="Build the distance-R graph of a point CSV")
    gr.add_argument("--in", dest="input", required=True)
    gr.add_argument("--out", required=True)
    gr.add_argument("--builder", choices=("fast", "brute"), default="fast")
    gr.add_argument("--verify", action="store_true", help="Cross-check fast against brute force")
    gr.set_defaults(handler=cmd_graph)

    con = sub.add_parser("constants", help="Limit constants by quadrature")
    con.add_argument("--alpha", type=float, required=True)
    con.add_argument("--nu", type=float, required=True)
    con.add_argument("--sigma2", action="store_true", help="Also evaluate the extreme-count variance constant")
    con.add_argument("--ycut", type=float, default=30.0)
    con.add_argument("--zcut", type=float, default=None)
    con.add_argument(
        "--image-intensity",
        action="store_true",
        help="Use the intensity of the disc image (nu alpha / pi) instead of 2 nu alpha / pi",
    )
    con.set_defaults(handler=cmd_constants)

    exp = sub.add_parser("experiment", help="Run an experiment config")
    exp.add_argument("--config", required=True)
    exp.add_argument("--out-dir", dest="out_dir", required=True)
    exp.add_argument("--threads", type=int, default=None)
    exp.set_defaults(handler=cmd_experiment)

    return parser


def print_extended_help():
    print("hrg-extremes")
    print("\nUsage:")
    print("  python app.py generate --alpha 1.5 --nu 1 --n 4096 --seed 7 --out pts.csv")
    print("  python app.py graph --in pts.csv --out edges.txt --verify")
    print("  python app.py constants --alpha 1.5 --nu 1 --sigma2")
    print("  python app.py experiment --config configs/smoke.toml --out-dir results")
    print("\nOutputs:")
    print("  generate, graph and constants print one JSON object on stdout.")
    print("  experiment writes <name>_counts.csv and <name>_report.json.")
    print("\nEnvironment:")
    print("  HRG_LOG_DIR, HRG_LOG_LEVEL, HRG_THREADS, HRG_POINT_BUDGET, HRG_BRUTE_LIMIT")


def main(argv=None):
    """Main function"""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.help_extended:
        print_extended_help()
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE

    set_quiet_mode(args.quiet)
    logger = setup_logging(quiet=args.quiet, log_level=args.log_level)

    try:
        return args.handler(args)
    except InvariantBreach as e:
        logger.error(f"Invariant breach: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BREACH
    except (ParameterError, PreconditionError) as e:
        logger.error(f"Invalid input: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except HrgError as e:
        logger.error(f"Failed: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
