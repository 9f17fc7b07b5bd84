"""
Command-line argument parsing for c2lt3d.
"""

import argparse
from typing import List, Optional


def _common_parser() -> argparse.ArgumentParser:
    """Flags shared by every subcommand: run control and logging."""
    parser = argparse.ArgumentParser(add_help=False)

    run_group = parser.add_argument_group("Run parameters")
    run_group.add_argument("--seed", type=int, default=None, help="Run seed (overrides the config file)")
    run_group.add_argument(
        "--workers", type=int, default=None, help="Worker processes for per-object work"
    )
    run_group.add_argument("--out", type=str, default="results", help="Output directory")
    run_group.add_argument("--config", type=str, default=None, help="JSON config file")
    run_group.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="Override one config value (repeatable; values are parsed as JSON)",
    )

    log_group = parser.add_argument_group("Logging parameters")
    log_group.add_argument(
        "--log-level",
        type=str,
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help="Logging level",
    )
    log_group.add_argument("--log-file", type=str, default=None, help="Log file path")
    log_group.add_argument(
        "--verbose",
        "-v",
        action="store_true",
        help="Enable verbose output (DEBUG level)",
    )
    log_group.add_argument(
        "--quiet", "-q", action="store_true", help="Suppress output (WARNING level)"
    )
    return parser


def build_parser() -> argparse.ArgumentParser:
    """
    Build the top-level parser with one subparser per command.

    Returns
    -------
    argparse.ArgumentParser
        Parser whose namespace carries ``command`` plus the command's flags.
    """
    common = _common_parser()
    parser = argparse.ArgumentParser(
        description="Interface-centric 3D structure: charts, seams and structural evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    formatter = argparse.ArgumentDefaultsHelpFormatter

    synth = sub.add_parser(
        "synth", parents=[common], formatter_class=formatter, help="Generate a synthetic assembly corpus"
    )
    synth_group = synth.add_argument_group("Corpus parameters")
    synth_group.add_argument("--n", type=int, default=None, help="Number of assemblies")
    synth_group.add_argument("--density", type=float, default=None, help="Surface points per unit area")
    synth_group.add_argument(
        "--decoys", action="store_true", default=None, help="Plant a decoy part next to the first contact"
    )
    synth_group.add_argument(
        "--collisions", action="store_true", default=None, help="Plant an interpenetrating part"
    )
    synth_group.add_argument("--emit-obj", type=str, default=None, help="Also write one OBJ per assembly here")

    preprocess = sub.add_parser(
        "preprocess", parents=[common], formatter_class=formatter, help="Build the chart archive"
    )
    preprocess.add_argument("input", type=str, help="Object archive or directory of OBJ files")
    preprocess.add_argument(
        "--samples", type=int, default=4000, help="Surface samples drawn from each OBJ mesh"
    )

    evaluate = sub.add_parser(
        "evaluate", parents=[common], formatter_class=formatter, help="Fixed-object structural evaluation"
    )
    evaluate.add_argument("archive", type=str, help="Chart archive")

    repair = sub.add_parser(
        "repair-bench", parents=[common], formatter_class=formatter, help="Seam repair benchmark"
    )
    repair.add_argument("archive", type=str, help="Chart archive")
    repair.add_argument(
        "--scorers", nargs="+", default=None, help="Scorers to evaluate (nn, dense-support, seam-head, policy)"
    )

    audit = sub.add_parser(
        "serialize-audit",
        parents=[common],
        formatter_class=formatter,
        help="Decoding energies and assembly audits",
    )
    audit.add_argument("archive", type=str, help="Chart archive")
    audit.add_argument("--lam", type=float, default=None, help="Seam penalty weight")
    audit.add_argument("--eps", type=float, default=None, help="Compatibility floor inside the log")
    audit.add_argument(
        "--log-p-ar", type=str, default=None, help="JSON object of per-object log-likelihoods"
    )

    report = sub.add_parser(
        "report", parents=[common], formatter_class=formatter, help="Collect reports into one table"
    )
    report.add_argument("inputs", nargs="+", help="Report files or run directories")

    return parser


def parse_args(args: Optional[List[str]] = None) -> argparse.Namespace:
    """
    Parse command-line arguments.

    Parameters
    ----------
    args : Optional[List[str]], optional
        Command line arguments, by default None (uses sys.argv[1:])

    Returns
    -------
    argparse.Namespace
        Parsed command-line arguments.
    """
    return build_parser().parse_args(args)
