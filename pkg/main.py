#!/usr/bin/env python3
"""
Main entry point for c2lt3d.

This script provides the command-line interface: synth, preprocess, evaluate,
repair-bench, serialize-audit and report.
"""

import sys
import traceback
from typing import List, Optional

from c2lt3d.cli.parser import parse_args
from c2lt3d.runners.experiment import setup_experiment
from c2lt3d.runners.pipeline import run_command
from c2lt3d.utils.errors import C2LTError
from c2lt3d.utils.logger import get_logger


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one subcommand and map its failure to an exit status.

    Returns 0 on success, the error's ``exit_code`` for package errors (1 config,
    2 data, 3 invariant) and 3 for anything unexpected.
    """
    args = parse_args(argv)
    logger = get_logger()

    try:
        logger, results_mgr = setup_experiment(args, args.command)
        return run_command(args, results_mgr)
    except C2LTError as e:
        logger.error(f"{type(e).__name__}: {e}")
        logger.debug(f"Error details: {traceback.format_exc()}")
        return e.exit_code
    except Exception as e:
        logger.error(f"Internal error in '{args.command}': {e}")
        logger.debug(f"Error details: {traceback.format_exc()}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
