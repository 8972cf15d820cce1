#!/usr/bin/env python3
"""
🎯 VOCAB SNIPER
Restricted-vocabulary neural machine translation pipeline

    python vocab_sniper.py <stage> [--config FILE] [--force] [--key value ...]

Stages: toy, align, lexicon, phrases, stats, train, decode, bench.
Any PipelineConfig field can be overridden as --key value (dashes or underscores).
Exit codes: 0 success, 1 usage error, 2 data or contract error.
"""

import argparse
import logging
import sys
from typing import Dict, List, Optional

from pydantic import ValidationError

from utils.enhanced_logger import get_enhanced_logger
from utils.errors import DataContractError
from utils.pipeline import COMMANDS, cmd_train
from utils.pipeline_config import load_config

logger = logging.getLogger("VocabSniper")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    """Usage errors exit with 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> CliParser:
    parser = CliParser(prog='vocab_sniper', description='Restricted-vocabulary NMT pipeline', allow_abbrev=False)
    parser.add_argument('stage', choices=sorted(COMMANDS), help='pipeline stage to run')
    parser.add_argument('--config', help='flat key = value config file')
    parser.add_argument('--force', action='store_true', help='accept artifacts produced under another config')
    return parser


def parse_overrides(tokens: List[str]) -> Dict[str, str]:
    """--key value pairs; a flag followed by another flag (or nothing) means true"""
    overrides = {}
    k = 0
    while k < len(tokens):
        token = tokens[k]
        if not token.startswith('--') or len(token) == 2:
            raise UsageError(f"unexpected argument '{token}'")
        key = token[2:]
        if '=' in key:
            key, value = key.split('=', 1)
            k += 1
        elif k + 1 < len(tokens) and not tokens[k + 1].startswith('--'):
            value = tokens[k + 1]
            k += 2
        else:
            value = 'true'
            k += 1
        overrides[key.replace('-', '_')] = value
    return overrides


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)

    try:
        overrides = parse_overrides(extra)
        if args.force:
            overrides['force'] = 'true'
        config = load_config(args.config, overrides)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"vocab_sniper: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as e:
        print(f"❌ Invalid configuration:\n{e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataContractError, OSError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_DATA

    monitor = get_enhanced_logger(log_dir=config.log_dir)
    try:
        with monitor.stage(args.stage, config_file=args.config):
            if args.stage == 'train':
                cmd_train(config, monitor=monitor)
            else:
                COMMANDS[args.stage](config)
    except (DataContractError, OSError):
        # already logged by the stage context
        return EXIT_DATA
    finally:
        monitor.log_performance_summary()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
