from __future__ import annotations

import argparse
import logging
import sys
from typing import Sequence

from jscc_lqg.config import CODECS, DECODERS, PRESETS, build_config, load_config
from jscc_lqg.csv_output import sibling, write_rows
from jscc_lqg.errors import ConfigError
from jscc_lqg.presets import run_bounds, run_loop, run_preset, run_sdr

logger = logging.getLogger("jscc_lqg")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _add_common(parser: argparse.ArgumentParser) -> None:
    # SUPPRESS keeps absent flags out of the namespace so the config file wins over defaults.
    opt = dict(default=argparse.SUPPRESS)
    parser.add_argument("--config", help="flat key = value experiment file")
    parser.add_argument("--snr-db", dest="snr_db", type=float, nargs="+", **opt)
    parser.add_argument("--alpha", type=float, **opt)
    parser.add_argument("--q", type=float, **opt)
    parser.add_argument("--r", type=float, **opt)
    parser.add_argument("--f", type=float, **opt)
    parser.add_argument("--w", type=float, **opt)
    parser.add_argument("--v", type=float, **opt)
    parser.add_argument("--p0", type=float, **opt)
    parser.add_argument("--codec", choices=CODECS, **opt)
    parser.add_argument("--lambda", dest="lam", type=float, **opt)
    parser.add_argument("--delta", type=float, **opt)
    parser.add_argument("--beta", type=float, **opt)
    parser.add_argument("--decoder", choices=DECODERS, **opt)
    parser.add_argument("--horizon", type=int, **opt)
    parser.add_argument("--trials", type=int, **opt)
    parser.add_argument("--samples", type=int, **opt)
    parser.add_argument("--seed", type=int, **opt)
    parser.add_argument("--workers", type=int, **opt)
    parser.add_argument("--out", **opt)
    parser.add_argument("--steady", action="store_true", **opt)
    parser.add_argument("--all-points", dest="all_points", action="store_true", **opt)
    parser.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jscc-lqg",
        description="Analog joint source-channel codes and LQG control over AWGN channels.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    _add_common(commands.add_parser("sdr", help="calibrate a codec and measure its SDR per SNR"))
    _add_common(commands.add_parser("loop", help="simulate the closed loop and write traces"))
    _add_common(commands.add_parser("bounds", help="closed-form cost bounds per SNR"))
    preset = commands.add_parser("preset", help="reproduce a figure's data set")
    preset.add_argument("preset", choices=PRESETS)
    _add_common(preset)
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    args = vars(build_parser().parse_args(argv))
    _configure_logging(args.pop("verbose"))
    config_path = args.pop("config")
    try:
        file_values = load_config(config_path) if config_path else {}
        cfg = build_config(file_values, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logger.info("running %s with %s", cfg.command, cfg)

    if cfg.command == "sdr":
        write_rows(*run_sdr(cfg), cfg.out)
    elif cfg.command == "bounds":
        write_rows(*run_bounds(cfg), cfg.out)
    elif cfg.command == "loop":
        trace, trace_columns, summary, summary_columns = run_loop(cfg)
        if cfg.out is None:
            write_rows(summary, summary_columns, None)
        else:
            write_rows(trace, trace_columns, cfg.out)
            write_rows(summary, summary_columns, sibling(cfg.out, "summary"))
    else:
        write_rows(*run_preset(cfg, snrs_given="snr_db" in args or "snr_db" in file_values), cfg.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
