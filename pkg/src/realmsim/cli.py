"""Command-line front end.

Exit codes: 0 success, 1 simulation/run failure, 2 configuration or usage error.
"""
from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .area import STORAGE_MODES, AreaParams, AreaRangeWarning, calibrate_check, estimate
from .config import ConfigError, load_config, parse_config, with_changes
from .config_space import register_map_markdown
from .experiments import run_config, sweep_budget, sweep_fragmentation, write_outputs
from .kernel import SimError

EXIT_OK, EXIT_RUN, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("realmsim")


def _load(path: str, seed: Optional[int] = None):
    cfg = load_config(path)
    if seed is not None:
        cfg = parse_config(with_changes(cfg.raw, {"seed": seed}))
    return cfg


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        p = Path(out)
        if p.parent != Path(""):
            p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
        log.info("wrote %s", p)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    cfg = _load(args.config, args.seed)
    res = run_config(cfg)
    paths = write_outputs(res, args.out)
    sys.stdout.write(res.metrics.to_csv())
    for p in paths:
        log.info("wrote %s", p)
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def cmd_sweep_frag(args) -> int:
    cfg = _load(args.config, args.seed)
    res = sweep_fragmentation(cfg, args.frags)
    _emit(res.to_csv(), args.out)
    return EXIT_OK if all(r[-1] == "ok" for r in res.rows) else EXIT_RUN


def cmd_sweep_budget(args) -> int:
    cfg = _load(args.config, args.seed)
    fr = args.fractions.split(",") if args.fractions else None
    res = sweep_budget(cfg, fr)
    _emit(res.to_csv(), args.out)
    return EXIT_OK if all(r[-1] == "ok" for r in res.rows) else EXIT_RUN


def cmd_area(args) -> int:
    params = AreaParams(
        addr_width=args.addr_bits,
        data_width=args.data_bits,
        num_pending=args.pending,
        buffer_depth=args.depth,
        num_regions=args.regions,
        num_units=args.units,
    )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", AreaRangeWarning)
        bd = estimate(params, storage_mode=args.storage)
    for w in caught:
        log.warning("%s", w.message)
    sys.stdout.write(bd.to_table())
    if args.csv:
        _emit(bd.to_csv(), args.csv)
    if args.calibrate:
        sys.stdout.write("\n" + str(calibrate_check()))
    return EXIT_OK


def cmd_regmap(args) -> int:
    _emit(register_map_markdown(args.units, args.regions), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="realmsim", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run one scenario and export metrics")
    p.add_argument("--config", required=True, help="scenario file or canned scenario name")
    p.add_argument("--out", required=True, help="output directory for metrics.csv / metrics.json")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-frag", help="core runtime versus fragment length")
    p.add_argument("--config", required=True)
    p.add_argument("--frags", type=_int_list, help="comma-separated fragment lengths")
    p.add_argument("--out", help="CSV file (default: stdout)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sweep_frag)

    p = sub.add_parser("sweep-budget", help="core throughput versus DMA budget")
    p.add_argument("--config", required=True)
    p.add_argument("--fractions", help="comma-separated fractions, e.g. 1/1,3/5")
    p.add_argument("--out", help="CSV file (default: stdout)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sweep_budget)

    p = sub.add_parser("area", help="area estimate from the linear sub-block model")
    p.add_argument("--addr-bits", type=int, default=64)
    p.add_argument("--data-bits", type=int, default=64)
    p.add_argument("--pending", type=int, default=8)
    p.add_argument("--depth", type=int, default=16)
    p.add_argument("--regions", type=int, default=2)
    p.add_argument("--units", type=int, default=1)
    p.add_argument("--storage", choices=STORAGE_MODES, default="bit",
                   help="what the write-buffer storage coefficient multiplies")
    p.add_argument("--csv", help="also write the breakdown as CSV")
    p.add_argument("--calibrate", action="store_true", help="append the reference-system comparison")
    p.set_defaults(func=cmd_area)

    p = sub.add_parser("regmap", help="print the configuration register map (markdown)")
    p.add_argument("--units", type=int, default=3)
    p.add_argument("--regions", type=int, default=2)
    p.add_argument("--out")
    p.set_defaults(func=cmd_regmap)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_CONFIG
    except (TypeError, ValueError) as e:
        if args.cmd == "area":
            sys.stderr.write(f"error: {e}\n")
            return EXIT_CONFIG
        sys.stderr.write(f"error: {type(e).__name__}: {e}\n")
        return EXIT_RUN
    except (SimError, OSError) as e:
        sys.stderr.write(f"error: {type(e).__name__}: {e}\n")
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
