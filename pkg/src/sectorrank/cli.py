"""Command line: ``sectorrank {sample,ingest,select,backtest,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import pandas as pd

from . import experiment
from .config import ConfigError, load_config
from .marketdata import DataError

log = logging.getLogger("sectorrank")

EXIT_INPUT = 2


def _config(args):
    cfg = load_config(args.config, args.out)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "split", None):
        changes["split"] = pd.Period(args.split, freq="M")
    cfg = cfg.replace(**changes) if changes else cfg
    cfg.output.mkdir(parents=True, exist_ok=True)
    return cfg


def cmd_sample(args) -> int:
    from .sample import write_sample

    path = write_sample(args.out or "sample-data", seed=args.seed if args.seed is not None else 7)
    print(f"wrote sample data and config: {path}")
    return 0


def cmd_ingest(args) -> int:
    cfg = _config(args)
    panel, rows = experiment.ingest(cfg)
    bind = experiment.binding_series(rows)
    print(f"panel: {len(panel)} months {panel.months[0]}..{panel.months[-1]}, "
          f"{len(panel.tickers)} sectors, {len(panel.feature_names)} features -> {cfg.output / 'panel.csv'}")
    print(f"binding start: {', '.join(bind['start'])}")
    print(f"binding end: {', '.join(bind['end'])}")
    return 0


def cmd_select(args) -> int:
    cfg = _config(args)
    panel, _, candidates = experiment.load_panel(cfg.output)
    selections = experiment.select(cfg, panel, candidates)
    for ticker, s in selections.items():
        print(f"{ticker}: {', '.join(s.kept)}")
    return 0


def cmd_backtest(args) -> int:
    cfg = _config(args)
    panel, _, _ = experiment.load_panel(cfg.output)
    selections = experiment.read_selections(cfg.output)
    result = experiment.backtest(cfg, panel, selections, jobs=args.jobs, plots=args.plots)
    failed = [c for c in result.cells if c.status != "ok"]
    print(f"{len(result.cells) - len(failed)} cells completed, {len(failed)} failed; "
          f"split {result.split}; results in {cfg.output / 'results.csv'}")
    for c in failed:
        print(f"  failed {c.kind} L={c.lookback} h={c.horizon}: {c.reason}")
    return 1 if failed and len(failed) == len(result.cells) else 0


def cmd_report(args) -> int:
    if args.config:
        cfg = load_config(args.config, args.out)
        out, rule = cfg.output, cfg.report_rule
    elif args.out:
        out, rule = Path(args.out), "max_rank"
    else:
        raise ConfigError("report needs --config or --out")
    summary = experiment.report(out, rule)
    width = max(len(str(r[2])) for r in summary) if summary else 10
    for h, span, criterion, model, lookback, ret, sr, cr, _ in summary:
        print(f"h={h:<3} {span:<14} {criterion:<{width}} {model:<9} L={lookback!s:<3} "
              f"return={ret} sharpe={sr} calmar={cr}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sectorrank", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help, config=True):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", required=config and name != "report", help="experiment config (YAML)")
        p.add_argument("--out", help="output directory (overrides config and $SECTOR_RANK_OUT)")
        p.set_defaults(func=func)
        return p

    p = sub.add_parser("sample", help="write the synthetic sample dataset and config")
    p.add_argument("--out", help="target directory (default ./sample-data)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sample)

    add("ingest", cmd_ingest, "align raw series into a monthly panel")
    p = add("select", cmd_select, "per-sector recursive feature elimination")
    p.add_argument("--seed", type=int)
    p.add_argument("--split", help="train/test boundary month, YYYY-MM")
    p = add("backtest", cmd_backtest, "run the model x lookback x horizon grid")
    p.add_argument("--seed", type=int)
    p.add_argument("--split", help="train/test boundary month, YYYY-MM")
    p.add_argument("--jobs", type=int, default=1, help="parallel cells")
    p.add_argument("--plots", action="store_true", help="also render SVG line plots")
    add("report", cmd_report, "best cells per metric and the balanced pick", config=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DataError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
