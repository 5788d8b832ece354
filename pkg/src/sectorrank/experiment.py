"""Pipeline stages behind the command line: ingest, select, backtest, report.

Every stage reads and writes plain files under an output directory:

``panel.csv`` / ``panel.meta.json``
    aligned monthly panel and candidate features per sector
``ingest_report.csv``
    per-series coverage, interpolation counts, dropped rows, binding flags
``selections.json`` and ``selections/<ticker>.csv``, ``selections/<ticker>_elimination.csv``
    kept features with importances (bar-chart data) and elimination order
``results.csv``
    one row per (cell, span) plus a benchmark row per (horizon, span)
``table_h<h>.csv``
    in-sample and out-of-sample return, Sharpe and Calmar per cell
``paths/h<h>_<model>_L<L>.csv``
    dated strategy and benchmark wealth per span
``lookback_h<h>.csv``
    metric value against lookback for each model, metric and span
``run_manifest.json``
    seed, config and input digests, per-cell wall time, timestamps
``summary.csv``
    best cell per metric and the balanced pick, per horizon and span
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import __version__
from .backtest import GridResult, default_split, run_grid
from .config import ExperimentConfig
from .marketdata import (
    DataError,
    MonthlyPanel,
    build_panel,
    interpolated_count,
    load_manifest,
    parse_series_csv,
    read_panel,
    series_coverage,
    write_panel,
)
from .metrics import UNDEFINED, fmt
from .predictors import MODEL_KINDS
from .rfe import FeatureSelection, rfe_select

log = logging.getLogger(__name__)

METRICS = ("annualized_return", "sharpe_ratio", "calmar_ratio")
RESULT_COLUMNS = (
    "horizon", "model", "lookback", "span", "start", "end", "status",
    "annualized_return", "sharpe_ratio", "calmar_ratio", "max_drawdown", "n_periods", "reason",
)
SPANS = ("in_sample", "out_of_sample")
BENCHMARK = "benchmark"


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _read_rows(path: Path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------- ingest


def ingest(config: ExperimentConfig) -> tuple[MonthlyPanel, list[dict]]:
    """Load the manifest, align the panel, write it with an ingestion report."""
    manifest = load_manifest(config.manifest, config.universe)

    def parse(name, spec):
        try:
            return parse_series_csv(spec.path, name, spec.frequency)
        except DataError as exc:
            raise DataError(f"series {name}: {exc}") from exc

    prices = {t: parse(t, s) for t, s in manifest.prices.items()}
    macro = [parse(s.name, s) for s in manifest.series]
    panel = build_panel(prices, macro, manifest.universe)
    start, end = panel.months[0], panel.months[-1]

    rows = []
    for kind, series in [("price", prices[t]) for t in manifest.universe.tickers] + [("feature", s) for s in macro]:
        first, last = series_coverage(series)
        binding = "+".join(b for b, hit in (("start", first == start), ("end", last == end)) if hit)
        rows.append({
            "series": series.name,
            "kind": kind,
            "frequency": series.frequency,
            "first_observation": str(series.dates[0]),
            "last_observation": str(series.dates[-1]),
            "coverage_start": str(first),
            "coverage_end": str(last),
            "observations": len(series),
            "dropped_rows": series.dropped_rows,
            "interpolated_months": interpolated_count(series, start, end),
            "binding": binding,
        })
    out = config.output
    write_panel(panel, out / "panel.csv", manifest.universe, manifest.candidates())
    _write_rows(out / "ingest_report.csv", list(rows[0]), [list(r.values()) for r in rows])
    return panel, rows


def binding_series(rows: Sequence[Mapping]) -> dict[str, list[str]]:
    """Series whose coverage fixes the panel's first and last month."""
    return {
        side: [r["series"] for r in rows if side in str(r["binding"]).split("+")]
        for side in ("start", "end")
    }


# ---------------------------------------------------------------- select


def select(
    config: ExperimentConfig,
    panel: MonthlyPanel,
    candidates: Mapping[str, Sequence[str]],
    seed: Optional[int] = None,
) -> dict[str, FeatureSelection]:
    """RFE per sector on months up to the split; features contemporaneous with price."""
    seed = config.seed if seed is None else seed
    split = config.split or default_split(panel)
    visible = panel.truncate(split)
    selections = {}
    for ticker in panel.tickers:
        names = list(candidates.get(ticker) or panel.feature_names)
        selections[ticker] = rfe_select(
            visible.features[names].to_numpy(dtype=float),
            visible.prices[ticker].to_numpy(dtype=float),
            names,
            config.select_k,
            config.forest_params or None,
            seed,
            ticker,
        )
    write_selections(selections, config.output)
    return selections


def write_selections(selections: Mapping[str, FeatureSelection], out: Path) -> None:
    out = Path(out)
    doc = {t: s.to_dict() for t, s in selections.items()}
    (out / "selections.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for ticker, s in selections.items():
        _write_rows(out / "selections" / f"{ticker}.csv", ("rank", "feature", "importance"),
                    [(i + 1, f, repr(float(v))) for i, (f, v) in enumerate(zip(s.kept, s.importances))])
        _write_rows(out / "selections" / f"{ticker}_elimination.csv", ("round", "feature"),
                    [(r, f) for f, r in s.eliminated])


def read_selections(out: Path) -> dict[str, FeatureSelection]:
    path = Path(out) / "selections.json"
    if not path.is_file():
        raise FileNotFoundError(f"selections not found: {path}")
    return {t: FeatureSelection.from_dict(d) for t, d in json.loads(path.read_text(encoding="utf-8")).items()}


# ---------------------------------------------------------------- backtest


def _metric_cells(m) -> list[str]:
    if m is None:
        return [UNDEFINED] * 4 + ["0"]
    return [*(fmt(v) for v in (m.annualized_return, m.annualized_sharpe, m.calmar, m.max_drawdown)), str(m.n_periods)]


def _span_of(path, fallback):
    if path is not None and len(path):
        return str(path.periods[0].start), str(path.periods[-1].end)
    return fallback


def result_rows(result: GridResult) -> list[list[str]]:
    """Rows of ``results.csv`` in report order."""
    rows = []
    for h in sorted({c.horizon for c in result.cells}):
        bench = result.benchmarks.get(h)
        for span in SPANS:
            inside = span == "in_sample"
            for c in (c for c in result.cells if c.horizon == h):
                path = c.in_sample if inside else c.out_sample
                metrics = c.in_metrics if inside else c.out_metrics
                start, end = _span_of(path, ("", ""))
                if c.status != "ok":
                    values = [UNDEFINED] * 4 + ["0"]
                else:
                    values = _metric_cells(metrics)
                rows.append([h, c.kind, c.lookback, span, start, end, c.status, *values, c.reason])
            if bench is not None:
                path = bench.in_sample if inside else bench.out_sample
                metrics = bench.in_metrics if inside else bench.out_metrics
                start, end = _span_of(path, ("", ""))
                rows.append([h, BENCHMARK, "", span, start, end, "ok", *_metric_cells(metrics), ""])
    return rows


def _table_rows(result: GridResult, h: int) -> list[list]:
    def six(in_m, out_m, ok=True):
        if not ok:
            return ["failed"] * 6
        cells = []
        for m in (in_m, out_m):
            if m is None:
                cells += [UNDEFINED] * 3
            else:
                cells += [fmt(m.annualized_return, 2), fmt(m.annualized_sharpe, 3), fmt(m.calmar, 3)]
        return cells

    rows = [[c.kind, c.lookback, *six(c.in_metrics, c.out_metrics, c.status == "ok")]
            for c in result.cells if c.horizon == h]
    bench = result.benchmarks.get(h)
    if bench is not None:
        rows.append([BENCHMARK, "", *six(bench.in_metrics, bench.out_metrics)])
    return rows


def write_results(result: GridResult, out: Path) -> Path:
    out = Path(out)
    path = out / "results.csv"
    _write_rows(path, RESULT_COLUMNS, result_rows(result))
    for h in sorted({c.horizon for c in result.cells}):
        header = ["model", "lookback"] + [f"{s}_{m}" for s in SPANS for m in METRICS]
        _write_rows(out / f"table_h{h}.csv", header, _table_rows(result, h))
        lookback_rows = []
        for span in SPANS:
            for metric in METRICS:
                for c in (c for c in result.cells if c.horizon == h):
                    m = c.in_metrics if span == "in_sample" else c.out_metrics
                    if c.status != "ok" or m is None:
                        continue
                    value = {"annualized_return": m.annualized_return, "sharpe_ratio": m.annualized_sharpe,
                             "calmar_ratio": m.calmar}[metric]
                    lookback_rows.append([span, metric, c.kind, c.lookback, fmt(value)])
        _write_rows(out / f"lookback_h{h}.csv", ("span", "metric", "model", "lookback", "value"), lookback_rows)
    for c in result.cells:
        if c.status != "ok":
            continue
        bench = result.benchmarks[c.horizon]
        rows = []
        for span, strat, ref in (("in_sample", c.in_sample, bench.in_sample), ("out_of_sample", c.out_sample, bench.out_sample)):
            held = [""] + [" ".join(p.holdings) for p in strat.periods]
            for month, w, b, hold in zip(strat.dates, strat.wealth, ref.wealth, held):
                rows.append([span, str(month), repr(float(w)), repr(float(b)), hold])
        _write_rows(out / "paths" / f"h{c.horizon}_{c.kind}_L{c.lookback}.csv",
                    ("span", "month", "strategy_wealth", "benchmark_wealth", "holdings"), rows)
    return path


def backtest(
    config: ExperimentConfig,
    panel: MonthlyPanel,
    selections: Mapping[str, FeatureSelection],
    jobs: int = 1,
    plots: bool = False,
) -> GridResult:
    """Run the configured grid and write every backtest artifact."""
    out = config.output
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    result = run_grid(
        panel, selections, config.cells(), config.split, config.seed,
        model_params=config.model_params, min_blocks=config.min_blocks, refit_every=config.refit_every,
        risk_free=config.risk_free, top_k=config.top_k, jobs=jobs,
    )
    results_path = write_results(result, out)
    manifest = {
        "version": __version__,
        "seed": config.seed,
        "config_digest": config.digest,
        "config": str(config.source) if config.source else None,
        "split": str(result.split),
        "jobs": jobs,
        "panel_sha256": _digest(out / "panel.csv") if (out / "panel.csv").is_file() else None,
        "selections_sha256": _digest(out / "selections.json") if (out / "selections.json").is_file() else None,
        "results_sha256": _digest(results_path),
        "started": started.isoformat(),
        "wall_time_seconds": time.perf_counter() - t0,
        "cells": [
            {"model": c.kind, "lookback": c.lookback, "horizon": c.horizon, "status": c.status,
             "reason": c.reason, "wall_time_seconds": c.wall_time}
            for c in result.cells
        ],
    }
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    if plots:
        render_plots(out)
    return result


def render_plots(out: Path) -> list[Path]:
    """Minimal SVG line charts from the path and lookback CSVs."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out)
    written = []
    for table in sorted(out.glob("lookback_h*.csv")):
        h = table.stem.split("_h")[-1]
        rows = _read_rows(table)
        for span in SPANS:
            for metric in METRICS:
                fig, ax = plt.subplots(figsize=(6, 4))
                for model in MODEL_KINDS:
                    pts = [(int(r["lookback"]), float(r["value"])) for r in rows
                           if r["span"] == span and r["metric"] == metric and r["model"] == model and r["value"] != UNDEFINED]
                    if pts:
                        ax.plot(*zip(*sorted(pts)), marker="o", label=model)
                ax.set_xlabel("lookback (months)")
                ax.set_ylabel(metric.replace("_", " "))
                ax.set_title(f"h={h}, {span.replace('_', ' ')}")
                if ax.lines:
                    ax.legend()
                target = out / "plots" / f"lookback_h{h}_{span}_{metric}.svg"
                target.parent.mkdir(parents=True, exist_ok=True)
                fig.savefig(target, format="svg", metadata={"Date": None})
                plt.close(fig)
                written.append(target)
    for table in sorted((out / "paths").glob("*.csv")):
        rows = _read_rows(table)
        fig, axes = plt.subplots(1, 2, figsize=(10, 4))
        for ax, span in zip(axes, SPANS):
            part = [r for r in rows if r["span"] == span]
            x = np.arange(len(part))
            ax.plot(x, [float(r["strategy_wealth"]) for r in part], label="top-4 strategy")
            ax.plot(x, [float(r["benchmark_wealth"]) for r in part], label=BENCHMARK)
            if part:
                ax.set_title(f"{span.replace('_', ' ')} {part[0]['month']}..{part[-1]['month']}")
            ax.set_xlabel("period")
            ax.legend()
        axes[0].set_ylabel("wealth")
        target = out / "plots" / f"{table.stem}.svg"
        fig.savefig(target, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(target)
    return written


# ---------------------------------------------------------------- report


def read_results(out: Path) -> list[dict]:
    path = Path(out) / "results.csv"
    if not path.is_file():
        raise FileNotFoundError(f"results not found: {path}")
    rows = _read_rows(path)
    for r in rows:
        for m in METRICS + ("max_drawdown",):
            r[m] = None if r[m] == UNDEFINED else float(r[m])
        r["horizon"] = int(r["horizon"])
        r["lookback"] = int(r["lookback"]) if r["lookback"] else None
    return rows


def metric_ranks(cells: Sequence[Mapping], metric: str) -> list[int]:
    """Competition ranks (1 = best, higher is better); undefined values rank last."""
    values = [c[metric] for c in cells]
    defined = [v for v in values if v is not None and math.isfinite(v)]
    ranks = []
    for v in values:
        if v is None or not math.isfinite(v):
            ranks.append(len(values))
        else:
            ranks.append(1 + sum(1 for w in defined if w > v))
    return ranks


def balanced_pick(cells: Sequence[Mapping], rule: str = "max_rank") -> tuple[int, float]:
    """Index of the cell with the best worst-case (or mean) rank over the three metrics.

    Ties go to the higher annualized return, then to the earlier cell.
    Returns ``(index, score)``.
    """
    if not cells:
        raise ValueError("no cells to pick from")
    ranks = np.array([metric_ranks(cells, m) for m in METRICS], dtype=float)
    score = ranks.max(axis=0) if rule == "max_rank" else ranks.mean(axis=0)
    ret = [c["annualized_return"] if c["annualized_return"] is not None else -math.inf for c in cells]
    best = min(range(len(cells)), key=lambda i: (score[i], -ret[i], i))
    return best, float(score[best])


def summarize(rows: Sequence[Mapping], rule: str = "max_rank") -> list[list]:
    """Best cell per metric plus the balanced pick, per (horizon, span)."""
    summary = []
    for h in sorted({r["horizon"] for r in rows}):
        for span in SPANS:
            cells = [r for r in rows if r["horizon"] == h and r["span"] == span
                     and r["model"] != BENCHMARK and r["status"] == "ok"]
            if not cells:
                continue

            def line(criterion, c, score=""):
                return [h, span, criterion, c["model"], c["lookback"],
                        *(fmt(c[m]) for m in METRICS), score]

            for m in METRICS:
                defined = [c for c in cells if c[m] is not None]
                if defined:
                    summary.append(line(m, max(defined, key=lambda c: c[m])))
            idx, score = balanced_pick(cells, rule)
            summary.append(line(f"balanced_{rule}", cells[idx], f"{score:g}"))
            for b in (r for r in rows if r["horizon"] == h and r["span"] == span and r["model"] == BENCHMARK):
                summary.append([h, span, BENCHMARK, BENCHMARK, "", *(fmt(b[m]) for m in METRICS), ""])
    return summary


SUMMARY_COLUMNS = ("horizon", "span", "criterion", "model", "lookback", *METRICS, "score")


def report(out: Path, rule: str = "max_rank") -> list[list]:
    rows = read_results(out)
    summary = summarize(rows, rule)
    _write_rows(Path(out) / "summary.csv", SUMMARY_COLUMNS, summary)
    return summary


def load_panel(out: Path):
    path = Path(out) / "panel.csv"
    if not path.is_file():
        raise FileNotFoundError(f"panel not found: {path} (run ingest first)")
    return read_panel(path)
