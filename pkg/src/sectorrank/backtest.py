"""Rank sectors by predicted return, hold the top four, compare with equal weight.

Rebalancing happens every ``h`` months (non-overlapping holding periods). At
each as-of month the per-sector predictors see only panel rows dated on or
before that month.
"""

from __future__ import annotations

import logging
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from .marketdata import MonthlyPanel, rate_of_return
from .metrics import MetricsReport, report
from .predictors import MODEL_KINDS, make_model, make_supervised, query_block
from .rfe import FeatureSelection

log = logging.getLogger(__name__)

__all__ = [
    "InsufficientHistoryError",
    "RankedPrediction",
    "HoldingPeriod",
    "PortfolioPath",
    "ExperimentCell",
    "GridResult",
    "cell_seed",
    "rank_by_return",
    "predict_returns",
    "select_top_k",
    "WalkForwardRanker",
    "run_path",
    "benchmark_path",
    "earliest_feasible",
    "default_split",
    "run_grid",
]

DEFAULT_MIN_BLOCKS = 24


class InsufficientHistoryError(ValueError):
    pass


def cell_seed(seed: int, sector: str, kind: str, lookback: int, horizon: int) -> int:
    """Stable per-(sector, model, L, h) seed derived from the global seed."""
    entropy = [int(seed), zlib.crc32(sector.encode()), zlib.crc32(kind.encode()), int(lookback), int(horizon)]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


@dataclass(frozen=True)
class RankedPrediction:
    as_of: pd.Period
    horizon: int
    current: Mapping[str, float]
    predicted: Mapping[str, float]
    returns: Mapping[str, float]
    ranking: tuple[str, ...]


def rank_by_return(returns: Mapping[str, float]) -> tuple[str, ...]:
    """Tickers by predicted return, highest first; ties by ticker ascending."""
    values = {t: float(r) for t, r in returns.items()}
    if not all(np.isfinite(v) for v in values.values()):
        raise ValueError("predicted returns must be finite")
    return tuple(sorted(values, key=lambda t: (-values[t], t)))


def select_top_k(ranking, k: int = 4) -> tuple[str, ...]:
    """First ``k`` entries of a ranking (or of a RankedPrediction's ranking)."""
    if isinstance(ranking, RankedPrediction):
        ranking = ranking.ranking
    ranking = tuple(ranking)
    if not 1 <= k <= len(ranking):
        raise ValueError(f"k={k} outside 1..{len(ranking)}")
    return ranking[:k]


def earliest_feasible(panel: MonthlyPanel, lookback: int, horizon: int, min_blocks: int = DEFAULT_MIN_BLOCKS) -> pd.Period:
    """First as-of month with ``min_blocks`` training blocks whose target is on or before it."""
    pos = lookback + horizon + min_blocks - 2
    if pos >= len(panel):
        raise InsufficientHistoryError(
            f"lookback {lookback}, horizon {horizon} needs {pos + 1} months, panel has {len(panel)}"
        )
    return panel.months[pos]


def _fit_sector(panel, sector, features, kind, lookback, horizon, seed, params, min_blocks):
    windows = make_supervised(panel, sector, features, lookback, horizon)
    if len(windows) < min_blocks:
        raise InsufficientHistoryError(
            f"{sector}: {len(windows)} training blocks, need {min_blocks}"
        )
    model = make_model(kind, seed=cell_seed(seed, sector, kind, lookback, horizon), **dict(params or {}))
    return model.fit(windows.inputs, windows.targets)


def _ranked(as_of, horizon, current, predicted) -> RankedPrediction:
    returns = {t: rate_of_return(current[t], predicted[t]) for t in current}
    return RankedPrediction(as_of, horizon, current, predicted, returns, rank_by_return(returns))


def predict_returns(
    panel: MonthlyPanel,
    selections: Mapping[str, FeatureSelection],
    kind: str,
    lookback: int,
    horizon: int,
    as_of,
    seed: int = 0,
    model_params: Optional[Mapping] = None,
    min_blocks: int = DEFAULT_MIN_BLOCKS,
) -> RankedPrediction:
    """Fit one model per sector on data through ``as_of`` and rank predicted returns.

    Training blocks are those whose target month is on or before ``as_of``;
    the prediction uses the block ending at ``as_of``.
    """
    as_of = pd.Period(as_of, freq="M")
    visible = panel.truncate(as_of)
    current, predicted = {}, {}
    for ticker in panel.tickers:
        features = selections[ticker]
        model = _fit_sector(visible, ticker, features, kind, lookback, horizon, seed, model_params, min_blocks)
        block = query_block(visible, features, lookback)
        current[ticker] = float(visible.prices[ticker].iloc[-1])
        predicted[ticker] = float(model.predict(block[None])[0])
    return _ranked(as_of, horizon, current, predicted)


class WalkForwardRanker:
    """Callable as-of month -> RankedPrediction with an optional refit cadence.

    Models are refit when ``refit_every`` months have passed since the last
    fit (1 means every call). Between refits the cached model, trained on
    data through its fit month, is applied to the newest block, so no call
    ever reads rows dated after its as-of month.
    """

    def __init__(self, panel, selections, kind, lookback, horizon, seed=0, model_params=None,
                 min_blocks=DEFAULT_MIN_BLOCKS, refit_every=1):
        if refit_every < 1:
            raise ValueError("refit_every must be >= 1")
        self.panel = panel
        self.selections = selections
        self.kind = kind
        self.lookback = lookback
        self.horizon = horizon
        self.seed = seed
        self.model_params = model_params
        self.min_blocks = min_blocks
        self.refit_every = refit_every
        self._models: dict[str, object] = {}
        self._fit_month: Optional[pd.Period] = None

    def __call__(self, as_of) -> RankedPrediction:
        as_of = pd.Period(as_of, freq="M")
        visible = self.panel.truncate(as_of)
        stale = self._fit_month is None or (as_of - self._fit_month).n >= self.refit_every or as_of < self._fit_month
        if stale:
            self._models = {
                t: _fit_sector(visible, t, self.selections[t], self.kind, self.lookback, self.horizon,
                               self.seed, self.model_params, self.min_blocks)
                for t in self.panel.tickers
            }
            self._fit_month = as_of
        current, predicted = {}, {}
        for t in self.panel.tickers:
            block = query_block(visible, self.selections[t], self.lookback)
            current[t] = float(visible.prices[t].iloc[-1])
            predicted[t] = float(self._models[t].predict(block[None])[0])
        return _ranked(as_of, self.horizon, current, predicted)


@dataclass(frozen=True)
class HoldingPeriod:
    start: pd.Period
    end: pd.Period
    holdings: tuple[str, ...]
    ret: float

    @property
    def weights(self) -> dict[str, float]:
        w = 1.0 / len(self.holdings)
        return {t: w for t in self.holdings}


@dataclass(frozen=True)
class PortfolioPath:
    periods: tuple[HoldingPeriod, ...]

    @property
    def returns(self) -> np.ndarray:
        return np.array([p.ret for p in self.periods], dtype=float)

    @property
    def wealth(self) -> np.ndarray:
        """Cumulative wealth, starting at 1.0 before the first period."""
        return np.concatenate([[1.0], np.cumprod(1.0 + self.returns)])

    @property
    def dates(self) -> list[pd.Period]:
        if not self.periods:
            return []
        return [self.periods[0].start] + [p.end for p in self.periods]

    def __len__(self):
        return len(self.periods)


def _period_starts(start: pd.Period, end: pd.Period, horizon: int) -> list[pd.Period]:
    starts = []
    m = start
    while m + horizon <= end:
        starts.append(m)
        m = m + horizon
    return starts


def _realized(panel: MonthlyPanel, tickers, start, end) -> float:
    p0 = panel.prices.iloc[panel.position(start)]
    p1 = panel.prices.iloc[panel.position(end)]
    return float(np.mean([rate_of_return(p0[t], p1[t]) for t in tickers]))


def _check_span(panel, span):
    start, end = (pd.Period(s, freq="M") for s in span)
    panel.position(start)
    panel.position(end)
    if end < start:
        raise ValueError(f"empty span {start}..{end}")
    return start, end


def run_path(
    panel: MonthlyPanel,
    selections: Mapping[str, FeatureSelection],
    kind: str,
    lookback: int,
    horizon: int,
    span,
    seed: int = 0,
    *,
    k: int = 4,
    ranker: Optional[Callable] = None,
    model_params: Optional[Mapping] = None,
    min_blocks: int = DEFAULT_MIN_BLOCKS,
    refit_every: int = 1,
) -> PortfolioPath:
    """Walk the span in steps of ``horizon``, holding the top ``k`` predicted sectors.

    ``ranker`` (as-of month -> RankedPrediction or ranking) replaces the
    model-driven ranking, e.g. for oracle or benchmark stubs.
    """
    start, end = _check_span(panel, span)
    if ranker is None:
        ranker = WalkForwardRanker(panel, selections, kind, lookback, horizon, seed, model_params,
                                   min_blocks, refit_every)
    periods = []
    for m in _period_starts(start, end, horizon):
        holdings = select_top_k(ranker(m), k)
        periods.append(HoldingPeriod(m, m + horizon, holdings, _realized(panel, holdings, m, m + horizon)))
    return PortfolioPath(tuple(periods))


def benchmark_path(panel: MonthlyPanel, span, horizon: int) -> PortfolioPath:
    """Equal weight across every sector, reset each period."""
    start, end = _check_span(panel, span)
    tickers = panel.tickers
    return PortfolioPath(
        tuple(
            HoldingPeriod(m, m + horizon, tickers, _realized(panel, tickers, m, m + horizon))
            for m in _period_starts(start, end, horizon)
        )
    )


def default_split(panel: MonthlyPanel, fraction: float = 0.8) -> pd.Period:
    """Month at ``fraction`` of the panel (train/test boundary)."""
    pos = int(round(fraction * len(panel))) - 1
    return panel.months[min(max(pos, 0), len(panel) - 1)]


@dataclass
class ExperimentCell:
    kind: str
    lookback: int
    horizon: int
    seed: int = 0
    status: str = "pending"
    reason: str = ""
    in_sample: Optional[PortfolioPath] = None
    out_sample: Optional[PortfolioPath] = None
    in_metrics: Optional[MetricsReport] = None
    out_metrics: Optional[MetricsReport] = None
    wall_time: float = 0.0

    @property
    def key(self) -> tuple:
        order = MODEL_KINDS.index(self.kind) if self.kind in MODEL_KINDS else len(MODEL_KINDS)
        return (self.horizon, self.lookback, order, self.kind)


@dataclass
class Benchmark:
    horizon: int
    in_span: tuple[pd.Period, pd.Period]
    out_span: tuple[pd.Period, pd.Period]
    in_sample: PortfolioPath
    out_sample: PortfolioPath
    in_metrics: Optional[MetricsReport]
    out_metrics: Optional[MetricsReport]


@dataclass
class GridResult:
    cells: list[ExperimentCell]
    benchmarks: dict[int, Benchmark] = field(default_factory=dict)
    split: Optional[pd.Period] = None


def _metrics(path: PortfolioPath, horizon: int, risk_free: float) -> Optional[MetricsReport]:
    if len(path) == 0:
        return None
    return report(path.returns, 12.0 / horizon, risk_free)


def _run_cell(args) -> ExperimentCell:
    (panel, selections, cell, in_span, out_span, model_params, min_blocks, refit_every, risk_free, top_k) = args
    t0 = time.perf_counter()
    try:
        if in_span is None:
            raise InsufficientHistoryError(cell.reason or "no feasible in-sample span")
        common = dict(k=top_k, model_params=model_params, min_blocks=min_blocks, refit_every=refit_every)
        cell.in_sample = run_path(panel, selections, cell.kind, cell.lookback, cell.horizon, in_span, cell.seed, **common)
        cell.out_sample = run_path(panel, selections, cell.kind, cell.lookback, cell.horizon, out_span, cell.seed, **common)
        cell.in_metrics = _metrics(cell.in_sample, cell.horizon, risk_free)
        cell.out_metrics = _metrics(cell.out_sample, cell.horizon, risk_free)
        cell.status, cell.reason = "ok", ""
    except Exception as exc:  # a failed cell must not abort the grid
        cell.status, cell.reason = "failed", f"{type(exc).__name__}: {exc}"
        log.warning("cell %s L=%d h=%d failed: %s", cell.kind, cell.lookback, cell.horizon, cell.reason)
    cell.wall_time = time.perf_counter() - t0
    return cell


def run_grid(
    panel: MonthlyPanel,
    selections: Mapping[str, FeatureSelection],
    grid: Sequence[tuple[str, int, int]],
    split=None,
    seed: int = 0,
    *,
    model_params: Optional[Mapping[str, Mapping]] = None,
    min_blocks: int = DEFAULT_MIN_BLOCKS,
    refit_every: int = 1,
    risk_free: float = 0.0,
    top_k: int = 4,
    jobs: int = 1,
) -> GridResult:
    """Run every (model, lookback, horizon) cell on a shared in/out-of-sample split.

    For each horizon, the in-sample span starts at the latest earliest-feasible
    month among that horizon's feasible lookbacks, so every cell and the
    benchmark are scored over the same months. It ends at ``split``; the
    out-of-sample span runs from ``split`` to the last panel month. Cells that
    cannot be run are returned with ``status == "failed"`` and a reason.
    """
    split = default_split(panel) if split is None else pd.Period(split, freq="M")
    panel.position(split)
    model_params = model_params or {}
    cells = [ExperimentCell(kind, int(L), int(h), seed) for kind, L, h in grid]
    spans: dict[int, Optional[tuple]] = {}
    for h in sorted({c.horizon for c in cells}):
        starts = []
        for c in cells:
            if c.horizon != h:
                continue
            try:
                first = earliest_feasible(panel, c.lookback, h, min_blocks)
            except InsufficientHistoryError as exc:
                c.reason = str(exc)
                continue
            if first + h > split:
                c.reason = f"earliest feasible month {first} leaves no in-sample period before {split}"
                continue
            starts.append(first)
        spans[h] = (max(starts), split) if starts else None
    last = panel.months[-1]
    jobs_args = []
    for c in cells:
        in_span = spans[c.horizon] if not c.reason else None
        jobs_args.append((panel, selections, c, in_span, (split, last), model_params.get(c.kind),
                          min_blocks, refit_every, risk_free, top_k))
    if jobs > 1 and len(jobs_args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_run_cell, jobs_args))
    else:
        done = [_run_cell(a) for a in jobs_args]
    done.sort(key=lambda c: c.key)
    benchmarks = {}
    for h, span in spans.items():
        if span is None:
            continue
        bin_ = benchmark_path(panel, span, h)
        bout = benchmark_path(panel, (split, last), h)
        benchmarks[h] = Benchmark(h, span, (split, last), bin_, bout,
                                  _metrics(bin_, h, risk_free), _metrics(bout, h, risk_free))
    return GridResult(done, benchmarks, split)
