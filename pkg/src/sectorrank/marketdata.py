"""Raw series ingestion, month-end resampling and panel alignment."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
import yaml

__all__ = [
    "DataError",
    "Observation",
    "RawSeries",
    "MonthlyPanel",
    "SectorUniverse",
    "SeriesSpec",
    "Manifest",
    "FREQUENCIES",
    "parse_series_csv",
    "series_coverage",
    "resample_monthly",
    "build_panel",
    "rate_of_return",
    "load_manifest",
    "write_panel",
    "read_panel",
]

PANEL_FORMAT = "sectorrank-panel v1"

FREQUENCIES = ("daily", "weekly", "monthly", "quarterly", "annual")
# sub-monthly series are sampled at the month-end anchor, coarser ones interpolated
SAMPLED_FREQUENCIES = frozenset({"daily", "weekly"})

DEFAULT_SECTORS = (
    ("healthcare", "IYH"),
    ("energy", "IYE"),
    ("utilities", "IDU"),
    ("finance", "IYG"),
    ("technology", "IYW"),
    ("materials", "IYM"),
    ("industrials", "IYJ"),
    ("consumer goods", "IYK"),
)


class DataError(ValueError):
    """Raised for malformed or insufficient input data."""


@dataclass(frozen=True)
class Observation:
    date: date
    value: float


@dataclass(frozen=True)
class RawSeries:
    """A single named series at its native frequency.

    Stored columnar (``dates`` as ``datetime64[D]``, ``values`` as float64);
    ``observations`` gives the row view.
    """

    name: str
    frequency: str
    dates: np.ndarray
    values: np.ndarray
    dropped_rows: int = 0

    def __post_init__(self):
        if self.frequency not in FREQUENCIES:
            raise DataError(f"{self.name}: unknown frequency {self.frequency!r}")
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        values = np.asarray(self.values, dtype=float)
        if dates.shape != values.shape or dates.ndim != 1:
            raise DataError(f"{self.name}: dates and values must be 1-D of equal length")
        if len(dates) < 2:
            raise DataError(f"{self.name}: insufficient observations ({len(dates)} < 2)")
        if not np.all(np.isfinite(values)):
            raise DataError(f"{self.name}: non-finite value")
        if np.any(np.diff(dates).astype(int) <= 0):
            raise DataError(f"{self.name}: dates must be strictly increasing")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_observations(cls, name: str, frequency: str, observations: Iterable[Observation]):
        obs = sorted(observations, key=lambda o: o.date)
        return cls(
            name,
            frequency,
            np.array([o.date for o in obs], dtype="datetime64[D]"),
            np.array([o.value for o in obs], dtype=float),
        )

    @property
    def observations(self) -> tuple[Observation, ...]:
        return tuple(
            Observation(d.astype(object), float(v)) for d, v in zip(self.dates, self.values)
        )

    @property
    def sampled(self) -> bool:
        return self.frequency in SAMPLED_FREQUENCIES

    def __len__(self):
        return len(self.dates)


@dataclass(frozen=True)
class SectorUniverse:
    sectors: tuple[tuple[str, str], ...] = DEFAULT_SECTORS

    def __post_init__(self):
        sectors = tuple((str(n), str(t)) for n, t in self.sectors)
        if not sectors:
            raise DataError("sector universe is empty")
        tickers = [t for _, t in sectors]
        if len(set(tickers)) != len(tickers):
            raise DataError("sector tickers must be unique")
        object.__setattr__(self, "sectors", sectors)

    @property
    def tickers(self) -> tuple[str, ...]:
        return tuple(t for _, t in self.sectors)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.sectors)

    def ticker_for(self, key: str) -> str:
        """Resolve a sector name or ticker to its ticker."""
        for name, ticker in self.sectors:
            if key in (name, ticker):
                return ticker
        raise KeyError(f"unknown sector {key!r}")

    def __len__(self):
        return len(self.sectors)


@dataclass(frozen=True)
class MonthlyPanel:
    """Rectangular month-end panel of macro features and sector prices.

    ``features`` and ``prices`` are DataFrames indexed by a contiguous monthly
    ``PeriodIndex``; price columns are tickers.
    """

    features: pd.DataFrame
    prices: pd.DataFrame

    def __post_init__(self):
        months = self.prices.index
        if not isinstance(months, pd.PeriodIndex) or months.freqstr != "M":
            raise DataError("panel index must be a monthly PeriodIndex")
        if not self.features.index.equals(months):
            raise DataError("feature and price indices differ")
        if len(months) == 0:
            raise DataError("panel has no months")
        ordinals = months.asi8
        if np.any(np.diff(ordinals) != 1):
            raise DataError("panel months are not contiguous")
        for frame in (self.features, self.prices):
            arr = frame.to_numpy(dtype=float)
            if not np.all(np.isfinite(arr)):
                raise DataError("panel contains missing or non-finite values")
        if np.any(self.prices.to_numpy() <= 0):
            raise DataError("panel prices must be positive")

    @property
    def months(self) -> pd.PeriodIndex:
        return self.prices.index

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(self.features.columns)

    @property
    def tickers(self) -> tuple[str, ...]:
        return tuple(self.prices.columns)

    def __len__(self):
        return len(self.months)

    def position(self, month) -> int:
        """Row index of ``month``."""
        month = pd.Period(month, freq="M")
        pos = month.ordinal - self.months[0].ordinal
        if not 0 <= pos < len(self):
            raise KeyError(f"{month} outside panel {self.months[0]}..{self.months[-1]}")
        return int(pos)

    def truncate(self, end) -> "MonthlyPanel":
        """Panel restricted to months up to and including ``end``."""
        stop = self.position(end) + 1
        return MonthlyPanel(self.features.iloc[:stop], self.prices.iloc[:stop])


@dataclass(frozen=True)
class SeriesSpec:
    name: str
    path: Path
    frequency: str
    sectors: tuple[str, ...] = ()


@dataclass(frozen=True)
class Manifest:
    """Parsed data manifest: price files per ticker plus macro series with consumers."""

    universe: SectorUniverse
    prices: Mapping[str, SeriesSpec]
    series: tuple[SeriesSpec, ...]
    source: Path | None = None

    def candidates(self) -> dict[str, tuple[str, ...]]:
        """Candidate feature names per ticker, in manifest order."""
        out = {}
        for name, ticker in self.universe.sectors:
            out[ticker] = tuple(
                s.name
                for s in self.series
                if "all" in s.sectors or name in s.sectors or ticker in s.sectors
            )
        return out


def parse_series_csv(path, name: str, frequency: str) -> RawSeries:
    """Read a ``date,value`` CSV into a RawSeries sorted by date.

    Rows with an empty value cell are dropped and counted in
    ``RawSeries.dropped_rows``.
    """
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{name}: cannot read {path}: {exc.strerror}") from exc
    rows = []
    dropped = 0
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["date", "value"]:
            raise DataError(f"{name}: {path} must start with header 'date,value'")
        for i, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2 or not row[1].strip():
                dropped += 1
                continue
            try:
                day = date.fromisoformat(row[0].strip())
            except ValueError:
                raise DataError(f"{name}: row {i}: unparseable date {row[0]!r}") from None
            try:
                value = float(row[1])
            except ValueError:
                raise DataError(f"{name}: row {i}: unparseable number {row[1]!r}") from None
            if not math.isfinite(value):
                raise DataError(f"{name}: row {i}: non-finite value {row[1]!r}")
            rows.append((day, value))
    if len(rows) < 2:
        raise DataError(f"{name}: insufficient observations ({len(rows)} valid rows)")
    rows.sort(key=lambda r: r[0])
    for (d0, _), (d1, _) in zip(rows, rows[1:]):
        if d0 == d1:
            raise DataError(f"{name}: duplicate date {d0.isoformat()}")
    return RawSeries(
        name,
        frequency,
        np.array([r[0] for r in rows], dtype="datetime64[D]"),
        np.array([r[1] for r in rows], dtype=float),
        dropped_rows=dropped,
    )


def _month_end(months: pd.PeriodIndex) -> np.ndarray:
    return months.to_timestamp(how="end").to_numpy().astype("datetime64[D]")


def _as_period(value) -> pd.Period:
    return pd.Period(value, freq="M")


def series_coverage(series: RawSeries) -> tuple[pd.Period, pd.Period]:
    """First and last month the series can supply without extrapolation."""
    first = _as_period(series.dates[0])
    last = _as_period(series.dates[-1])
    if series.sampled:
        return first, last
    # interpolated series need the month-end anchor inside [first, last]
    if _month_end(pd.period_range(first, first))[0] < series.dates[0]:
        first += 1
    if _month_end(pd.period_range(last, last))[0] > series.dates[-1]:
        last -= 1
    return first, last


def resample_monthly(series: RawSeries, start, end) -> pd.Series:
    """Value of ``series`` at each month-end anchor from ``start`` to ``end``.

    Daily and weekly series take the last observation on or before the
    anchor. Coarser series are interpolated linearly in calendar days between
    the surrounding observations; an observation on the anchor is returned
    as-is.
    """
    start, end = _as_period(start), _as_period(end)
    if end < start:
        raise DataError(f"{series.name}: empty span {start}..{end}")
    first, last = series_coverage(series)
    if start < first:
        raise DataError(f"{series.name}: span start {start} precedes coverage start {first}")
    if end > last:
        raise DataError(f"{series.name}: span end {end} exceeds coverage end {last}")
    months = pd.period_range(start, end, freq="M")
    anchors = _month_end(months)
    if series.sampled:
        idx = np.searchsorted(series.dates, anchors, side="right") - 1
        values = series.values[idx]
    else:
        x = series.dates.astype(np.int64).astype(float)
        values = np.interp(anchors.astype(np.int64).astype(float), x, series.values)
    return pd.Series(values, index=months, name=series.name)


def interpolated_count(series: RawSeries, start, end) -> int:
    """Months in the span whose value is interpolated rather than read off an observation."""
    if series.sampled:
        return 0
    anchors = _month_end(pd.period_range(_as_period(start), _as_period(end), freq="M"))
    return int(np.sum(~np.isin(anchors, series.dates)))


def build_panel(
    price_series: Mapping[str, RawSeries],
    macro_series: Sequence[RawSeries],
    universe: SectorUniverse | None = None,
) -> MonthlyPanel:
    """Align sector prices and macro series on their common monthly span."""
    universe = universe or SectorUniverse()
    missing = [t for t in universe.tickers if t not in price_series]
    if missing:
        raise DataError(f"missing price series for ticker(s): {', '.join(missing)}")
    names = [s.name for s in macro_series]
    if len(set(names)) != len(names):
        raise DataError("macro series names must be unique")
    everything = [price_series[t] for t in universe.tickers] + list(macro_series)
    spans = [series_coverage(s) for s in everything]
    start = max(s for s, _ in spans)
    end = min(e for _, e in spans)
    if end < start:
        raise DataError("series spans have an empty intersection")
    features = pd.DataFrame(
        {s.name: resample_monthly(s, start, end) for s in macro_series},
        index=pd.period_range(start, end, freq="M"),
    )
    prices = pd.DataFrame(
        {t: resample_monthly(price_series[t], start, end) for t in universe.tickers},
        index=features.index,
    )
    return MonthlyPanel(features, prices)


def rate_of_return(p0: float, p1: float) -> float:
    """Simple return from price ``p0`` to ``p1``."""
    if not p0 > 0:
        raise ValueError(f"starting price must be positive, got {p0}")
    return (p1 - p0) / p0


def _universe_from_config(entries) -> SectorUniverse:
    if entries is None:
        return SectorUniverse()
    pairs = []
    for item in entries:
        if isinstance(item, Mapping):
            pairs.append((item["sector"], item["ticker"]))
        else:
            name, ticker = item
            pairs.append((name, ticker))
    return SectorUniverse(tuple(pairs))


def load_manifest(path, universe: SectorUniverse | None = None) -> Manifest:
    """Load a YAML data manifest.

    Schema::

        universe:            # optional, defaults to the eight iShares sectors
          - {sector: healthcare, ticker: IYH}
        prices:
          IYH: {path: prices/IYH.csv, frequency: daily}
        series:
          - {name: GDP, path: macro/gdp.csv, frequency: quarterly, sectors: [all]}

    Relative paths resolve against the manifest's directory. Every referenced
    file must exist.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    with path.open(encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    base = path.parent
    universe = universe or _universe_from_config(doc.get("universe"))

    def resolve(p) -> Path:
        p = Path(p)
        p = p if p.is_absolute() else base / p
        if not p.is_file():
            raise FileNotFoundError(f"data file not found: {p}")
        return p

    prices = {}
    for ticker, entry in (doc.get("prices") or {}).items():
        prices[str(ticker)] = SeriesSpec(
            str(ticker), resolve(entry["path"]), entry.get("frequency", "daily")
        )
    series = []
    for entry in doc.get("series") or []:
        sectors = entry.get("sectors", ["all"])
        if isinstance(sectors, str):
            sectors = [sectors]
        series.append(
            SeriesSpec(entry["name"], resolve(entry["path"]), entry["frequency"], tuple(sectors))
        )
    for spec in series:
        for key in spec.sectors:
            if key != "all" and key not in universe.names and key not in universe.tickers:
                raise DataError(f"series {spec.name}: unknown sector {key!r}")
    return Manifest(universe, prices, tuple(series), source=path)


def write_panel(
    panel: MonthlyPanel,
    path,
    universe: SectorUniverse | None = None,
    candidates: Mapping[str, Sequence[str]] | None = None,
) -> None:
    """Write the panel CSV plus a ``.meta.json`` sidecar (universe, candidates).

    The CSV starts with a ``# sectorrank-panel v1`` line, then a header of
    ``month``, ``feature:<name>`` and ``price:<ticker>`` columns. Floats are
    written with ``repr`` so a read-back is exact.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["month"] + [f"feature:{c}" for c in panel.features.columns]
    header += [f"price:{t}" for t in panel.prices.columns]
    feats = panel.features.to_numpy(dtype=float)
    prices = panel.prices.to_numpy(dtype=float)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {PANEL_FORMAT}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i, month in enumerate(panel.months):
            writer.writerow([str(month)] + [repr(float(v)) for v in feats[i]] + [repr(float(v)) for v in prices[i]])
    universe = universe or SectorUniverse(
        tuple((t, t) for t in panel.tickers)
    )
    meta = {
        "format": PANEL_FORMAT,
        "universe": [{"sector": n, "ticker": t} for n, t in universe.sectors],
        "candidates": {t: list(c) for t, c in (candidates or {}).items()},
    }
    _meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _meta_path(path: Path) -> Path:
    return path.with_suffix(".meta.json")


def read_panel(path) -> tuple[MonthlyPanel, SectorUniverse, dict[str, tuple[str, ...]]]:
    """Inverse of :func:`write_panel`."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        first = fh.readline().strip()
        if first != f"# {PANEL_FORMAT}":
            raise DataError(f"{path}: not a {PANEL_FORMAT} file")
        frame = pd.read_csv(fh, dtype={"month": str}, float_precision="round_trip")
    index = pd.PeriodIndex(frame.pop("month").to_numpy(), freq="M")
    feat_cols = [c for c in frame.columns if c.startswith("feature:")]
    price_cols = [c for c in frame.columns if c.startswith("price:")]
    features = frame[feat_cols].set_axis([c[len("feature:"):] for c in feat_cols], axis=1)
    prices = frame[price_cols].set_axis([c[len("price:"):] for c in price_cols], axis=1)
    features.index = index
    prices.index = index
    panel = MonthlyPanel(features.astype(float), prices.astype(float))
    meta_file = _meta_path(path)
    if meta_file.is_file():
        meta = json.loads(meta_file.read_text(encoding="utf-8"))
        universe = _universe_from_config(meta.get("universe"))
        candidates = {t: tuple(c) for t, c in meta.get("candidates", {}).items()}
    else:
        universe = SectorUniverse(tuple((t, t) for t in panel.tickers))
        candidates = {}
    return panel, universe, candidates
