"""Synthetic mixed-frequency dataset with a planted dominant sector quartet.

Each sector's price is proportional to a sector-specific monthly driver index,
up to small noise. The drivers of four sectors grow about 14% a year; the
other four shrink about 5% a year. Common macro
series at daily, weekly, monthly, quarterly and annual frequency are added as
distractor candidates. A forecaster that recovers the price-driver link should
rank the quartet on top and beat the equal-weight portfolio.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .marketdata import DEFAULT_SECTORS

__all__ = ["SAMPLE_START", "SAMPLE_END", "DOMINANT", "DRIVERS", "write_sample"]

SAMPLE_START = "2000-07-14"
SAMPLE_END = "2019-11-10"
DOMINANT = ("IYH", "IYW", "IYK", "IYJ")
DRIVERS = {
    "IYH": "health_spending",
    "IYE": "rig_count",
    "IDU": "power_demand",
    "IYG": "credit_growth",
    "IYW": "chip_orders",
    "IYM": "metals_output",
    "IYJ": "freight_volume",
    "IYK": "retail_sentiment",
}
# wider than the price span so interpolated series cover every anchor
_MACRO_START = "1999-01-01"
_MACRO_END = "2020-12-31"


def _write_csv(path: Path, dates, values, blank=()):
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["date,value"]
    for i, (d, v) in enumerate(zip(dates, values)):
        lines.append(f"{pd.Timestamp(d).date()},{'' if i in blank else repr(float(v))}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _random_walk(rng, n, start, drift, sigma):
    return start + np.cumsum(drift + sigma * rng.standard_normal(n))


def _daily_from_monthly(rng, days: pd.DatetimeIndex, anchor_days, monthly, noise):
    """Business-day path through the monthly values, exact on each anchor day."""
    x = days.asi8.astype(float)
    path = np.interp(x, pd.DatetimeIndex(anchor_days).asi8.astype(float), monthly)
    jitter = 1.0 + noise * rng.standard_normal(len(days))
    jitter[days.isin(anchor_days)] = 1.0
    return path * jitter


def write_sample(out_dir, seed: int = 7, grid: dict | None = None) -> Path:
    """Write price/macro CSVs, ``manifest.yaml`` and ``config.yaml`` under ``out_dir``.

    Returns the config path. ``grid`` overrides the config's grid section.
    """
    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    days = pd.bdate_range(SAMPLE_START, SAMPLE_END)
    months = pd.period_range(days[0], days[-1], freq="M")
    anchor_days = pd.DatetimeIndex(
        [days[days.to_period("M") == m][-1] for m in months]
    )
    n = len(months)

    prices, drivers = {}, {}
    for _, ticker in DEFAULT_SECTORS:
        up = ticker in DOMINANT
        d = _random_walk(rng, n, 0.0, 0.02 if up else -0.008, 0.01)
        drivers[ticker] = 100.0 * np.exp(d)
        level = (10.0 if up else 300.0) * np.exp(d + 0.002 * rng.standard_normal(n))
        prices[ticker] = _daily_from_monthly(rng, days, anchor_days, level, 0.002)

    manifest = {"prices": {}, "series": []}
    for _, ticker in DEFAULT_SECTORS:
        rel = f"prices/{ticker}.csv"
        _write_csv(out / rel, days, prices[ticker])
        manifest["prices"][ticker] = {"path": rel, "frequency": "daily"}

    # sector drivers: monthly, published on month-end dates
    for _, ticker in DEFAULT_SECTORS:
        name = DRIVERS[ticker]
        rel = f"macro/{name}.csv"
        _write_csv(out / rel, months.to_timestamp(how="end").normalize(), drivers[ticker])
        manifest["series"].append({"name": name, "path": rel, "frequency": "monthly", "sectors": [ticker]})

    def common(name, freq, dates, values, blank=()):
        rel = f"macro/{name}.csv"
        _write_csv(out / rel, dates, values, blank)
        manifest["series"].append({"name": name, "path": rel, "frequency": freq, "sectors": ["all"]})

    span_days = pd.bdate_range(_MACRO_START, _MACRO_END)
    common("treasury_10y", "daily", span_days, 4.0 + np.cumsum(0.03 * rng.standard_normal(len(span_days))))
    fridays = pd.date_range(_MACRO_START, _MACRO_END, freq="W-FRI")
    common("crude_oil", "weekly", fridays, 60.0 * np.exp(np.cumsum(0.03 * rng.standard_normal(len(fridays)))), blank=(5,))
    mids = pd.date_range(_MACRO_START, _MACRO_END, freq="MS") + pd.Timedelta(days=14)
    common("consumer_prices", "monthly", mids, 170.0 + np.cumsum(0.2 + 0.3 * rng.standard_normal(len(mids))))
    firsts = pd.date_range(_MACRO_START, _MACRO_END, freq="MS")
    common("unemployment", "monthly", firsts, 5.0 + np.cumsum(0.1 * rng.standard_normal(len(firsts))))
    quarters = pd.date_range(_MACRO_START, _MACRO_END, freq="QS") + pd.Timedelta(days=45)
    common("gdp", "quarterly", quarters, 1e4 * np.exp(np.cumsum(0.005 + 0.01 * rng.standard_normal(len(quarters)))))
    years = pd.date_range("1998-07-01", "2021-07-01", freq="12MS")
    common("population", "annual", years, 280.0 + 2.5 * np.arange(len(years)) + rng.standard_normal(len(years)))

    (out / "manifest.yaml").write_text(yaml.safe_dump(manifest, sort_keys=False), encoding="utf-8")
    config = {
        "manifest": "manifest.yaml",
        "seed": int(seed),
        "output": "results",
        "grid": grid or {"models": ["ridge", "esn"], "horizons": {1: [6, 12, 18, 24, 30, 36]}},
        "selection": {"k": 4, "forest": {"n_estimators": 100}},
    }
    path = out / "config.yaml"
    path.write_text(yaml.safe_dump(config, sort_keys=False), encoding="utf-8")
    return path
