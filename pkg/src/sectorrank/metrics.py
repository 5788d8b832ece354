"""Portfolio performance metrics: annualized return, Sharpe, drawdown, Calmar.

Undefined values (zero variance, zero drawdown) are ``None`` in Python and
serialize as the token ``undefined``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "UNDEFINED",
    "MetricsReport",
    "annualized_return",
    "sharpe",
    "annualized_sharpe",
    "max_drawdown",
    "calmar",
    "report",
    "fmt",
]

UNDEFINED = "undefined"


def annualized_return(total_return: float, periods_per_year: float, n_periods: int) -> float:
    """Geometric annualization of a total return, in percent."""
    if total_return <= -1.0:
        raise ValueError(f"total return must exceed -100%, got {total_return}")
    if n_periods < 1:
        raise ValueError("need at least one period")
    return ((1.0 + total_return) ** (periods_per_year / n_periods) - 1.0) * 100.0


def sharpe(period_returns: Sequence[float], risk_free: float = 0.0) -> Optional[float]:
    """Mean excess return over its sample (N-1) standard deviation; None if degenerate."""
    excess = np.asarray(period_returns, dtype=float) - risk_free
    if excess.size < 2:
        raise ValueError("Sharpe ratio needs at least two returns")
    sd = excess.std(ddof=1)
    mean = excess.mean()
    if sd <= 1e-12 * max(1.0, abs(mean)):
        return None
    return float(mean / sd)


def annualized_sharpe(ratio: Optional[float], periods_per_year: float) -> Optional[float]:
    if ratio is None:
        return None
    return ratio * math.sqrt(periods_per_year)


def max_drawdown(wealth: Sequence[float]) -> float:
    """Largest fractional fall from a running peak to a later trough."""
    w = np.asarray(wealth, dtype=float)
    if w.size == 0:
        raise ValueError("empty wealth path")
    if np.any(w <= 0):
        raise ValueError("wealth must stay positive")
    peaks = np.maximum.accumulate(w)
    return float(np.max((peaks - w) / peaks))


def calmar(annualized_return_pct: float, drawdown: float) -> Optional[float]:
    """Annualized return (as a fraction) per unit of maximum drawdown."""
    if drawdown <= 0.0:
        return None
    return (annualized_return_pct / 100.0) / drawdown


@dataclass(frozen=True)
class MetricsReport:
    annualized_return: float  # percent
    sharpe: Optional[float]
    annualized_sharpe: Optional[float]
    max_drawdown: float
    calmar: Optional[float]
    periods_per_year: float
    risk_free: float
    n_periods: int

    def row(self) -> dict:
        return {
            "annualized_return": fmt(self.annualized_return),
            "sharpe_ratio": fmt(self.annualized_sharpe),
            "calmar_ratio": fmt(self.calmar),
            "max_drawdown": fmt(self.max_drawdown),
            "n_periods": self.n_periods,
        }


def fmt(value: Optional[float], digits: int = 6) -> str:
    """Fixed-precision text, or ``undefined``."""
    if value is None or not math.isfinite(value):
        return UNDEFINED
    return f"{value:.{digits}f}"


def report(path, periods_per_year: float = 12.0, risk_free: float = 0.0) -> MetricsReport:
    """All metrics for a path (or plain sequence) of per-period returns; wealth starts at 1."""
    r = np.asarray(getattr(path, "returns", path), dtype=float)
    if r.size == 0:
        raise ValueError("empty path")
    wealth = np.concatenate([[1.0], np.cumprod(1.0 + r)])
    total = wealth[-1] - 1.0
    ann = annualized_return(total, periods_per_year, r.size)
    s = sharpe(r, risk_free) if r.size >= 2 else None
    mdd = max_drawdown(wealth)
    return MetricsReport(
        annualized_return=ann,
        sharpe=s,
        annualized_sharpe=annualized_sharpe(s, periods_per_year),
        max_drawdown=mdd,
        calmar=calmar(ann, mdd),
        periods_per_year=periods_per_year,
        risk_free=risk_free,
        n_periods=int(r.size),
    )
