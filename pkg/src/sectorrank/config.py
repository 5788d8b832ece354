"""Experiment configuration (YAML).

Schema::

    manifest: data/manifest.yaml     # required; relative to this file
    seed: 7                          # required
    output: results                  # optional; else $SECTOR_RANK_OUT, else ./sectorrank-out
    split: 2015-12                   # optional train/test boundary month; default 80% of months
    universe:                        # optional override of the sector universe
      - {sector: healthcare, ticker: IYH}
    grid:
      models: [ridge, lstm, gru, esn]
      horizons: {1: [6, 12, 18, 24, 30, 36], 3: [12, 24, 36, 48]}
    model_params:                    # constructor overrides per model kind
      esn: {n_reservoir: 100}
    selection: {k: 4, forest: {n_estimators: 100}}
    backtest: {top_k: 4, min_blocks: 24, refit_every: 1, risk_free: 0.0}
    report: {rule: max_rank}         # or mean_rank

A missing ``grid`` section means the default grid over all four models.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import pandas as pd
import yaml

from .marketdata import SectorUniverse, _universe_from_config
from .predictors import MODEL_KINDS

__all__ = ["ConfigError", "ExperimentConfig", "DEFAULT_GRID", "load_config", "OUT_ENV"]

OUT_ENV = "SECTOR_RANK_OUT"

DEFAULT_GRID = {
    1: (6, 12, 18, 24, 30, 36),
    3: (12, 24, 36, 48),
    6: (12, 24, 36, 48),
    12: (12, 24, 36, 48),
    24: (12, 24, 36, 48, 60),
}

REPORT_RULES = ("max_rank", "mean_rank")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    manifest: Path
    seed: int
    output: Path
    models: tuple[str, ...] = MODEL_KINDS
    horizons: dict = field(default_factory=lambda: dict(DEFAULT_GRID))
    split: Optional[pd.Period] = None
    universe: Optional[SectorUniverse] = None
    model_params: dict = field(default_factory=dict)
    select_k: int = 4
    forest_params: dict = field(default_factory=dict)
    top_k: int = 4
    min_blocks: int = 24
    refit_every: int = 1
    risk_free: float = 0.0
    report_rule: str = "max_rank"
    source: Optional[Path] = None
    digest: str = ""

    def cells(self) -> list[tuple[str, int, int]]:
        """(model, lookback, horizon) for every grid cell."""
        return [(m, L, h) for h in sorted(self.horizons) for L in self.horizons[h] for m in self.models]

    def replace(self, **changes) -> "ExperimentConfig":
        from dataclasses import replace

        return replace(self, **changes)


def _int_keys(horizons) -> dict[int, tuple[int, ...]]:
    out = {}
    for h, lookbacks in dict(horizons).items():
        lbs = tuple(int(L) for L in lookbacks)
        if int(h) < 1 or not lbs or min(lbs) < 1:
            raise ConfigError(f"grid horizon {h}: need h >= 1 and a non-empty list of lookbacks >= 1")
        out[int(h)] = lbs
    return out


def load_config(path, output: Optional[str] = None) -> ExperimentConfig:
    """Parse and validate a config file; ``output`` overrides the configured directory."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config not found: {path}")
    raw = path.read_bytes()
    doc = yaml.safe_load(raw) or {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    base = path.parent
    if doc.get("seed") is None:
        raise ConfigError(f"{path}: 'seed' is required")
    if "manifest" not in doc:
        raise ConfigError(f"{path}: 'manifest' is required")
    manifest = Path(doc["manifest"])
    manifest = manifest if manifest.is_absolute() else base / manifest
    if not manifest.is_file():
        raise FileNotFoundError(f"manifest not found: {manifest}")

    out = output or doc.get("output") or os.environ.get(OUT_ENV) or "sectorrank-out"
    out = Path(out)
    if not out.is_absolute() and output is None and doc.get("output"):
        out = base / out

    grid = doc.get("grid") or {}
    models = tuple(grid.get("models", MODEL_KINDS))
    unknown = [m for m in models if m not in MODEL_KINDS]
    if unknown or not models:
        raise ConfigError(f"grid models must be a non-empty subset of {MODEL_KINDS}, got {list(models)}")
    horizons = _int_keys(grid.get("horizons", DEFAULT_GRID))
    if not horizons:
        raise ConfigError("grid is empty")

    selection = doc.get("selection") or {}
    backtest = doc.get("backtest") or {}
    rule = (doc.get("report") or {}).get("rule", "max_rank")
    if rule not in REPORT_RULES:
        raise ConfigError(f"report rule must be one of {REPORT_RULES}")
    split = doc.get("split")
    return ExperimentConfig(
        manifest=manifest,
        seed=int(doc["seed"]),
        output=out,
        models=models,
        horizons=horizons,
        split=None if split is None else pd.Period(str(split), freq="M"),
        universe=_universe_from_config(doc["universe"]) if doc.get("universe") else None,
        model_params={k: dict(v or {}) for k, v in (doc.get("model_params") or {}).items()},
        select_k=int(selection.get("k", 4)),
        forest_params=dict(selection.get("forest") or {}),
        top_k=int(backtest.get("top_k", 4)),
        min_blocks=int(backtest.get("min_blocks", 24)),
        refit_every=int(backtest.get("refit_every", 1)),
        risk_free=float(backtest.get("risk_free", 0.0)),
        report_rule=rule,
        source=path,
        digest=hashlib.sha256(json.dumps(doc, sort_keys=True, default=str).encode()).hexdigest(),
    )
