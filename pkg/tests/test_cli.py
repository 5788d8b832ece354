import csv
import hashlib
import itertools
import json
import shutil

import numpy as np
import pytest
import yaml

from sectorrank.cli import main
from sectorrank.config import OUT_ENV, ConfigError, load_config
from sectorrank.experiment import (
    BENCHMARK,
    METRICS,
    RESULT_COLUMNS,
    balanced_pick,
    load_panel,
    metric_ranks,
    read_results,
    read_selections,
    summarize,
)

RIDGE_GRID = {"models": ["ridge"], "horizons": {1: [6, 12, 18, 24, 30, 36]}}


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _copy_sample(sample_dir, dest, **overrides):
    shutil.copytree(sample_dir, dest, ignore=shutil.ignore_patterns("results"))
    cfg = yaml.safe_load((dest / "config.yaml").read_text())
    cfg.update(overrides)
    (dest / "config.yaml").write_text(yaml.safe_dump(cfg))
    return dest / "config.yaml"


@pytest.fixture(scope="module")
def pipeline(sample_dir, tmp_path_factory):
    """Sample data run through ingest, select and a ridge-only backtest."""
    root = tmp_path_factory.mktemp("pipeline")
    config = _copy_sample(sample_dir, root / "data", grid=RIDGE_GRID)
    out = root / "out"
    for cmd in ("ingest", "select", "backtest"):
        assert main([cmd, "--config", str(config), "--out", str(out)]) == 0
    return config, out


# ---------------------------------------------------------------- config


def test_config_requires_seed(sample_dir, tmp_path):
    config = _copy_sample(sample_dir, tmp_path / "d")
    doc = yaml.safe_load(config.read_text())
    del doc["seed"]
    config.write_text(yaml.safe_dump(doc))
    with pytest.raises(ConfigError, match="seed"):
        load_config(config)
    assert main(["ingest", "--config", str(config)]) == 2


def test_config_rejects_unknown_model(sample_dir, tmp_path):
    config = _copy_sample(sample_dir, tmp_path / "d", grid={"models": ["svm"]})
    with pytest.raises(ConfigError):
        load_config(config)


def test_output_fallbacks(sample_dir, tmp_path, monkeypatch):
    config = _copy_sample(sample_dir, tmp_path / "d")
    doc = yaml.safe_load(config.read_text())
    del doc["output"]
    config.write_text(yaml.safe_dump(doc))
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env-out"))
    assert load_config(config).output == tmp_path / "env-out"
    assert load_config(config, str(tmp_path / "flag")).output == tmp_path / "flag"


def test_default_grid_shape(sample_dir, tmp_path):
    config = _copy_sample(sample_dir, tmp_path / "d", grid={})
    cells = load_config(config).cells()
    per_h = {h: len([c for c in cells if c[2] == h]) for h in (1, 3, 6, 12, 24)}
    assert per_h == {1: 24, 3: 16, 6: 16, 12: 16, 24: 20}


# ---------------------------------------------------------------- ingest


def test_ingest_panel_rows(pipeline):
    _, out = pipeline
    panel, _, _ = load_panel(out)
    assert len(panel) == 233
    report = _rows(out / "ingest_report.csv")
    assert {r["series"] for r in report} >= {"IYW", "treasury_10y", "gdp"}
    assert all(int(r["interpolated_months"]) >= 0 for r in report)
    assert any(int(r["dropped_rows"]) == 1 for r in report if r["series"] == "crude_oil")


def test_missing_file_exit_code(sample_dir, tmp_path, capsys):
    config = _copy_sample(sample_dir, tmp_path / "d")
    (tmp_path / "d" / "macro" / "gdp.csv").unlink()
    assert main(["ingest", "--config", str(config), "--out", str(tmp_path / "o")]) == 2
    assert "gdp.csv" in capsys.readouterr().err


def test_short_series_binds(sample_dir, tmp_path, capsys):
    config = _copy_sample(sample_dir, tmp_path / "d")
    path = tmp_path / "d" / "macro" / "unemployment.csv"
    lines = path.read_text().splitlines()
    path.write_text("\n".join([lines[0]] + [line for line in lines[1:] if line[:4] < "2018"]) + "\n")
    assert main(["ingest", "--config", str(config), "--out", str(tmp_path / "o")]) == 0
    assert "binding end: unemployment" in capsys.readouterr().out
    report = {r["series"]: r for r in _rows(tmp_path / "o" / "ingest_report.csv")}
    assert report["unemployment"]["binding"] == "end"
    assert report["unemployment"]["coverage_end"] < "2018-01"


def test_bad_value_names_series(sample_dir, tmp_path, capsys):
    config = _copy_sample(sample_dir, tmp_path / "d")
    path = tmp_path / "d" / "macro" / "gdp.csv"
    path.write_text(path.read_text() + "2020-12-31,oops\n")
    assert main(["ingest", "--config", str(config), "--out", str(tmp_path / "o")]) == 2
    assert "gdp" in capsys.readouterr().err


# ---------------------------------------------------------------- select


def test_select_outputs(pipeline, tmp_path):
    config, out = pipeline
    files = sorted((out / "selections").glob("???.csv"))
    assert len(files) == 8
    assert all(len(_rows(f)) == 4 for f in files)
    assert all(len(s.kept) == 4 for s in read_selections(out).values())
    rerun = tmp_path / "rerun"
    shutil.copy(out / "panel.csv", rerun.mkdir() or rerun / "panel.csv")
    shutil.copy(out / "panel.meta.json", rerun / "panel.meta.json")
    assert main(["select", "--config", str(config), "--out", str(rerun)]) == 0
    for f in [out / "selections.json", *sorted((out / "selections").iterdir())]:
        assert _sha(f) == _sha(rerun / f.relative_to(out))


def test_four_candidates_no_elimination(sample_dir, tmp_path):
    config = _copy_sample(sample_dir, tmp_path / "d")
    manifest = tmp_path / "d" / "manifest.yaml"
    doc = yaml.safe_load(manifest.read_text())
    common = [s for s in doc["series"] if s["sectors"] == ["all"]][:4]
    doc["series"] = common
    manifest.write_text(yaml.safe_dump(doc))
    out = tmp_path / "o"
    assert main(["ingest", "--config", str(config), "--out", str(out)]) == 0
    assert main(["select", "--config", str(config), "--out", str(out)]) == 0
    for t, s in read_selections(out).items():
        assert s.eliminated == ()
        assert _rows(out / "selections" / f"{t}_elimination.csv") == []


# ---------------------------------------------------------------- backtest


def test_backtest_rows(pipeline):
    _, out = pipeline
    rows = _rows(out / "results.csv")
    assert tuple(rows[0]) == RESULT_COLUMNS
    for span in ("in_sample", "out_of_sample"):
        mine = [r for r in rows if r["span"] == span]
        assert len([r for r in mine if r["model"] == "ridge"]) == 6
        assert len([r for r in mine if r["model"] == BENCHMARK]) == 1
    assert all(r["status"] == "ok" for r in rows)
    table = _rows(out / "table_h1.csv")
    assert [r["model"] for r in table] == ["ridge"] * 6 + [BENCHMARK]
    assert len(_rows(out / "lookback_h1.csv")) == 2 * 3 * 6
    path = _rows(out / "paths" / "h1_ridge_L12.csv")
    assert path[0]["strategy_wealth"] == "1.0" and len(path[1]["holdings"].split()) == 4
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["seed"] == 7 and len(manifest["cells"]) == 6
    assert manifest["results_sha256"] == _sha(out / "results.csv")
    # round trip through the artifact's own reader
    parsed = read_results(out)
    assert len(parsed) == len(rows) and all(isinstance(r["horizon"], int) for r in parsed)


def test_backtest_rerun_checksum(pipeline, tmp_path):
    config, out = pipeline
    rerun = tmp_path / "rerun"
    rerun.mkdir()
    for name in ("panel.csv", "panel.meta.json", "selections.json"):
        shutil.copy(out / name, rerun / name)
    assert main(["backtest", "--config", str(config), "--out", str(rerun)]) == 0
    assert _sha(rerun / "results.csv") == _sha(out / "results.csv")


def test_backtest_all_failed_exit(pipeline, tmp_path, capsys):
    config, out = pipeline
    bad = tmp_path / "bad.yaml"
    doc = yaml.safe_load(config.read_text())
    doc["manifest"] = str(config.parent / "manifest.yaml")
    doc["grid"] = {"models": ["ridge"], "horizons": {1: [300]}}
    bad.write_text(yaml.safe_dump(doc))
    rerun = tmp_path / "o"
    rerun.mkdir()
    for name in ("panel.csv", "panel.meta.json", "selections.json"):
        shutil.copy(out / name, rerun / name)
    assert main(["backtest", "--config", str(bad), "--out", str(rerun)]) == 1
    failed = [r for r in _rows(rerun / "results.csv") if r["status"] == "failed"]
    assert failed and "300" in failed[0]["reason"]
    assert "failed ridge L=300" in capsys.readouterr().out


def test_plots(pipeline):
    pytest.importorskip("matplotlib")
    from sectorrank.experiment import render_plots

    written = render_plots(pipeline[1])
    assert written and all(p.suffix == ".svg" and p.stat().st_size > 0 for p in written)


# ---------------------------------------------------------------- report


def _cell(ret, sr, cr, model="m", lookback=1):
    return {"annualized_return": ret, "sharpe_ratio": sr, "calmar_ratio": cr, "model": model, "lookback": lookback}


def test_pick_prefers_better_worst_rank():
    # rank profiles A(1,3,3), B(2,2,2), C(3,1,1)
    cells = [_cell(30, 0.1, 0.1, "A"), _cell(20, 0.5, 0.5, "B"), _cell(10, 0.9, 0.9, "C")]
    assert [metric_ranks(cells, m) for m in METRICS] == [[1, 2, 3], [3, 2, 1], [3, 2, 1]]
    assert balanced_pick(cells) == (1, 2.0)


def test_pick_single_and_dominant():
    assert balanced_pick([_cell(1, None, None)])[0] == 0
    cells = [_cell(5, 1, 1), _cell(9, 2, 3), _cell(7, 1.5, 0.2)]
    assert balanced_pick(cells)[0] == 1


def test_pick_matches_exhaustive_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(1, 7))
        cells = [_cell(*rng.integers(0, 4, 3).astype(float)) for _ in range(n)]
        worst = []
        for c in cells:
            # rank = 1 + number of strictly better cells, per metric
            worst.append(max(1 + sum(o[m] > c[m] for o in cells) for m in METRICS))
        best = min(worst)
        tied = [i for i in range(n) if worst[i] == best]
        top_ret = max(cells[i]["annualized_return"] for i in tied)
        expected = next(i for i in tied if cells[i]["annualized_return"] == top_ret)
        assert balanced_pick(cells)[0] == expected


def test_undefined_ranks_last():
    cells = [_cell(1, None, 1), _cell(0.5, 0.1, 0.5)]
    assert metric_ranks(cells, "sharpe_ratio") == [2, 1]


def test_summarize_structure():
    rows = []
    for span, (model, lb) in itertools.product(("in_sample", "out_of_sample"), [("ridge", 6), ("esn", 12)]):
        rows.append(dict(_cell(float(lb), 1.0, 1.0, model, lb), horizon=1, span=span, status="ok"))
    rows.append(dict(_cell(1.0, 0.1, 0.1, BENCHMARK, None), horizon=1, span="in_sample", status="ok"))
    summary = summarize(rows)
    criteria = [r[2] for r in summary if r[1] == "in_sample"]
    assert criteria == [*METRICS, "balanced_max_rank", BENCHMARK]
    assert summary[3][3:5] == ["esn", 12]


def test_report_command(pipeline, capsys):
    config, out = pipeline
    assert main(["report", "--config", str(config), "--out", str(out)]) == 0
    assert "balanced_max_rank" in capsys.readouterr().out
    summary = _rows(out / "summary.csv")
    assert {r["span"] for r in summary} == {"in_sample", "out_of_sample"}


def test_report_missing_results(tmp_path, capsys):
    assert main(["report", "--out", str(tmp_path)]) == 2
    assert "results.csv" in capsys.readouterr().err


def test_sample_command(tmp_path):
    assert main(["sample", "--out", str(tmp_path / "s"), "--seed", "3"]) == 0
    assert load_config(tmp_path / "s" / "config.yaml").seed == 3
