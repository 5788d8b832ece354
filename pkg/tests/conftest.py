import numpy as np
import pandas as pd
import pytest

from sectorrank.marketdata import DEFAULT_SECTORS, MonthlyPanel
from sectorrank.rfe import FeatureSelection

TICKERS = tuple(t for _, t in DEFAULT_SECTORS)


def make_panel(n_months=60, n_features=4, seed=0, start="2001-01"):
    """Random-walk features and positive prices for the default eight tickers."""
    rng = np.random.default_rng(seed)
    months = pd.period_range(start, periods=n_months, freq="M")
    feats = pd.DataFrame(
        np.cumsum(rng.standard_normal((n_months, n_features)), axis=0),
        index=months,
        columns=[f"f{j}" for j in range(n_features)],
    )
    prices = pd.DataFrame(
        100.0 * np.exp(np.cumsum(0.03 * rng.standard_normal((n_months, len(TICKERS))), axis=0)),
        index=months,
        columns=list(TICKERS),
    )
    return MonthlyPanel(feats, prices)


def all_features(panel, k=None):
    names = tuple(panel.feature_names[: k or len(panel.feature_names)])
    return {t: FeatureSelection(t, names, (), tuple(1.0 / len(names) for _ in names)) for t in panel.tickers}


@pytest.fixture
def panel():
    return make_panel()


@pytest.fixture(scope="session")
def sample_dir(tmp_path_factory):
    from sectorrank.sample import write_sample

    root = tmp_path_factory.mktemp("sample")
    write_sample(root, seed=7)
    return root


# criterion number -> list of (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def record(number: int, title: str, passed: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(number, []).append((bool(passed), f"{title}: {detail}"))
    print(f"criterion {number} {'PASS' if passed else 'FAIL'} {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        verdict = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2}: {verdict}  " + " | ".join(d for _, d in parts))
