import numpy as np
import pytest

from aftercast.panel import PanelRecord

_ACCEPTANCE_LINES = []


def record_acceptance(line: str) -> None:
    _ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.fixture
def acceptance_log():
    return record_acceptance


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_record(sid, actuals, forecasts, history=None, names=None, start_month=1):
    actuals = np.asarray(actuals, dtype=float)
    forecasts = np.asarray(forecasts, dtype=float).reshape(len(actuals), -1)
    history = np.zeros(0) if history is None else np.asarray(history, dtype=float)
    hm = (np.arange(len(history)) + start_month - 1) % 12 + 1
    tm = (np.arange(len(history), len(history) + len(actuals)) + start_month - 1) % 12 + 1
    names = names or [f"c{j}" for j in range(forecasts.shape[1])]
    return PanelRecord(sid, history, hm, actuals, tm, forecasts, names)


@pytest.fixture
def three_series():
    """Small hand-checkable panel: 15 periods, 3 candidates."""
    rng = np.random.default_rng(11)
    recs = []
    for k in range(3):
        y = 10 + rng.normal(size=15)
        F = np.column_stack([y + rng.normal(0, 0.3, 15), y + 1.0, y - 2.0 + rng.normal(0, 0.5, 15)])
        recs.append(make_record(f"S{k + 1}", y, F, history=rng.normal(size=36)))
    return recs
