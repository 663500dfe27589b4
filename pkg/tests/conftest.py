import datetime as dt

import numpy as np
import pytest


@pytest.fixture(scope="session")
def sp500_csv(tmp_path_factory):
    """Daily S&P 500 closes 1999-2018 shipped with the ``arch`` package, as an ISO-dated CSV."""
    sp500 = pytest.importorskip("arch.data.sp500")
    df = sp500.load()
    path = tmp_path_factory.mktemp("data") / "sp500.csv"
    with open(path, "w") as fh:
        fh.write("Date,Close,Adj Close\n")
        for stamp, row in df.iterrows():
            fh.write(f"{stamp.date().isoformat()},{float(row['Close'])!r},{float(row['Adj Close'])!r}\n")
    return path


def weekdays(start: dt.date, n: int):
    out, d = [], start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += dt.timedelta(days=1)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> bool:
    """Log one acceptance line; printed live and again in the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
