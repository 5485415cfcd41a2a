from datetime import date
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import settings

from pvwave.ingest import DailyVolumeDistribution

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# acceptance results, filled in by test_acceptance.py and printed at the end
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")


def make_dist(prices, probs, tick="0.01", n_eff=1e5, day=date(2007, 4, 2)):
    """DailyVolumeDistribution straight from prices and values (no ticks)."""
    millis = np.rint(np.asarray(prices, dtype=float) * 1000).astype(np.int64)
    probs = np.asarray(probs, dtype=float)
    vol = np.maximum(np.rint(probs * 1e6), 1).astype(np.int64)
    return DailyVolumeDistribution(
        day=day, tick_size=Decimal(tick), bin_millis=millis, volumes=vol,
        probabilities=probs, total_volume=int(vol.sum()), vwap=float(np.dot(prices, probs) / probs.sum()),
        n_ticks=int(n_eff), effective_n=float(n_eff),
    )


@pytest.fixture
def grid41():
    return np.round(np.arange(9.80, 10.2001, 0.01), 2)
