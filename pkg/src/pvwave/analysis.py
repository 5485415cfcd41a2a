"""
Returns, volume changes and their correlation across market regimes.

Pairs are formed from consecutive usable days of an equilibrium series.
A pair belongs to the regime containing its later day, with both regime
ends inclusive.
"""
import csv
import math
from dataclasses import dataclass
from datetime import date

import numpy as np

from .specfun import DomainError, student_t_critical

__all__ = [
    "UndefinedCorrelationError",
    "mean_return",
    "volume_change",
    "pearson",
    "TTest",
    "corr_t_test",
    "DayPairObservation",
    "day_pairs",
    "RegimeSpec",
    "RegimeRow",
    "RegimeCorrelationReport",
    "regime_report",
    "write_report",
    "REPORT_HEADER",
    "MIN_REGIME_DAYS",
]

REPORT_HEADER = ("label", "start", "end", "n", "r", "t", "t_crit", "significant",
                 "n_days", "status")

MIN_REGIME_DAYS = 4


class UndefinedCorrelationError(ValueError):
    """Correlation of a constant sequence."""


def mean_return(p0_prev, p0_curr):
    """Relative jump of the equilibrium price between two days."""
    if not p0_prev > 0:
        raise DomainError(f"previous price must be positive, got {p0_prev}")
    return (p0_curr - p0_prev) / p0_prev


def volume_change(v_prev, v_curr):
    """Relative change of total volume between two days."""
    if not v_prev > 0:
        raise DomainError(f"previous volume must be positive, got {v_prev}")
    return (v_curr - v_prev) / v_prev


def pearson(x, y):
    """Sample Pearson correlation of two equal-length sequences (n >= 3)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d sequences of equal length")
    if x.size < 3:
        raise DomainError(f"need at least 3 points, got {x.size}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    # relative to the raw scale: rounding in the mean can leave a constant
    # input with a tiny nonzero spread
    if sxx <= 1e-28 * float(x @ x):
        raise UndefinedCorrelationError("x is constant")
    if syy <= 1e-28 * float(y @ y):
        raise UndefinedCorrelationError("y is constant")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


@dataclass(frozen=True)
class TTest:
    t: float
    t_crit: float
    significant: bool
    df: int


def corr_t_test(r, n, alpha=0.05):
    """t test of H0: rho = 0 for a sample correlation r over n pairs."""
    if n < 3:
        raise DomainError(f"need n >= 3, got {n}")
    if not -1.0 <= r <= 1.0:
        raise DomainError(f"r must lie in [-1, 1], got {r}")
    df = n - 2
    t_crit = student_t_critical(alpha, df)
    if abs(r) == 1.0:
        return TTest(math.inf, t_crit, True, df)
    t = abs(r) / math.sqrt((1.0 - r * r) / df)
    return TTest(t, t_crit, bool(t > t_crit), df)


@dataclass(frozen=True)
class DayPairObservation:
    prev_day: date
    day: date
    mean_return: float
    volume_change: float
    spans_gap: bool = False


def day_pairs(series):
    """Pairs of consecutive points of an equilibrium series."""
    out = []
    for a, b in zip(series[:-1], series[1:]):
        out.append(DayPairObservation(
            a.day, b.day,
            mean_return(a.p0, b.p0),
            volume_change(a.total_volume, b.total_volume),
            bool(getattr(b, "after_gap", False)),
        ))
    return out


@dataclass(frozen=True)
class RegimeSpec:
    label: str
    start: date
    end: date

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError(f"regime {self.label}: end before start")

    def contains(self, d):
        return self.start <= d <= self.end


@dataclass(frozen=True)
class RegimeRow:
    label: str
    start: date
    end: date
    n: int
    n_days: int
    r: float
    t: float
    t_crit: float
    significant: bool
    status: str
    gap_pairs: int = 0


@dataclass(frozen=True)
class RegimeCorrelationReport:
    rows: tuple
    alpha: float

    def row(self, label):
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)


def _row(label, start, end, pairs, n_days, alpha):
    nan = float("nan")
    n = len(pairs)
    gaps = sum(p.spans_gap for p in pairs)
    if n_days < MIN_REGIME_DAYS or n < 3:
        return RegimeRow(label, start, end, n, n_days, nan, nan, nan, False, "insufficient", gaps)
    x = [p.mean_return for p in pairs]
    y = [p.volume_change for p in pairs]
    try:
        r = pearson(x, y)
    except UndefinedCorrelationError:
        return RegimeRow(label, start, end, n, n_days, nan, nan, nan, False, "undefined", gaps)
    tt = corr_t_test(r, n, alpha)
    return RegimeRow(label, start, end, n, n_days, r, tt.t, tt.t_crit, tt.significant, "ok", gaps)


def regime_report(series, regimes, alpha=0.05, whole_label="ALL"):
    """Correlation rows for the whole sample and for each regime.

    `series` is the output of `equilibrium_series`.  The whole-sample row
    comes first and uses every pair.  Regimes must not overlap; a regime
    with fewer than four usable days is kept and marked insufficient.
    """
    series = sorted(series, key=lambda s: s.day)
    regimes = list(regimes)
    ordered = sorted(regimes, key=lambda g: g.start)
    for a, b in zip(ordered[:-1], ordered[1:]):
        if b.start <= a.end:
            raise ValueError(f"regimes {a.label} and {b.label} overlap")
    pairs = day_pairs(series)
    rows = []
    if series:
        rows.append(_row(whole_label, series[0].day, series[-1].day, pairs, len(series), alpha))
    for g in regimes:
        mine = [p for p in pairs if g.contains(p.day)]
        n_days = sum(1 for s in series if g.contains(s.day))
        rows.append(_row(g.label, g.start, g.end, mine, n_days, alpha))
    return RegimeCorrelationReport(tuple(rows), alpha)


def _fmt(x, digits):
    return "" if isinstance(x, float) and math.isnan(x) else f"{x:.{digits}f}"


def write_report(report, stream):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for r in report.rows:
        w.writerow([r.label, r.start.isoformat(), r.end.isoformat(), r.n,
                    _fmt(r.r, 6), _fmt(r.t, 6), _fmt(r.t_crit, 6),
                    str(r.significant).lower(), r.n_days, r.status])
