"""
Tick data in, daily volume-probability distributions out.

Prices are carried internally as integer thousandths of a currency unit
("millis"): the feed quotes exactly three decimals, so this is lossless and
lets binning run vectorized without Decimal arithmetic.
"""
import csv
import io
from dataclasses import dataclass, field
from datetime import date, time
from decimal import Decimal

import numpy as np

__all__ = [
    "TICK_HEADER",
    "SESSION_SECONDS",
    "TickFormatError",
    "TickRowError",
    "EmptyDayError",
    "TickRecord",
    "DayTicks",
    "DailyVolumeDistribution",
    "parse_ticks",
    "write_ticks",
    "to_millis",
    "bin_day",
    "modal_price",
]

TICK_HEADER = ("date", "time", "price", "volume")

# Four trading hours per day on the Shanghai exchange.
SESSION_SECONDS = 4 * 3600


class TickFormatError(ValueError):
    """The input is not a tick CSV at all (bad or missing header)."""


class TickRowError(ValueError):
    """A data row could not be parsed."""

    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class EmptyDayError(ValueError):
    pass


@dataclass(frozen=True)
class TickRecord:
    day: date
    time: time
    price: Decimal
    volume: int

    def __post_init__(self):
        if self.price <= 0:
            raise ValueError(f"price must be positive, got {self.price}")
        if self.volume < 1:
            raise ValueError(f"volume must be >= 1, got {self.volume}")


def to_millis(price):
    """Price (Decimal, str or float) as integer thousandths."""
    d = Decimal(str(price)) if not isinstance(price, Decimal) else price
    scaled = d * 1000
    if scaled != scaled.to_integral_value():
        raise ValueError(f"price {price} has more than 3 decimals")
    return int(scaled)


class DayTicks:
    """One day's ticks stored column-wise.

    Behaves as a read-only sequence of TickRecord, so code that wants records
    can iterate it, while binning and synthesis work on the arrays directly.

    Parameters
    ----------
    day : date
    seconds : array of int
        Seconds since midnight for each tick.
    price_millis : array of int
        Prices in thousandths.
    volume : array of int
    """

    __slots__ = ("day", "seconds", "price_millis", "volume")

    def __init__(self, day, seconds, price_millis, volume):
        self.day = day
        self.seconds = np.asarray(seconds, dtype=np.int64)
        self.price_millis = np.asarray(price_millis, dtype=np.int64)
        self.volume = np.asarray(volume, dtype=np.int64)
        n = len(self.seconds)
        if len(self.price_millis) != n or len(self.volume) != n:
            raise ValueError("column lengths differ")

    @classmethod
    def from_records(cls, records):
        records = list(records)
        if not records:
            raise EmptyDayError("no ticks")
        day = records[0].day
        if any(r.day != day for r in records):
            raise ValueError("ticks span more than one day")
        return cls(
            day,
            [r.time.hour * 3600 + r.time.minute * 60 + r.time.second for r in records],
            [to_millis(r.price) for r in records],
            [r.volume for r in records],
        )

    def __len__(self):
        return len(self.seconds)

    def __getitem__(self, i):
        s = int(self.seconds[i])
        return TickRecord(
            self.day,
            time(s // 3600, (s // 60) % 60, s % 60),
            Decimal(int(self.price_millis[i])).scaleb(-3),
            int(self.volume[i]),
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, DayTicks):
            return NotImplemented
        return (
            self.day == other.day
            and np.array_equal(self.seconds, other.seconds)
            and np.array_equal(self.price_millis, other.price_millis)
            and np.array_equal(self.volume, other.volume)
        )

    def __repr__(self):
        return f"DayTicks({self.day.isoformat()}, n={len(self)})"

    @property
    def total_volume(self):
        return int(self.volume.sum())

    def vwap(self):
        """Volume-weighted mean price over the raw ticks."""
        v = self.volume.astype(float)
        return float(np.dot(self.price_millis.astype(float), v) / v.sum()) / 1000.0


def _as_day_ticks(ticks):
    if isinstance(ticks, DayTicks):
        return ticks
    return DayTicks.from_records(ticks)


# --- CSV -------------------------------------------------------------------

def _parse_row(row):
    if len(row) != 4:
        raise ValueError(f"expected 4 fields, got {len(row)}")
    d_s, t_s, p_s, v_s = (f.strip() for f in row)
    day = date.fromisoformat(d_s)
    hh, mm, ss = t_s.split(":")
    if len(hh) != 2 or len(mm) != 2 or len(ss) != 2:
        raise ValueError(f"time {t_s!r} is not HH:MM:SS")
    seconds = int(hh) * 3600 + int(mm) * 60 + int(ss)
    if not (0 <= int(mm) < 60 and 0 <= int(ss) < 60 and 0 <= int(hh) < 24):
        raise ValueError(f"time {t_s!r} out of range")
    whole, dot, frac = p_s.partition(".")
    if not dot or len(frac) != 3 or not whole.isdigit() or not frac.isdigit():
        raise ValueError(f"price {p_s!r} must have exactly 3 decimals")
    millis = int(whole) * 1000 + int(frac)
    if millis <= 0:
        raise ValueError(f"price {p_s!r} must be positive")
    try:
        volume = int(v_s)
    except ValueError:
        raise ValueError(f"volume {v_s!r} is not an integer") from None
    if volume < 1:
        raise ValueError(f"volume {v_s!r} must be >= 1")
    return day, seconds, millis, volume


def parse_ticks(stream, strict=True, errors=None, session=None):
    """Parse a tick CSV into per-day DayTicks, in order of first appearance.

    Parameters
    ----------
    stream : binary or text file object
    strict : bool
        Raise TickRowError on the first malformed row; otherwise skip it and
        append a TickRowError to `errors` (if given).
    session : (time, time), optional
        Keep only ticks whose time lies in the closed window.
    """
    if isinstance(stream.read(0), bytes):
        stream = io.TextIOWrapper(stream, encoding="utf-8", newline="")
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        return {}
    if tuple(h.strip() for h in header) != TICK_HEADER:
        raise TickFormatError(f"expected header {','.join(TICK_HEADER)}, got {','.join(header)}")
    if session is not None:
        lo = session[0].hour * 3600 + session[0].minute * 60 + session[0].second
        hi = session[1].hour * 3600 + session[1].minute * 60 + session[1].second

    cols = {}
    for row in reader:
        if not row:
            continue
        try:
            day, seconds, millis, volume = _parse_row(row)
        except ValueError as exc:
            err = TickRowError(reader.line_num, str(exc))
            if strict:
                raise err from None
            if errors is not None:
                errors.append(err)
            continue
        if session is not None and not lo <= seconds <= hi:
            continue
        c = cols.setdefault(day, ([], [], []))
        c[0].append(seconds)
        c[1].append(millis)
        c[2].append(volume)
    return {d: DayTicks(d, *c) for d, c in cols.items()}


def write_ticks(days, stream):
    """Write DayTicks (or TickRecord iterables) to a text stream as tick CSV."""
    stream.write(",".join(TICK_HEADER) + "\n")
    for ticks in days:
        ticks = _as_day_ticks(ticks)
        d = ticks.day.isoformat()
        s = ticks.seconds
        m = ticks.price_millis
        lines = [
            f"{d},{hh:02d}:{mm:02d}:{ss:02d},{pm // 1000}.{pm % 1000:03d},{v}\n"
            for hh, mm, ss, pm, v in zip(
                (s // 3600).tolist(), ((s // 60) % 60).tolist(), (s % 60).tolist(),
                m.tolist(), ticks.volume.tolist(),
            )
        ]
        stream.write("".join(lines))


# --- binning ---------------------------------------------------------------

@dataclass(frozen=True)
class DailyVolumeDistribution:
    """Volume probability per price bin for one trading day."""

    day: date
    tick_size: Decimal
    bin_millis: np.ndarray = field(repr=False)
    volumes: np.ndarray = field(repr=False)
    probabilities: np.ndarray = field(repr=False)
    total_volume: int
    session_seconds: float = SESSION_SECONDS
    vwap: float = float("nan")
    n_ticks: int = 0
    effective_n: float = float("nan")

    @property
    def prices(self):
        return self.bin_millis / 1000.0

    @property
    def n_bins(self):
        return len(self.bin_millis)

    @property
    def price_range(self):
        return float(self.bin_millis[0]) / 1000.0, float(self.bin_millis[-1]) / 1000.0

    @property
    def bins(self):
        """(Decimal price, probability) pairs in increasing price order."""
        return [
            (Decimal(int(m)).scaleb(-3), p)
            for m, p in zip(self.bin_millis, self.probabilities)
        ]


def bin_day(ticks, tick_size, session_seconds=SESSION_SECONDS):
    """Aggregate one day's ticks into a DailyVolumeDistribution.

    Each price is rounded half-up to the nearest multiple of `tick_size`,
    volumes are summed per bin and divided by the day's total volume.
    """
    ticks = _as_day_ticks(ticks)
    if len(ticks) == 0:
        raise EmptyDayError(f"no ticks for {ticks.day}")
    step = to_millis(tick_size)
    if step <= 0:
        raise ValueError("tick_size must be positive")
    # half-up rounding of m / step, in integers
    idx = (2 * ticks.price_millis + step) // (2 * step)
    uniq, inverse = np.unique(idx, return_inverse=True)
    vol = np.bincount(inverse, weights=ticks.volume.astype(float)).astype(np.int64)
    keep = vol > 0
    v = ticks.volume.astype(float)
    total = int(ticks.volume.sum())
    return DailyVolumeDistribution(
        day=ticks.day,
        tick_size=Decimal(str(tick_size)),
        bin_millis=(uniq[keep] * step).astype(np.int64),
        volumes=vol[keep],
        probabilities=vol[keep] / total,
        total_volume=total,
        session_seconds=float(session_seconds),
        vwap=ticks.vwap(),
        n_ticks=len(ticks),
        effective_n=float(v.sum() ** 2 / np.dot(v, v)),
    )


def modal_price(dist):
    """Price of the largest-probability bin.

    Ties resolve to the volume-weighted mean of the tied bins.
    """
    vol = dist.volumes
    top = vol == vol.max()
    if top.sum() == 1:
        return float(dist.prices[np.argmax(vol)])
    w = vol[top].astype(float)
    return float(np.dot(dist.prices[top], w) / w.sum())
