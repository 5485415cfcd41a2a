"""
Seeded synthetic tick corpora with known ground truth.

A day is drawn by evaluating one model family on a price grid, normalizing,
and sampling tick prices multinomially over the grid.  A corpus strings days
together with an equilibrium-price walk and a total-volume series whose
day-over-day change is correlated with the day-over-day return at a planted
level.

Randomness: the corpus-level series come from one generator keyed on the
corpus seed; each day's ticks come from a generator keyed on (seed, day
index), so days can be generated in any order or in parallel.
"""
import json
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from decimal import Decimal
from typing import Optional, Sequence

import numpy as np

from .ingest import SESSION_SECONDS, DayTicks, to_millis
from .models import (
    BesselParams,
    KummerParams,
    TwoBesselParams,
    eval_bessel,
    eval_kummer,
    eval_two_bessel,
)

__all__ = [
    "SYNTH_FAMILIES",
    "FAMILY_CLASS",
    "DegenerateSpecError",
    "SynthDaySpec",
    "synth_day",
    "JumpProcess",
    "VolumeResponse",
    "GroundTruth",
    "SynthCorpus",
    "synth_corpus",
    "trading_days",
    "write_truth",
    "TRUTH_HEADER",
]

SYNTH_FAMILIES = ("bessel", "two_bessel", "kummer1", "uniform")

# class name the pipeline should assign to each planted family
FAMILY_CLASS = {
    "bessel": "Agreement",
    "two_bessel": "TwoPriceJump",
    "kummer1": "ThreePriceIndependent",
    "uniform": "NoAgreementUniform",
}

TRUTH_HEADER = ("date", "family", "p0", "params_json", "total_volume")

# morning 09:30-11:30, afternoon 13:00-15:00
_MORNING_OPEN = 9 * 3600 + 30 * 60
_AFTERNOON_OPEN = 13 * 3600


class DegenerateSpecError(ValueError):
    """The model is zero on every grid price."""


@dataclass(frozen=True)
class SynthDaySpec:
    family: str
    true_params: object
    n_ticks: int
    price_grid: tuple
    seed: int
    day: date = date(2007, 4, 2)
    total_volume: Optional[int] = None

    def __post_init__(self):
        if self.family not in SYNTH_FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.n_ticks < 1:
            raise ValueError("n_ticks must be >= 1")
        lo, hi, step = self.price_grid
        if not to_millis(lo) < to_millis(hi) or to_millis(step) <= 0:
            raise ValueError(f"bad price grid {self.price_grid}")
        if self.total_volume is not None and self.total_volume < self.n_ticks:
            raise ValueError("total_volume must allow at least one share per tick")

    def grid_millis(self):
        lo, hi, step = (to_millis(x) for x in self.price_grid)
        return np.arange(lo, hi + 1, step, dtype=np.int64)

    def weights(self):
        prices = self.grid_millis() / 1000.0
        if self.family == "uniform":
            return np.ones_like(prices)
        if self.family == "bessel":
            return eval_bessel(self.true_params, prices)
        if self.family == "two_bessel":
            return eval_two_bessel(self.true_params, prices)
        return eval_kummer(self.true_params, prices)


def _clock_seconds(offsets):
    # session offsets -> seconds since midnight, split over the lunch break
    half = SESSION_SECONDS // 2
    return np.where(offsets < half, _MORNING_OPEN + offsets,
                    _AFTERNOON_OPEN + offsets - half)


def synth_day(spec):
    """Draw one day of ticks from a SynthDaySpec.

    Tick prices land on the grid plus a sub-tick jitter of whole thousandths
    that rounds back to the same grid price.  Timestamps are uniform over
    the session and sorted.  Volumes are 100 shares a tick unless the spec
    fixes the day's total, which is then split multinomially with at least
    one share per tick.
    """
    w = np.asarray(spec.weights(), dtype=float)
    total = w.sum()
    if not total > 0:
        raise DegenerateSpecError(f"{spec.family} model is zero on the whole grid")
    rng = np.random.default_rng(spec.seed)
    grid = spec.grid_millis()
    n = spec.n_ticks
    counts = rng.multinomial(n, w / total)
    prices = np.repeat(grid, counts)
    step = to_millis(spec.price_grid[2])
    j = (step - 1) // 2
    if j > 0:
        prices = prices + rng.integers(-j, j + 1, size=n)
    prices = prices[rng.permutation(n)]
    seconds = _clock_seconds(np.sort(rng.integers(0, SESSION_SECONDS, size=n)))
    if spec.total_volume is None:
        volume = np.full(n, 100, dtype=np.int64)
    else:
        volume = 1 + rng.multinomial(spec.total_volume - n, np.full(n, 1.0 / n))
    return DayTicks(spec.day, seconds, prices, volume)


# --- corpus ----------------------------------------------------------------

@dataclass(frozen=True)
class JumpProcess:
    """Day-over-day walk of the equilibrium price.

    Returns are Gaussian with sd `return_sd`; a constant drift per block keeps
    the log-price from wandering off over long corpora.
    """

    p0_start: float = 10.0
    return_sd: float = 0.02
    tick_size: Decimal = Decimal("0.01")


@dataclass(frozen=True)
class VolumeResponse:
    """Planted link between day-over-day return and volume change.

    rho : correlation between return and relative volume change
    exact : if True, every block's sample correlation equals rho exactly
        (noise is orthogonalized against the returns); otherwise rho is the
        population correlation.
    """

    rho: float = 0.0
    change_sd: float = 0.15
    base_volume: int = 360_000_000
    exact: bool = False

    def __post_init__(self):
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")


@dataclass(frozen=True)
class GroundTruth:
    day: date
    family: str
    p0: float
    params: dict
    total_volume: int
    planted_return: Optional[float] = None
    planted_volume_change: Optional[float] = None

    @property
    def expected_class(self):
        return FAMILY_CLASS[self.family]


@dataclass
class SynthCorpus:
    specs: list
    truth: list
    seed: int
    regimes: list = field(default_factory=list)

    def days(self):
        """Generate each day's ticks lazily."""
        for spec in self.specs:
            yield synth_day(spec)

    def __len__(self):
        return len(self.specs)


def trading_days(start, count):
    """First `count` weekdays on or after `start`."""
    out = []
    d = start
    while len(out) < count:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return out


def _quota(mixture, n):
    # largest-remainder apportionment of n days over the mixture
    raw = np.asarray(mixture, dtype=float) * n
    counts = np.floor(raw).astype(int)
    short = n - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def _bridge_shift(x):
    # constant c such that sum(log(1 + c + x)) == 0
    lo = -1.0 - x.min() + 1e-12
    hi = 1.0
    f = lambda c: np.sum(np.log1p(c + x))
    while f(hi) < 0:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _standardize(x):
    x = x - x.mean()
    return x / x.std()


def _block_series(rng, n, rho, jump, resp):
    z = rng.standard_normal(n)
    e = rng.standard_normal(n)
    if resp.exact:
        z = _standardize(z)
        e = e - e.mean()
        e = _standardize(e - np.dot(e, z) / np.dot(z, z) * z)
    u = rho * z + math.sqrt(max(0.0, 1.0 - rho * rho)) * e
    r = jump.return_sd * z
    dv = resp.change_sd * u
    return r + _bridge_shift(r), dv + _bridge_shift(dv)


def _round_to(x, step_millis):
    return int(round(x * 1000 / step_millis)) * step_millis


def _day_spec(family, rng, p0, n_ticks, seed, day, volume, tick_millis):
    tick = Decimal(tick_millis).scaleb(-3)
    if family == "bessel":
        params = BesselParams(1.0, float(rng.uniform(40, 60)), p0)
        half_lo = half_hi = 0.20
        info = {"C": 1.0, "omega": params.omega, "p0": p0}
    elif family == "two_bessel":
        gap = float(rng.uniform(0.16, 0.24))
        c2 = float(rng.uniform(0.6, 1.0))
        ca, cb = (1.0, c2) if rng.random() < 0.5 else (c2, 1.0)
        a = BesselParams(ca, float(rng.uniform(40, 60)), p0 - gap / 2)
        b = BesselParams(cb, float(rng.uniform(40, 60)), p0 + gap / 2)
        params = TwoBesselParams(a, b)
        half_lo = half_hi = gap / 2 + 0.20
        info = {"C1": a.C, "omega1": a.omega, "p01": a.p0,
                "C2": b.C, "omega2": b.omega, "p02": b.p0}
    elif family == "kummer1":
        params = KummerParams(1.0, float(rng.uniform(8, 14)), p0, 1)
        half_lo = half_hi = 0.45
        info = {"C": 1.0, "sqrtA": params.sqrtA, "p0": p0, "n": 1}
    else:
        params = None
        half_lo, half_hi = 0.15, 0.14
        info = {}
    lo = _round_to(p0 - half_lo, tick_millis)
    hi = _round_to(p0 + half_hi, tick_millis)
    grid = (Decimal(lo).scaleb(-3), Decimal(hi).scaleb(-3), tick)
    spec = SynthDaySpec(family, params, n_ticks, grid, seed, day, volume)
    return spec, info


def synth_corpus(day_count, mixture=(1.0, 0.0, 0.0, 0.0), jump_process=None,
                 volume_response=None, seed=0, n_ticks=100_000,
                 start=date(2007, 4, 2), regimes=None):
    """Build a multi-day synthetic corpus with ground-truth labels.

    Parameters
    ----------
    day_count : int
        Number of trading days (>= 2).
    mixture : sequence of 4 floats
        Share of days per family, in SYNTH_FAMILIES order.  Days are assigned
        by quota (largest remainder) and shuffled, so the realized shares
        match the mixture to within one day.
    regimes : sequence of (n_pairs, rho), optional
        Consecutive blocks of day pairs with their own planted correlation;
        the pair counts must sum to day_count - 1.  Without it the whole
        corpus uses volume_response.rho.

    Returns
    -------
    SynthCorpus
        Day specs (ticks are generated on demand) plus ground truth.
    """
    jump = jump_process or JumpProcess()
    resp = volume_response or VolumeResponse()
    if day_count < 2:
        raise ValueError("day_count must be >= 2")
    mixture = np.asarray(mixture, dtype=float)
    if mixture.shape != (4,) or np.any(mixture < 0) or abs(mixture.sum() - 1) > 1e-9:
        raise ValueError("mixture must be 4 non-negative shares summing to 1")
    n_pairs = day_count - 1
    if regimes is None:
        # blocks bound the drift of the price and volume levels
        size = n_pairs if resp.exact else 100
        blocks = [(min(size, n_pairs - i), resp.rho) for i in range(0, n_pairs, size)]
    else:
        blocks = [(int(k), float(r)) for k, r in regimes]
        if sum(k for k, _ in blocks) != n_pairs:
            raise ValueError("regime pair counts must sum to day_count - 1")
    for _, r in blocks:
        if not -1.0 <= r <= 1.0:
            raise ValueError(f"rho must lie in [-1, 1], got {r}")

    rng = np.random.default_rng([seed, 0])
    families = np.repeat(np.arange(4), _quota(mixture, day_count))
    families = families[rng.permutation(day_count)]

    returns = []
    changes = []
    for k, rho in blocks:
        r, dv = _block_series(rng, k, rho, jump, resp)
        returns.append(r)
        changes.append(dv)
    returns = np.concatenate(returns)
    changes = np.concatenate(changes)

    p0 = np.empty(day_count)
    vol = np.empty(day_count, dtype=np.int64)
    p0[0] = jump.p0_start
    vol[0] = resp.base_volume
    for i in range(1, day_count):
        p0[i] = p0[i - 1] * (1.0 + returns[i - 1])
        vol[i] = max(int(round(vol[i - 1] * (1.0 + changes[i - 1]))), n_ticks)

    dates = trading_days(start, day_count)
    tick_millis = to_millis(jump.tick_size)
    specs, truth = [], []
    for i in range(day_count):
        fam = SYNTH_FAMILIES[families[i]]
        day_seed = int(np.random.SeedSequence([seed, 1, i]).generate_state(1, np.uint64)[0])
        spec, info = _day_spec(fam, rng, float(p0[i]), n_ticks, day_seed,
                               dates[i], int(vol[i]), tick_millis)
        specs.append(spec)
        truth.append(GroundTruth(
            dates[i], fam, float(p0[i]), info, int(vol[i]),
            float(returns[i - 1]) if i else None,
            float(changes[i - 1]) if i else None,
        ))

    regime_rows = []
    pos = 1
    for k, rho in blocks:
        regime_rows.append((dates[pos], dates[pos + k - 1], rho))
        pos += k
    return SynthCorpus(specs, truth, seed, regime_rows if regimes is not None else [])


def write_truth(truth, stream):
    stream.write(",".join(TRUTH_HEADER) + "\n")
    for t in truth:
        params = json.dumps(t.params, sort_keys=True, separators=(",", ":"))
        stream.write(f'{t.day.isoformat()},{t.family},{t.p0:.6f},"{params.replace(chr(34), chr(34) * 2)}",{t.total_volume}\n')
