"""
Per-day classification cascade and the equilibrium-price series.

A day walks through up to five stages and stops at the first fit that the
acceptance gate admits:

    1. single Bessel on 0.01 bins              -> Agreement
    2. single Bessel on 0.005 bins             -> Agreement
    3. two-Bessel superposition on 0.01 bins   -> TwoPriceJump
    4. first-order Kummer on 0.01 bins         -> ThreePriceIndependent
    5. nothing fits                            -> NoAgreementUniform

Days with fewer than `min_bins` distinct coarse bins are Degenerate.

Gates
-----
"paper"     a fit is accepted when R^2 > R^2_crit.
"adequacy"  additionally, the residuals must be consistent with sampling
            noise (chi-square lack-of-fit test) and the day must not be
            consistent with a flat distribution.  The bare R^2 test with
            one explanatory variable admits almost any peaked shape, so on
            its own it cannot tell the model families apart.
"""
import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Optional

import numpy as np

from .fitting import (
    FitOptions,
    FitPreconditionError,
    PARAM_COUNT,
    fit_best,
    init_bessel,
    init_kummer,
    init_two_bessel,
)
from .ingest import SESSION_SECONDS, DayTicks, EmptyDayError, bin_day
from .specfun import chi2_sf

__all__ = [
    "DayClass",
    "ClassifyConfig",
    "DayClassification",
    "CorpusSummary",
    "SeriesPoint",
    "InsufficientDataError",
    "classify_day",
    "classify_corpus",
    "summarize",
    "equilibrium_series",
    "lack_of_fit_pvalue",
    "flat_pvalue",
    "count_peaks",
    "largest_remainder_percentages",
]


class DayClass(str, enum.Enum):
    AGREEMENT = "Agreement"
    TWO_PRICE_JUMP = "TwoPriceJump"
    THREE_PRICE_INDEPENDENT = "ThreePriceIndependent"
    NO_AGREEMENT_UNIFORM = "NoAgreementUniform"
    DEGENERATE = "Degenerate"

    def __str__(self):
        return self.value


CLASS_ORDER = tuple(DayClass)


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class ClassifyConfig:
    coarse_tick: Decimal = Decimal("0.01")
    fine_tick: Decimal = Decimal("0.005")
    alpha: float = 0.05
    df_convention: str = "paper"
    gate: str = "adequacy"
    fit_alpha: float = 1e-6
    flat_alpha: float = 0.01
    min_bins: int = 5
    min_bins_two: int = 8
    session_seconds: float = SESSION_SECONDS
    max_iterations: int = 200
    starts: int = 3

    def __post_init__(self):
        object.__setattr__(self, "coarse_tick", Decimal(str(self.coarse_tick)))
        object.__setattr__(self, "fine_tick", Decimal(str(self.fine_tick)))
        if self.gate not in ("paper", "adequacy"):
            raise ValueError(f"unknown gate {self.gate!r}")
        if not 0 < self.fit_alpha < 1 or not 0 < self.flat_alpha < 1:
            raise ValueError("fit_alpha and flat_alpha must lie in (0, 1)")
        if self.coarse_tick <= 0 or self.fine_tick <= 0:
            raise ValueError("tick sizes must be positive")
        if self.min_bins < PARAM_COUNT["bessel"] + 2:
            raise ValueError("min_bins must leave at least one residual degree of freedom")
        if self.min_bins_two < PARAM_COUNT["two_bessel"] + 2:
            raise ValueError("min_bins_two is below the superposition's parameter floor")
        if self.session_seconds <= 0 or self.starts < 1:
            raise ValueError("session_seconds and starts must be positive")
        # validates alpha and df_convention
        self.fit_options()

    def fit_options(self):
        return FitOptions(max_iterations=self.max_iterations, alpha=self.alpha,
                          df_convention=self.df_convention)


@dataclass
class DayClassification:
    day: object
    cls: DayClass
    chosen_fit: Optional[object]
    equilibrium_price: Optional[float]
    equilibrium_source: Optional[str]
    total_volume: int
    n_bins: int
    stage: int
    fits: dict = field(default_factory=dict, repr=False)
    lack_of_fit: dict = field(default_factory=dict, repr=False)
    flat_p: float = float("nan")
    peak_count: int = 0
    component_p0s: tuple = ()
    flags: tuple = ()

    @property
    def usable(self):
        return self.cls is not DayClass.DEGENERATE and self.equilibrium_price is not None


# --- gate statistics -------------------------------------------------------

def _noise_floor(dist):
    # variance floor for bins where both the data and the model are ~0
    return 0.5 / dist.effective_n


def lack_of_fit_pvalue(dist, fit):
    """Chi-square p-value of the fit's residuals against sampling noise.

    A bin's probability is a volume share, so its variance is about
    P / N_eff, with N_eff the Kish effective tick count of the day.  The
    larger of the observed and fitted value is used for P, which keeps the
    statistic conservative in the tails.
    """
    y = np.asarray(dist.probabilities, dtype=float)
    m = np.asarray(fit.predict(dist.prices), dtype=float)
    var = np.maximum(np.maximum(m, y), _noise_floor(dist)) / dist.effective_n
    chi = float(np.sum((y - m) ** 2 / var))
    dof = y.size - PARAM_COUNT[fit.family]
    return chi2_sf(chi, dof) if dof > 0 else 0.0


def flat_pvalue(dist):
    """Chi-square p-value of the day against equal probability on its bins."""
    y = np.asarray(dist.probabilities, dtype=float)
    if y.size < 2:
        return 1.0
    m = 1.0 / y.size
    chi = float(np.sum((y - m) ** 2) / (m / dist.effective_n))
    return chi2_sf(chi, y.size - 1)


def count_peaks(dist, min_separation=3, min_height=0.5):
    """Number of local maxima at least `min_separation` bins apart.

    Maxima below `min_height` of the tallest are ignored; among close
    maxima the taller wins.
    """
    y = np.asarray(dist.probabilities, dtype=float)
    if y.size == 0:
        return 0
    left = np.r_[-np.inf, y[:-1]]
    right = np.r_[y[1:], -np.inf]
    cand = np.flatnonzero((y >= left) & (y > right) & (y >= min_height * y.max()))
    kept = []
    for i in cand[np.argsort(-y[cand], kind="stable")]:
        if all(abs(i - k) >= min_separation for k in kept):
            kept.append(i)
    return len(kept)


# --- the cascade -----------------------------------------------------------

def _accept(fit, dist, cfg, flat_p, lof, key):
    if fit.failed or not fit.significant:
        return False
    if cfg.gate == "paper":
        return True
    if flat_p >= cfg.flat_alpha:
        return False
    p = lack_of_fit_pvalue(dist, fit)
    lof[key] = p
    return p >= cfg.fit_alpha


def classify_day(day_ticks, config=None):
    """Run the cascade on one day's ticks (DayTicks or TickRecords)."""
    cfg = config or ClassifyConfig()
    opts = cfg.fit_options()
    try:
        ticks = day_ticks if isinstance(day_ticks, DayTicks) else DayTicks.from_records(day_ticks)
    except EmptyDayError:
        return DayClassification(None, DayClass.DEGENERATE, None, None, None, 0, 0, 0,
                                 flags=("empty",))
    if len(ticks) == 0:
        return DayClassification(ticks.day, DayClass.DEGENERATE, None, None, None, 0, 0, 0,
                                 flags=("empty",))

    coarse = bin_day(ticks, cfg.coarse_tick, cfg.session_seconds)
    vwap = coarse.vwap
    base = dict(day=ticks.day, total_volume=coarse.total_volume, n_bins=coarse.n_bins)
    if coarse.n_bins < cfg.min_bins:
        return DayClassification(cls=DayClass.DEGENERATE, chosen_fit=None,
                                 equilibrium_price=vwap,
                                 equilibrium_source="volume_weighted_mean",
                                 stage=0, flags=("too_few_bins",), **base)

    fits, lof, flags = {}, {}, []
    flat_p = flat_pvalue(coarse)
    peaks = count_peaks(coarse)

    def done(cls, stage, fit):
        if cls is DayClass.AGREEMENT:
            price, source = fit.params.p0, "fitted"
        else:
            price, source = vwap, "volume_weighted_mean"
        p0s = fit.params.equilibrium_prices if fit is not None else ()
        return DayClassification(cls=cls, chosen_fit=fit, equilibrium_price=float(price),
                                 equilibrium_source=source, stage=stage, fits=fits,
                                 lack_of_fit=lof, flat_p=flat_p, peak_count=peaks,
                                 component_p0s=tuple(p0s), flags=tuple(flags), **base)

    # stage 1
    fit = fit_best("bessel", coarse, init_bessel(coarse), opts, cfg.starts)
    fits["bessel"] = fit
    if _accept(fit, coarse, cfg, flat_p, lof, "bessel"):
        return done(DayClass.AGREEMENT, 1, fit)

    # stage 2
    fine = bin_day(ticks, cfg.fine_tick, cfg.session_seconds)
    fit = fit_best("bessel", fine, init_bessel(fine), opts, cfg.starts)
    fits["bessel_fine"] = fit
    if _accept(fit, fine, cfg, flat_p, lof, "bessel_fine"):
        return done(DayClass.AGREEMENT, 2, fit)

    # stage 3
    if coarse.n_bins >= cfg.min_bins_two:
        try:
            fit = fit_best("two_bessel", coarse, init_two_bessel(coarse, opts), opts, cfg.starts)
        except FitPreconditionError:
            fit = None
        if fit is not None:
            fits["two_bessel"] = fit
            if _accept(fit, coarse, cfg, flat_p, lof, "two_bessel"):
                return done(DayClass.TWO_PRICE_JUMP, 3, fit)
    else:
        flags.append("two_bessel_skipped")

    # stage 4
    fit = fit_best("kummer", coarse, init_kummer(coarse), opts, cfg.starts)
    fits["kummer"] = fit
    if _accept(fit, coarse, cfg, flat_p, lof, "kummer"):
        return done(DayClass.THREE_PRICE_INDEPENDENT, 4, fit)

    return done(DayClass.NO_AGREEMENT_UNIFORM, 5, None)


def largest_remainder_percentages(counts, decimals=2):
    """Percentages rounded so that they add up to exactly 100."""
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    if total == 0:
        return [0.0] * counts.size
    unit = 10 ** decimals
    # exact integer arithmetic in units of 10^-decimals percent
    scaled = counts * 100 * unit
    base = scaled // total
    rem = scaled - base * total
    short = 100 * unit - int(base.sum())
    order = sorted(range(counts.size), key=lambda i: (-int(rem[i]), i))
    for i in order[:short]:
        base[i] += 1
    return [int(b) / unit for b in base]


@dataclass(frozen=True)
class CorpusSummary:
    counts: dict
    percentages: dict
    total: int

    def rows(self):
        out = [(str(c), self.counts[c], self.percentages[c]) for c in CLASS_ORDER]
        out.append(("Total", self.total, 100.0 if self.total else 0.0))
        return out


def summarize(classifications):
    counts = {c: 0 for c in CLASS_ORDER}
    for dc in classifications:
        counts[dc.cls] += 1
    pct = largest_remainder_percentages([counts[c] for c in CLASS_ORDER])
    return CorpusSummary(counts, dict(zip(CLASS_ORDER, pct)), sum(counts.values()))


def _classify_star(args):
    return classify_day(*args)


def classify_corpus(days, config=None, workers=None):
    """Classify every day and build the class summary.

    `days` is a mapping of date to ticks, or an iterable of DayTicks.
    With `workers` > 1 days are classified in separate processes; the
    results are identical to the serial run and always sorted by date.
    """
    cfg = config or ClassifyConfig()
    items = list(days.values()) if isinstance(days, dict) else days
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_classify_star, ((d, cfg) for d in items), chunksize=4))
    else:
        results = [classify_day(d, cfg) for d in items]
    results.sort(key=lambda r: (r.day is None, r.day))
    return results, summarize(results)


# --- equilibrium series ----------------------------------------------------

@dataclass(frozen=True)
class SeriesPoint:
    day: object
    p0: float
    total_volume: int
    source: str
    after_gap: bool = False


def equilibrium_series(classifications):
    """Usable days in date order as (day, p0, V) points.

    Degenerate days are dropped; the next usable day is marked `after_gap`.
    """
    ordered = sorted((c for c in classifications if c.day is not None), key=lambda c: c.day)
    out = []
    gap = False
    for c in ordered:
        if not c.usable or not c.total_volume > 0 or not math.isfinite(c.equilibrium_price):
            gap = True
            continue
        out.append(SeriesPoint(c.day, float(c.equilibrium_price), int(c.total_volume),
                               c.equilibrium_source, gap and bool(out)))
        gap = False
    if len(out) < 2:
        raise InsufficientDataError(f"need at least 2 usable days, got {len(out)}")
    return out
