"""
Levenberg-Marquardt fits of the model families to a daily distribution, and
the R^2 / F significance test used to accept or reject each fit.
"""
from dataclasses import dataclass, field

import numpy as np

from .models import (
    FAMILIES,
    PARAM_COUNT,
    BesselParams,
    KummerParams,
    TwoBesselParams,
    _raw_model,
    numeric_jacobian,
)
from .specfun import f_critical

__all__ = [
    "FitPreconditionError",
    "FitOptions",
    "Goodness",
    "FitResult",
    "explanatory_count",
    "goodness",
    "lm_fit",
    "init_bessel",
    "init_two_bessel",
    "init_kummer",
    "find_separated_peaks",
    "grid_starts",
    "fit_best",
    "FIRST_J0_ZERO",
]

FIRST_J0_ZERO = 2.404825557695773
RATE_BOUNDS = (1.0, 1e4)


class FitPreconditionError(ValueError):
    """Too few bins for the requested family."""


@dataclass(frozen=True)
class FitOptions:
    max_iterations: int = 200
    damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1
    max_damping: float = 1e12
    rss_rtol: float = 1e-12
    gtol: float = 1e-10
    alpha: float = 0.05
    df_convention: str = "paper"

    def __post_init__(self):
        if self.df_convention not in ("paper", "conventional"):
            raise ValueError(f"unknown df convention {self.df_convention!r}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if min(self.max_iterations, self.damping, self.damping_up,
               self.damping_down, self.max_damping) <= 0:
            raise ValueError("fit options must be positive")


def explanatory_count(family, convention="paper"):
    """k in the F test.

    The "paper" convention counts one explanatory variable per stationary
    price (1 for a single model, 2 for the superposition); the conventional
    one counts every fitted parameter except the level.
    """
    if convention == "paper":
        return 2 if family == "two_bessel" else 1
    return PARAM_COUNT[family] - 1


@dataclass(frozen=True)
class Goodness:
    rss: float
    ess: float
    tss: float
    r2: float
    f: float
    f_crit: float
    r2_crit: float
    significant: bool
    f_significant: bool


def goodness(observed, predicted, k, alpha=0.05):
    """Coefficient of determination and F test for one fit.

    ESS is taken as TSS - RSS, so that R^2 > R^2_crit and F > F_crit are the
    same decision.  A constant observation vector (TSS == 0) has R^2 = 0 and
    is never significant.
    """
    y = np.asarray(observed, dtype=float)
    yhat = np.asarray(predicted, dtype=float)
    n = y.size
    if n <= k + 1:
        raise FitPreconditionError(f"need more than k + 1 = {k + 1} points, got {n}")
    dof = n - k - 1
    rss = float(np.sum((y - yhat) ** 2))
    tss = float(np.sum((y - y.mean()) ** 2))
    f_crit = f_critical(alpha, k, dof)
    r2_crit = k * f_crit / (k * f_crit + dof)
    if tss <= 1e-24 * float(np.sum(y * y)):
        return Goodness(rss, 0.0, tss, 0.0, 0.0, f_crit, r2_crit, False, False)
    ess = tss - rss
    r2 = ess / tss
    f = np.inf if rss == 0 else (ess / k) / (rss / dof)
    return Goodness(rss, ess, tss, r2, float(f), f_crit, r2_crit,
                    bool(r2 > r2_crit), bool(f > f_crit))


@dataclass
class FitResult:
    family: str
    params: object
    goodness: Goodness
    k: int
    n_bins: int
    iterations: int
    converged: bool
    status: str
    failed: bool = False
    rss_history: list = field(default_factory=list, repr=False)

    @property
    def rss(self):
        return self.goodness.rss

    @property
    def r2(self):
        return self.goodness.r2

    @property
    def significant(self):
        return self.goodness.significant

    def predict(self, prices):
        return FAMILIES[self.family][1](self.params, prices)


def _bounds(size, lo, hi):
    # admissible box: C >= 0, rates inside RATE_BOUNDS, p0 inside the price range
    lower = np.tile([0.0, RATE_BOUNDS[0], lo], size // 3)
    upper = np.tile([np.inf, RATE_BOUNDS[1], hi], size // 3)
    return lower, upper


def _project(family, v, lo, hi):
    lower, upper = _bounds(v.size, lo, hi)
    return np.minimum(np.maximum(v, lower), upper)


def lm_fit(family, dist, init, opts=None):
    """Least-squares fit of one model family to a day's volume probabilities.

    Marquardt-scaled damping: a step that lowers the RSS is accepted and the
    damping shrinks, otherwise the damping grows and the step is retried.
    Hitting max_iterations returns converged=False; damping escalation past
    `max_damping` caused by singular normal equations returns failed=True.
    """
    opts = opts or FitOptions()
    if family not in FAMILIES:
        raise KeyError(family)
    n_par = PARAM_COUNT[family]
    order = np.argsort(dist.prices, kind="stable")
    x = np.asarray(dist.prices, dtype=float)[order]
    y = np.asarray(dist.probabilities, dtype=float)[order]
    if x.size < n_par + 2:
        raise FitPreconditionError(
            f"{family} needs at least {n_par + 2} bins, got {x.size}")
    n_order = getattr(init, "n", 1)
    cls = FAMILIES[family][0]
    model = _raw_model(family, n_order)
    lo, hi = float(x[0]), float(x[-1])

    theta = _project(family, init.to_vector().astype(float), lo, hi)
    lower, upper = _bounds(theta.size, lo, hi)
    resid = y - model(theta, x)
    rss = float(resid @ resid)
    history = [rss]
    lam = opts.damping
    status = "max_iterations"
    converged = False
    failed = False
    it = 0
    while it < opts.max_iterations:
        it += 1
        if rss == 0.0:
            status, converged = "exact", True
            break
        jac = numeric_jacobian(family, theta, x, n=n_order)
        grad = jac.T @ resid
        # parameters pinned on a bound with the descent direction pointing
        # out stay fixed this iteration; otherwise projection would keep
        # clipping the step and the fit would crawl along the bound
        pinned = (theta <= lower) & (grad < 0) | (theta >= upper) & (grad > 0)
        grad[pinned] = 0.0
        if np.max(np.abs(grad)) < opts.gtol:
            status, converged = "gradient", True
            break
        jac[:, pinned] = 0.0
        jtj = jac.T @ jac
        scale = np.maximum(np.diag(jtj), 1e-30)
        jtj[pinned, pinned] = 1.0
        accepted = False
        singular = False
        while lam <= opts.max_damping:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(scale), grad)
            except np.linalg.LinAlgError:
                singular = True
                lam *= opts.damping_up
                continue
            if not np.all(np.isfinite(step)):
                singular = True
                lam *= opts.damping_up
                continue
            trial = _project(family, theta + step, lo, hi)
            r_trial = y - model(trial, x)
            rss_trial = float(r_trial @ r_trial)
            if rss_trial < rss:
                accepted = True
                break
            lam *= opts.damping_up
        if not accepted:
            if singular:
                status, failed = "singular", True
            else:
                # no descent step at any damping: a minimum to working precision
                status, converged = "stalled", True
            break
        drop = (rss - rss_trial) / rss
        theta, resid, rss = trial, r_trial, rss_trial
        history.append(rss)
        lam = max(lam * opts.damping_down, 1e-15)
        if drop < opts.rss_rtol:
            status, converged = "rss", True
            break

    params = cls.from_vector(theta, n=n_order)
    k = explanatory_count(family, opts.df_convention)
    g = goodness(y, model(theta, x), k, opts.alpha)
    return FitResult(family, params, g, k, int(x.size), it, converged, status,
                     failed, history)


# --- initial guesses -------------------------------------------------------

def _tick(dist):
    return float(dist.tick_size)


def _modal(prices, probs):
    top = probs == probs.max()
    if top.sum() == 1:
        return float(prices[np.argmax(probs)]), float(probs.max())
    return float(np.dot(prices[top], probs[top]) / probs[top].sum()), float(probs.max())


def _lobe_halfwidth(prices, probs, p0, c, tick):
    # distance from p0 to the first bin (missing bins count as zero) whose
    # probability drops below 5% of the peak, searching both directions.
    # Overlapping lobes may never get that low, so a local minimum below
    # half the peak also ends the search.
    thresh = 0.05 * c
    centre = int(np.argmin(np.abs(prices - p0)))
    best = np.inf
    for direction in (1, -1):
        i = centre
        while True:
            j = i + direction
            if j < 0 or j >= prices.size:
                break
            if abs(prices[j] - prices[i]) > 1.5 * tick:
                best = min(best, abs(prices[i] + direction * tick - p0))
                break
            if probs[j] < thresh:
                best = min(best, abs(prices[j] - p0))
                break
            k = j + direction
            if (probs[j] < 0.5 * c and 0 <= k < prices.size
                    and probs[k] > probs[j] and abs(prices[k] - prices[j]) < 1.5 * tick):
                best = min(best, abs(prices[j] - p0))
                break
            i = j
    return best


def _bessel_guess(prices, probs, tick):
    p0, c = _modal(prices, probs)
    half = _lobe_halfwidth(prices, probs, p0, c, tick)
    omega = FIRST_J0_ZERO / half if half > 0 else RATE_BOUNDS[1]
    return BesselParams(c, float(np.clip(omega, *RATE_BOUNDS)), p0)


def init_bessel(dist):
    """Starting point for a single-Bessel fit.

    p0 at the modal bin, C at the modal probability, omega from the first
    J0 zero and the half-width of the central lobe.
    """
    return _bessel_guess(np.asarray(dist.prices, dtype=float),
                         np.asarray(dist.probabilities, dtype=float), _tick(dist))


def find_separated_peaks(dist, min_separation=3):
    """Indices of the two highest local maxima at least `min_separation` bins apart.

    Returns None when there is no such pair.
    """
    y = np.asarray(dist.probabilities, dtype=float)
    n = y.size
    left = np.r_[-np.inf, y[:-1]]
    right = np.r_[y[1:], -np.inf]
    peaks = np.flatnonzero((y >= left) & (y >= right))
    if peaks.size < 2:
        return None
    peaks = peaks[np.argsort(-y[peaks], kind="stable")]
    first = peaks[0]
    for p in peaks[1:]:
        if abs(p - first) >= min_separation:
            return tuple(sorted((int(first), int(p))))
    return None


def init_two_bessel(dist, opts=None):
    """Starting point for the two-component superposition.

    Each component is seeded from its own peak, using the single-Bessel rule
    on its side of the midpoint between the peaks.  Without two separated
    peaks, the second component goes to the largest residual of a
    single-Bessel pre-fit.
    """
    x = np.asarray(dist.prices, dtype=float)
    y = np.asarray(dist.probabilities, dtype=float)
    tick = _tick(dist)
    peaks = find_separated_peaks(dist)
    if peaks is not None:
        i, j = peaks
        cut = (i + j + 1) // 2
        a = _bessel_guess(x[:cut], y[:cut], tick)
        b = _bessel_guess(x[cut:], y[cut:], tick)
        return TwoBesselParams.ordered(a, b)
    pre = lm_fit("bessel", dist, init_bessel(dist), opts)
    resid = y - pre.predict(x)
    m = int(np.argmax(resid))
    second = BesselParams(max(float(resid[m]), 0.0), pre.params.omega, float(x[m]))
    return TwoBesselParams.ordered(pre.params, second)


def init_kummer(dist):
    """First-order Kummer start: p0 at the mode, sqrtA from the mean absolute deviation."""
    x = np.asarray(dist.prices, dtype=float)
    y = np.asarray(dist.probabilities, dtype=float)
    p0, c = _modal(x, y)
    mad = float(np.dot(y, np.abs(x - p0)) / y.sum())
    rate = 1.0 / mad if mad > 0 else np.inf
    return KummerParams(c, float(np.clip(rate, *RATE_BOUNDS)), p0, 1)


# --- multi-start -----------------------------------------------------------

# rate grid around the rule-based guess; the side lobes make the objective
# multimodal in the rate, so the grid has to be fine (about 4% steps)
_GRID_FACTORS = np.geomspace(0.6, 1.7, 27)
_CENTRE_SHIFTS = (-0.5, 0.0, 0.5)  # in ticks


def _candidate_columns(family, v, x, tick, n_order):
    # unit-amplitude model columns over the (rate, centre) grid of one component
    model = _raw_model("kummer" if family == "kummer" else "bessel", n_order)
    params, cols = [], []
    for f in _GRID_FACTORS:
        for s in _CENTRE_SHIFTS:
            u = np.array([1.0, v[1] * f, v[2] + s * tick])
            params.append(u)
            cols.append(model(u, x))
    return np.array(params), np.array(cols)


def _best_single(cols, y):
    # closed-form non-negative amplitude for each column
    gg = np.einsum("ij,ij->i", cols, cols)
    gy = cols @ y
    c = np.where(gg > 0, np.maximum(gy, 0.0) / np.where(gg > 0, gg, 1.0), 0.0)
    rss = y @ y - 2 * c * gy + c * c * gg
    return c, rss


def _best_pairs(ca, cb, y):
    # non-negative two-column least squares for every pair, vectorized
    aa = np.einsum("ij,ij->i", ca, ca)[:, None]
    bb = np.einsum("ij,ij->i", cb, cb)[None, :]
    ab = ca @ cb.T
    ay = (ca @ y)[:, None]
    by = (cb @ y)[None, :]
    yy = y @ y
    det = aa * bb - ab * ab
    safe = np.where(np.abs(det) > 1e-300, det, 1.0)
    a = (bb * ay - ab * by) / safe
    b = (aa * by - ab * ay) / safe
    ok = (np.abs(det) > 1e-300) & (a >= 0) & (b >= 0)
    rss_both = yy - 2 * (a * ay + b * by) + a * a * aa + 2 * a * b * ab + b * b * bb
    a_only = np.maximum(ay, 0) / aa
    b_only = np.maximum(by, 0) / bb
    rss_a = yy - a_only * ay
    rss_b = yy - b_only * by
    use_a = rss_a <= rss_b
    a_alt = np.where(use_a, a_only, 0.0)
    b_alt = np.where(use_a, 0.0, b_only)
    rss_alt = np.minimum(rss_a, rss_b)
    rss = np.where(ok, rss_both, rss_alt)
    return np.where(ok, a, a_alt), np.where(ok, b, b_alt), rss


def grid_starts(family, dist, init, keep=3):
    """Candidate starting vectors for lm_fit, best first.

    Every rate is scanned over a fine geometric grid from 0.6x to 1.7x of
    the initial guess and every centre over half-tick shifts; amplitudes
    are the best non-negative linear fit at each grid point.  The untouched
    initial vector always comes first, followed by the `keep - 1` lowest-RSS
    grid points.
    """
    x = np.asarray(dist.prices, dtype=float)
    y = np.asarray(dist.probabilities, dtype=float)
    tick = float(dist.tick_size)
    v0 = init.to_vector().astype(float)
    n_order = getattr(init, "n", 1)
    if family == "two_bessel":
        pa, ca = _candidate_columns(family, v0[:3], x, tick, n_order)
        pb, cb = _candidate_columns(family, v0[3:], x, tick, n_order)
        amp_a, amp_b, rss = _best_pairs(ca, cb, y)
        order = np.argsort(rss, axis=None, kind="stable")
        cands = []
        for flat in order[: 4 * keep]:
            i, j = np.unravel_index(flat, rss.shape)
            cands.append(np.r_[amp_a[i, j], pa[i, 1:], amp_b[i, j], pb[j, 1:]])
    else:
        pa, ca = _candidate_columns(family, v0, x, tick, n_order)
        amp, rss = _best_single(ca, y)
        order = np.argsort(rss, kind="stable")
        cands = [np.r_[amp[i], pa[i, 1:]] for i in order[: 4 * keep]]
    out = [v0]
    for v in cands:
        if len(out) >= keep:
            break
        if not any(np.allclose(v, u, rtol=1e-3, atol=0) for u in out):
            out.append(v)
    return out


def fit_best(family, dist, init, opts=None, keep=3):
    """Run lm_fit from several grid starts and keep the lowest-RSS result.

    Ties go to the earlier start, so the outcome does not depend on
    floating-point noise in the ranking.
    """
    n_order = getattr(init, "n", 1)
    cls = FAMILIES[family][0]
    best = None
    for v in grid_starts(family, dist, init, keep):
        v = _project(family, v, -np.inf, np.inf)
        fit = lm_fit(family, dist, cls.from_vector(v, n=n_order), opts)
        if fit.failed:
            continue
        if best is None or fit.rss < best.rss:
            best = fit
    if best is None:
        best = lm_fit(family, dist, init, opts)
    return best
