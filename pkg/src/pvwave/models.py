"""
The three volume-probability model families and day-level force diagnostics.

Families
--------
bessel      C |J0(omega (p - p0))|
two_bessel  C1 |J0(omega1 (p - p01))| + C2 |J0(omega2 (p - p02))|
kummer      C exp(-sqrtA |p - p0|) |L_n(2 sqrtA |p - p0|)|

Each family has a params dataclass that round-trips through a flat float
vector (`to_vector` / `from_vector`) for the least-squares code.
"""
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .specfun import bessel_j0, laguerre

__all__ = [
    "BesselParams",
    "TwoBesselParams",
    "KummerParams",
    "FAMILIES",
    "PARAM_COUNT",
    "evaluate",
    "eval_bessel",
    "eval_two_bessel",
    "eval_kummer",
    "numeric_jacobian",
    "ForceReport",
    "compute_forces",
    "eigen_sqrt_a",
    "eigen_energy",
]


@dataclass(frozen=True)
class BesselParams:
    C: float
    omega: float
    p0: float

    def __post_init__(self):
        if not (self.C >= 0 and self.omega > 0 and self.p0 > 0):
            raise ValueError(f"invalid Bessel parameters {self}")

    def to_vector(self):
        return np.array([self.C, self.omega, self.p0])

    @classmethod
    def from_vector(cls, v, **_):
        return cls(float(v[0]), float(v[1]), float(v[2]))

    @property
    def equilibrium_prices(self):
        return (self.p0,)


@dataclass(frozen=True)
class TwoBesselParams:
    first: BesselParams
    second: BesselParams

    def __post_init__(self):
        if self.first.p0 > self.second.p0:
            raise ValueError("components must be ordered by p0")

    @classmethod
    def ordered(cls, a, b):
        return cls(a, b) if a.p0 <= b.p0 else cls(b, a)

    def to_vector(self):
        return np.concatenate([self.first.to_vector(), self.second.to_vector()])

    @classmethod
    def from_vector(cls, v, **_):
        return cls.ordered(BesselParams.from_vector(v[:3]), BesselParams.from_vector(v[3:]))

    @property
    def equilibrium_prices(self):
        return (self.first.p0, self.second.p0)


@dataclass(frozen=True)
class KummerParams:
    C: float
    sqrtA: float
    p0: float
    n: int = 1

    def __post_init__(self):
        if not (self.C >= 0 and self.sqrtA > 0 and self.p0 > 0 and self.n >= 0):
            raise ValueError(f"invalid Kummer parameters {self}")

    def to_vector(self):
        return np.array([self.C, self.sqrtA, self.p0])

    @classmethod
    def from_vector(cls, v, n=1):
        return cls(float(v[0]), float(v[1]), float(v[2]), n)

    @property
    def equilibrium_prices(self):
        return (self.p0,)


def eval_bessel(params, p):
    """C |J0(omega (p - p0))|, evaluated elementwise."""
    return params.C * np.abs(bessel_j0(params.omega * (np.asarray(p, dtype=float) - params.p0)))


def eval_two_bessel(params, p):
    # absolute values are taken per component and then summed
    return eval_bessel(params.first, p) + eval_bessel(params.second, p)


def eval_kummer(params, p):
    d = np.abs(np.asarray(p, dtype=float) - params.p0)
    s = params.sqrtA
    return params.C * np.exp(-s * d) * np.abs(laguerre(params.n, 2.0 * s * d))


FAMILIES = {
    "bessel": (BesselParams, eval_bessel),
    "two_bessel": (TwoBesselParams, eval_two_bessel),
    "kummer": (KummerParams, eval_kummer),
}

PARAM_COUNT = {"bessel": 3, "two_bessel": 6, "kummer": 3}


def evaluate(family, params, p):
    return FAMILIES[family][1](params, p)


def _raw_model(family, n):
    # model as a function of a raw parameter vector; no validation so that
    # finite-difference probes may step through the boundary
    if family == "bessel":
        def f(v, p):
            return v[0] * np.abs(bessel_j0(v[1] * (p - v[2])))
    elif family == "two_bessel":
        def f(v, p):
            return (v[0] * np.abs(bessel_j0(v[1] * (p - v[2])))
                    + v[3] * np.abs(bessel_j0(v[4] * (p - v[5]))))
    elif family == "kummer":
        def f(v, p):
            d = np.abs(p - v[2])
            return v[0] * np.exp(-v[1] * d) * np.abs(laguerre(n, 2.0 * v[1] * d))
    else:
        raise KeyError(family)
    return f


def _kink_mask(family, v, p, n):
    # points where the model is not differentiable in its parameters
    f = _raw_model(family, n)
    if family == "two_bessel":
        m1 = v[0] * np.abs(bessel_j0(v[1] * (p - v[2])))
        m2 = v[3] * np.abs(bessel_j0(v[4] * (p - v[5])))
        return (np.abs(m1) < 1e-12) & (v[0] > 0) | (np.abs(m2) < 1e-12) & (v[3] > 0)
    mask = np.abs(f(v, p)) < 1e-12
    if family == "kummer":
        mask |= p == v[2]
    return mask


def numeric_jacobian(family, params, p, n=None, rel_step=1e-6, abs_step=1e-9):
    """Partial derivatives of the model at each price, shape (len(p), k).

    Central differences with per-parameter step max(rel_step |theta|, abs_step).
    At kinks of the absolute value (model within 1e-12 of a zero) and, for
    the Kummer family, at p == p0, a forward difference is used instead.
    """
    v = params.to_vector() if hasattr(params, "to_vector") else np.asarray(params, dtype=float)
    if n is None:
        n = getattr(params, "n", 1)
    p = np.atleast_1d(np.asarray(p, dtype=float))
    f = _raw_model(family, n)
    f0 = f(v, p)
    kink = _kink_mask(family, v, p, n)
    jac = np.empty((p.size, v.size))
    for j in range(v.size):
        h = max(rel_step * abs(v[j]), abs_step)
        up = v.copy()
        up[j] += h
        dn = v.copy()
        dn[j] -= h
        fu = f(up, p)
        jac[:, j] = (fu - f(dn, p)) / (2 * h)
        if np.any(kink):
            jac[kink, j] = (fu[kink] - f0[kink]) / h
    return jac


# --- forces ----------------------------------------------------------------

def eigen_sqrt_a(energy, n):
    """sqrt(A) from the Kummer eigenvalue relation sqrt(A) = E / (1 + 2n)."""
    return energy / (1 + 2 * n)


def eigen_energy(sqrt_a, n):
    return (1 + 2 * n) * sqrt_a


@dataclass
class ForceReport:
    """Day-level momentum, utility and force diagnostics.

    Fields that need a fit the caller did not supply stay None and are
    listed in `missing`.
    """

    trading_momentum: float
    momentum_force: float
    liquidity_utility: float
    interactive_utility: float
    reference_price: float
    agreement_force: Optional[float] = None
    reversal_force: Optional[float] = None
    eigen_sqrtA: Optional[float] = None
    eigen_energy: Optional[float] = None
    momentum_force_inferred: Optional[float] = None
    missing: tuple = field(default_factory=tuple)

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _dominant_bessel(params):
    if isinstance(params, TwoBesselParams):
        return max((params.first, params.second), key=lambda c: c.C)
    return params


def compute_forces(dist, bessel_fit=None, kummer_fit=None, price=None):
    """Force diagnostics for one day.

    Parameters
    ----------
    dist : DailyVolumeDistribution
        Supplies total volume V and session length t.
    bessel_fit : BesselParams or TwoBesselParams, optional
        Gives the agreement force omega^2 (dominant component for a
        superposition).
    kummer_fit : KummerParams, optional
        Gives the reversal force A = sqrtA^2 and the eigenvalue (1 + 2n) sqrtA.
    price : float, optional
        Representative price; defaults to the fitted p0, else the day's VWAP.
    """
    V = float(dist.total_volume)
    t = float(dist.session_seconds)
    if V <= 0 or t <= 0:
        raise ValueError("total volume and session length must be positive")
    if price is None:
        src = bessel_fit if bessel_fit is not None else kummer_fit
        price = _dominant_bessel(src).p0 if src is not None else float(dist.vwap)
    v_t = V / t
    v_tt = V / t ** 2
    report = ForceReport(
        trading_momentum=v_t,
        momentum_force=v_tt,
        liquidity_utility=price * v_tt,
        interactive_utility=price * v_t ** 2 / V,
        reference_price=price,
    )
    missing = []
    if bessel_fit is not None:
        report.agreement_force = _dominant_bessel(bessel_fit).omega ** 2
    else:
        missing.append("agreement_force")
    if kummer_fit is not None:
        report.reversal_force = kummer_fit.sqrtA ** 2
        report.eigen_sqrtA = kummer_fit.sqrtA
        report.eigen_energy = eigen_energy(kummer_fit.sqrtA, kummer_fit.n)
    else:
        missing.extend(["reversal_force", "eigen_sqrtA", "eigen_energy"])
    if bessel_fit is not None and kummer_fit is not None:
        report.momentum_force_inferred = report.agreement_force + report.reversal_force
    else:
        missing.append("momentum_force_inferred")
    report.missing = tuple(missing)
    return report
