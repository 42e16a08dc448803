"""Laplace exponents of subordinators and their structural analysis.

A subordinator is pinned down by its Laplace exponent phi through
E[exp(-r S_t)] = exp(-t phi(r)).  This module carries a small catalog of
exponents (with jump measures attached where a usable closed form exists),
a robust numeric inverse, and the doubling indices

    log2 of  inf/sup/liminf_0/limsup_inf  of  phi(2s)/phi(s)

which gate the validity regions of the general moment bounds implemented in
:mod:`subsing.moments`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy import special

from .errors import DomainError, NumericError, RangeError


class Catalog(Enum):
    STABLE = "stable"
    GAMMA = "gamma"
    TEMPERED_STABLE = "tempered"
    STABLE_LOG = "stablelog"
    STABLE_LOG_INV = "stableloginv"
    RATIO = "ratio"
    DRIFT_ONLY = "drift"
    CUSTOM = "custom"


@dataclass(frozen=True)
class LevyTriplet:
    """Drift plus jump measure of a subordinator.

    ``density`` is d(nu)/ds on (0, inf), or None when only integrated
    quantities are known.  ``tail_mass(eps)`` is nu([eps, inf)) and
    ``small_jump_mean(eps)`` is the partial first moment of nu on (0, eps];
    both may be analytic or quadrature-backed.
    """

    drift: float
    density: Optional[Callable[[np.ndarray], np.ndarray]]
    tail_mass: Callable[[float], float]
    small_jump_mean: Callable[[float], float]

    def __post_init__(self):
        if self.drift < 0:
            raise DomainError("drift must be nonnegative")


@dataclass(frozen=True)
class BernsteinFunction:
    """A Laplace exponent with optional jump structure and a catalog identity."""

    name: str
    kind: Catalog
    params: tuple
    fn: Callable[[np.ndarray], np.ndarray]
    triplet: Optional[LevyTriplet] = None

    @property
    def simulable(self) -> bool:
        return self.triplet is not None

    def __call__(self, s):
        arr = np.asarray(s, dtype=float)
        if np.any(arr <= 0):
            raise DomainError(f"{self.name}: argument must be positive")
        out = self.fn(arr)
        return float(out) if np.isscalar(s) or arr.ndim == 0 else out


def eval_phi(phi: BernsteinFunction, s):
    """Evaluate phi(s); domain error for s <= 0."""
    return phi(s)


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------

def stable(alpha: float) -> BernsteinFunction:
    """phi(s) = s^alpha; jump density alpha/Gamma(1-alpha) s^{-1-alpha}."""
    if not 0 < alpha < 1:
        raise DomainError("stable index must lie in (0, 1)")
    c = alpha / math.gamma(1 - alpha)
    triplet = LevyTriplet(
        drift=0.0,
        density=lambda s, c=c, a=alpha: c * s ** (-1 - a),
        tail_mass=lambda eps, a=alpha: eps ** (-a) / math.gamma(1 - a),
        small_jump_mean=lambda eps, c=c, a=alpha: c / (1 - a) * eps ** (1 - a),
    )
    return BernsteinFunction(f"stable:{alpha:g}", Catalog.STABLE, (alpha,),
                             lambda s, a=alpha: s ** a, triplet)


def gamma_exponent() -> BernsteinFunction:
    """phi(s) = log(1+s); jump density s^{-1} e^{-s}."""
    triplet = LevyTriplet(
        drift=0.0,
        density=lambda s: np.exp(-s) / s,
        tail_mass=lambda eps: float(special.exp1(eps)),
        small_jump_mean=lambda eps: float(-np.expm1(-eps)),
    )
    return BernsteinFunction("gamma", Catalog.GAMMA, (), np.log1p, triplet)


def tempered_stable(alpha: float, lam: float) -> BernsteinFunction:
    """phi(s) = (s+lam)^alpha - lam^alpha; exponentially tempered stable jumps."""
    if not 0 < alpha < 1:
        raise DomainError("tempering requires alpha in (0, 1)")
    if lam <= 0:
        raise DomainError("tempering rate must be positive")
    c = alpha / math.gamma(1 - alpha)

    def tail(eps, a=alpha, l=lam, c=c):
        # int_eps^inf c s^{-1-a} e^{-ls} ds = c l^a Gamma(-a, l eps), via
        # Gamma(-a, x) = (x^{-a} e^{-x} - Gamma(1-a, x)) / a
        x = l * eps
        upper_1ma = special.gammaincc(1 - a, x) * math.gamma(1 - a)
        return c * l ** a * (x ** (-a) * math.exp(-x) - upper_1ma) / a

    def sjm(eps, a=alpha, l=lam, c=c):
        return c * l ** (a - 1) * math.gamma(1 - a) * special.gammainc(1 - a, l * eps)

    triplet = LevyTriplet(
        drift=0.0,
        density=lambda s, a=alpha, l=lam, c=c: c * s ** (-1 - a) * np.exp(-l * s),
        tail_mass=tail,
        small_jump_mean=sjm,
    )
    def fn(s, a=alpha, l=lam):
        # (s+l)^a - l^a without cancellation for s << l
        return l ** a * np.expm1(a * np.log1p(s / l))

    return BernsteinFunction(f"tempered:{alpha:g},{lam:g}", Catalog.TEMPERED_STABLE,
                             (alpha, lam), fn, triplet)


def stable_log(alpha: float, beta: float) -> BernsteinFunction:
    """phi(s) = s^alpha log^beta(1+s), 0 < alpha < 1, 0 <= beta <= 1-alpha."""
    if not 0 < alpha < 1 or not 0 <= beta <= 1 - alpha:
        raise DomainError("need 0 < alpha < 1 and 0 <= beta <= 1 - alpha")
    return BernsteinFunction(f"stablelog:{alpha:g},{beta:g}", Catalog.STABLE_LOG,
                             (alpha, beta),
                             lambda s, a=alpha, b=beta: s ** a * np.log1p(s) ** b)


def stable_log_inv(alpha: float, beta: float) -> BernsteinFunction:
    """phi(s) = s^alpha log^{-beta}(1+s), 0 <= beta <= alpha < 1."""
    if not 0 < alpha < 1 or not 0 <= beta <= alpha:
        raise DomainError("need 0 <= beta <= alpha < 1")
    return BernsteinFunction(f"stableloginv:{alpha:g},{beta:g}", Catalog.STABLE_LOG_INV,
                             (alpha, beta),
                             lambda s, a=alpha, b=beta: s ** a * np.log1p(s) ** (-b))


def ratio(alpha: float) -> BernsteinFunction:
    """phi(s) = s (1+s)^{-alpha}, 0 < alpha < 1."""
    if not 0 < alpha < 1:
        raise DomainError("ratio exponent must lie in (0, 1)")
    return BernsteinFunction(f"ratio:{alpha:g}", Catalog.RATIO, (alpha,),
                             lambda s, a=alpha: s * (1 + s) ** (-a))


def drift_only(b: float) -> BernsteinFunction:
    """phi(s) = b s; deterministic subordinator S_t = b t."""
    if b < 0:
        raise DomainError("drift must be nonnegative")
    triplet = LevyTriplet(drift=b, density=None,
                          tail_mass=lambda eps: 0.0,
                          small_jump_mean=lambda eps: 0.0)
    return BernsteinFunction(f"drift:{b:g}", Catalog.DRIFT_ONLY, (b,),
                             lambda s, b=b: b * s, triplet)


def custom(fn: Callable, name: str = "custom",
           triplet: Optional[LevyTriplet] = None) -> BernsteinFunction:
    return BernsteinFunction(name, Catalog.CUSTOM, (), fn, triplet)


def parse_phi(ident: str) -> BernsteinFunction:
    """Build a catalog exponent from a string id like ``stable:0.5``."""
    head, _, tail = ident.partition(":")
    args = [float(x) for x in tail.split(",") if x] if tail else []
    head = head.strip().lower()
    try:
        if head == "stable":
            return stable(*args)
        if head == "gamma":
            return gamma_exponent()
        if head == "tempered":
            return tempered_stable(*args)
        if head == "stablelog":
            return stable_log(*args)
        if head == "stableloginv":
            return stable_log_inv(*args)
        if head == "ratio":
            return ratio(*args)
        if head == "drift":
            return drift_only(*args)
    except TypeError as exc:
        raise DomainError(f"bad parameter list for '{ident}': {exc}") from None
    raise DomainError(f"unknown exponent id '{ident}'")


# ---------------------------------------------------------------------------
# numeric inverse
# ---------------------------------------------------------------------------

def inverse(phi: BernsteinFunction, y: float, *, rtol: float = 1e-12,
            max_iter: int = 200) -> float:
    """Solve phi(s) = y by bracketed bisection.

    The bracket is grown geometrically from s = 1; phi increasing makes the
    bisection unconditionally safe.  Raises RangeError when y cannot be
    bracketed (bounded phi) and NumericError when the iteration cap is hit.
    """
    if y <= 0:
        raise DomainError("target value must be positive")
    lo = hi = 1.0
    f = phi(1.0)
    if f < y:
        while hi < 1e300:
            lo, hi = hi, hi * 2.0
            if phi(hi) >= y:
                break
        else:
            raise RangeError(f"{phi.name}: {y} is above the attainable range")
    elif f > y:
        while lo > 1e-300:
            hi, lo = lo, lo / 2.0
            if phi(lo) <= y:
                break
        else:
            raise RangeError(f"{phi.name}: {y} is below the attainable range")
    else:
        return 1.0
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        val = phi(mid)
        if abs(val - y) <= rtol * y:
            return mid
        if val < y:
            lo = mid
        else:
            hi = mid
        if hi <= lo * (1 + rtol):
            return math.sqrt(lo * hi)
    raise NumericError(f"{phi.name}: inversion did not converge for y={y}")


# ---------------------------------------------------------------------------
# doubling indices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DoublingIndices:
    """Numeric doubling indices of phi: log2 extremes of phi(2s)/phi(s).

    ``None`` marks an endpoint limit that failed to stabilize.  The grid
    values are infima/suprema over a finite scan plus extrapolated endpoint
    limits, not analytic values.
    """

    global_inf: Optional[float]
    global_sup: Optional[float]
    at_zero: Optional[float]
    at_infinity: Optional[float]


def _log2_ratio(phi: BernsteinFunction, s: np.ndarray) -> np.ndarray:
    with np.errstate(all="ignore"):
        r = np.log2(phi.fn(2.0 * s) / phi.fn(s))
    return r


def _decade_extreme(phi, exponent: float, sign: int, pts: int = 5) -> float:
    # min (sign=-1) or max (sign=+1) of log2 phi(2s)/phi(s) over one decade
    s = 10.0 ** (exponent + np.linspace(0.0, 1.0, pts))
    vals = _log2_ratio(phi, s)
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return math.nan
    return float(vals.max() if sign > 0 else vals.min())


def _endpoint_limit(phi, side: str, sign: int, atol: float) -> Optional[float]:
    """Extrapolated endpoint limit of the log2 doubling ratio.

    Decade exponents are doubled (8, 16, ...) and the values extrapolated by a
    Neville table in 1/exponent; that model is exact for log-type corrections
    (error ~ 1/log s) and harmless for power-type ones, which die out on their
    own.  Returns None when two successive extrapolants never agree to atol.
    """
    exps = [8.0, 16.0, 32.0, 64.0, 128.0, 256.0]
    xs, ys = [], []
    prev = None
    for d in exps:
        e = -d if side == "zero" else d
        v = _decade_extreme(phi, e if side == "inf" else e - 1.0, sign)
        if not math.isfinite(v):
            break
        xs.append(1.0 / d)
        ys.append(v)
        if len(xs) >= 2:
            est = _neville_at_zero(xs, ys)
            if prev is not None and abs(est - prev) <= atol:
                return est
            prev = est
    return None


def _neville_at_zero(xs, ys) -> float:
    n = len(xs)
    tab = list(ys)
    for level in range(1, n):
        for i in range(n - level):
            x0, x1 = xs[i], xs[i + level]
            tab[i] = (x1 * tab[i] - x0 * tab[i + 1]) / (x1 - x0)
    return tab[0]


def doubling_indices(phi: BernsteinFunction, *, lo: float = 1e-8, hi: float = 1e8,
                     per_decade: int = 8, atol: float = 1e-6) -> DoublingIndices:
    """Scan phi(2s)/phi(s) over a log grid and extrapolate the endpoint limits.

    The grid must span at least 12 decades; the global infimum/supremum fold in
    the extrapolated behaviour at both ends, since for several catalog entries
    the extremes are only attained asymptotically.
    """
    if hi / lo < 1e12:
        raise DomainError("grid must span at least 12 decades")
    n = int(math.log10(hi / lo) * per_decade) + 1
    s = np.geomspace(lo, hi, n)
    vals = _log2_ratio(phi, s)
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return DoublingIndices(None, None, None, None)
    grid_min, grid_max = float(vals.min()), float(vals.max())

    zero_inf = _endpoint_limit(phi, "zero", -1, atol)
    zero_sup = _endpoint_limit(phi, "zero", +1, atol)
    inf_inf = _endpoint_limit(phi, "inf", -1, atol)
    inf_sup = _endpoint_limit(phi, "inf", +1, atol)

    ends_min = [v for v in (zero_inf, inf_inf) if v is not None]
    ends_max = [v for v in (zero_sup, inf_sup) if v is not None]
    g_inf = min([grid_min] + ends_min) if ends_min or vals.size else None
    g_sup = max([grid_max] + ends_max) if ends_max or vals.size else None
    return DoublingIndices(g_inf, g_sup, zero_inf, inf_sup)


def log_growth_liminf(phi: BernsteinFunction, *, atol: float = 1e-4) -> Optional[float]:
    """Extrapolated liminf of phi(s)/log(s) as s -> infinity.

    Values growing without bound are reported as ``inf``; None means the scan
    did not stabilize.
    """
    exps = [4.0, 8.0, 16.0, 32.0, 64.0, 128.0]
    vals = []
    for d in exps:
        s = 10.0 ** d
        v = phi(s) / math.log(s)
        if not math.isfinite(v):
            break
        vals.append(v)
    if len(vals) < 3:
        return math.inf if len(vals) and vals[-1] > 1e6 else None
    if vals[-1] > 10 * vals[0] and vals[-1] > vals[-2] > vals[-3]:
        return math.inf
    if abs(vals[-1] - vals[-2]) <= atol * max(1.0, abs(vals[-1])):
        return vals[-1]
    if vals[-1] > 1e8:
        return math.inf
    return None


# ---------------------------------------------------------------------------
# regular-variation upper check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegVarCheck:
    ok: bool
    constant: Optional[float] = None
    witness: Optional[float] = None
    reason: str = ""


def regvar_upper_check(g: Callable[[np.ndarray], np.ndarray], kappa: float,
                       eps: float, *, grid: Optional[np.ndarray] = None,
                       delta: float = 1.0) -> RegVarCheck:
    """Check g(s) <= C s^(kappa-eps) near 0 for an increasing g on (0, 1).

    Requires the numeric doubling index of g at zero to exceed kappa - eps/2;
    when it does, the reported C is the smallest constant that works on the
    grid, i.e. the maximum of g(s)/s^(kappa-eps).
    """
    if not 0 < eps < kappa:
        raise DomainError("need 0 < eps < kappa")
    gb = custom(lambda s: np.asarray(g(s), dtype=float), "regvar-target")
    idx = _endpoint_limit(gb, "zero", -1, atol=1e-4)
    if idx is None or idx <= kappa - eps / 2:
        return RegVarCheck(False, reason=f"index at zero {idx} does not exceed "
                                         f"kappa - eps/2 = {kappa - eps / 2:g}")
    if grid is None:
        grid = np.geomspace(1e-8, delta, 257)
    grid = np.asarray(grid, dtype=float)
    grid = grid[(grid > 0) & (grid <= delta)]
    with np.errstate(all="ignore"):
        ratios = np.asarray(g(grid), dtype=float) / grid ** (kappa - eps)
    bad = ~np.isfinite(ratios)
    if np.any(bad):
        return RegVarCheck(False, witness=float(grid[bad][0]),
                           reason="unbounded ratio at the witness point")
    return RegVarCheck(True, constant=float(ratios.max()),
                       witness=float(grid[int(np.argmax(ratios))]))
