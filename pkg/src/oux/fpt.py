"""Single-barrier first-passage distributions for mean-reverting processes.

Everything here reduces to the standardized process (zero mean level, unit
reversion speed and volatility) through an affine state/time change, then
evaluates the eigenfunction series from :mod:`oux.eigen`.
"""

from dataclasses import dataclass
from functools import lru_cache
import math
import warnings

import numpy as np
from scipy.special import exp1

from . import eigen
from .errors import NotEnoughRoots

__all__ = [
    "OUParams",
    "StandardizedProblem",
    "ProbResult",
    "standardize",
    "survival_series",
    "density_series",
    "fpt_survival",
    "fpt_density",
    "fpt_density_reflected",
    "truncation_error_bound",
    "select_truncation",
    "hazard_rate",
]


@dataclass(frozen=True)
class OUParams:
    """Parameters of dX = (mu - lam * X) dt + sigma dW."""

    mu: float
    lam: float
    sigma: float

    def __post_init__(self):
        if not (self.lam > 0 and self.sigma > 0):
            raise ValueError("reversion speed and volatility must be positive")


@dataclass(frozen=True)
class StandardizedProblem:
    """Affinely standardized initial state and barrier; time scales by lam."""

    x_tilde: float
    b_tilde: float
    time_scale: float


@dataclass(frozen=True)
class ProbResult:
    """Probability estimate with an error field and its interpretation.

    kind is "quadrature" (grid-refinement estimate), "mc-stderr" (sampling
    standard error) or "bound" (series truncation bound).  clamped flags
    values that were pushed back into [0, 1].
    """

    prob: float
    err: float
    kind: str
    clamped: bool = False

    def __post_init__(self):
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError("probability outside [0,1]")
        if self.err < 0:
            raise ValueError("error estimate must be nonnegative")


def standardize(params, x, b):
    """Map a general problem to standardized coordinates.

    x -> sqrt(lam/sigma^2) (x - mu/lam), same for the barrier; the survival
    function is invariant with time rescaled by lam.
    """
    scale = math.sqrt(params.lam) / params.sigma
    shift = params.mu / params.lam
    return StandardizedProblem(
        x_tilde=scale * (x - shift),
        b_tilde=scale * (b - shift),
        time_scale=params.lam,
    )


def survival_series(es, x, t_tilde):
    """Raw (unclamped) truncated survival series at standardized time t_tilde.

    x may be a scalar or an array of standardized states.
    """
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    weights = es.coeffs * np.exp(-es.alphas * t_tilde)
    vals = weights @ eigen.eigenfunction_matrix(es, x_arr)
    return float(vals[0]) if np.isscalar(x) or np.ndim(x) == 0 else vals


def density_series(es, x, t_tilde):
    """Raw truncated first-passage density (time derivative of the survival)."""
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    weights = es.coeffs * es.alphas * np.exp(-es.alphas * t_tilde)
    vals = weights @ eigen.eigenfunction_matrix(es, x_arr)
    return float(vals[0]) if np.isscalar(x) or np.ndim(x) == 0 else vals


@lru_cache(maxsize=256)
def _default_terms(x_tilde, b_tilde):
    """Series length heuristic: median-quantile stability with a floor of 8."""
    try:
        n = select_truncation(x_tilde, b_tilde, 0.5, 0.05, alpha_max=60.0)
    except NotEnoughRoots:
        n = 8
    return max(8, n)


def _tail_bound_or_fallback(es, x_tilde, b_tilde, lam, t):
    if b_tilde != 0.0:
        return truncation_error_bound(x_tilde, b_tilde, lam, t, float(es.alphas[-1]))
    # Bound formula divides by |b'|; fall back to the last included term.
    last = abs(es.coeffs[-1] * math.exp(-es.alphas[-1] * lam * t)
               * eigen.hermite_fn(es.alphas[-1], -x_tilde))
    return float(last)


def fpt_survival(params, x, b, t, K=None):
    """P(first passage of the barrier b from x happens after t).

    Exactly 1 at t = 0 and exactly 0 for x >= b at positive times; otherwise
    the truncated eigen-series, clamped to [0,1].  The error field carries the
    truncation tail bound for the last included eigenvalue.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    sp = standardize(params, x, b)
    if t == 0:
        return ProbResult(1.0, 0.0, "bound")
    if sp.x_tilde >= sp.b_tilde:
        return ProbResult(0.0, 0.0, "bound")
    if K is None:
        K = _default_terms(sp.x_tilde, sp.b_tilde)
    es = eigen.build_eigensystem(sp.b_tilde, int(K))
    raw = survival_series(es, sp.x_tilde, sp.time_scale * t)
    err = _tail_bound_or_fallback(es, sp.x_tilde, sp.b_tilde, sp.time_scale, t)
    clamped = not (0.0 <= raw <= 1.0)
    return ProbResult(min(1.0, max(0.0, raw)), err, "bound", clamped=clamped)


def fpt_density(params, x, b, t, K=None):
    """First-passage time density at t > 0, from the term-wise time derivative.

    Small negative excursions (truncation artifacts near t=0) are clamped to
    zero with a warning.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    sp = standardize(params, x, b)
    if sp.x_tilde >= sp.b_tilde:
        raise ValueError("density defined for x below the barrier")
    if K is None:
        K = _default_terms(sp.x_tilde, sp.b_tilde)
    es = eigen.build_eigensystem(sp.b_tilde, int(K))
    val = sp.time_scale * density_series(es, sp.x_tilde, sp.time_scale * t)
    if val < 0:
        warnings.warn("negative density value clamped to 0 (series truncation)",
                      RuntimeWarning, stacklevel=2)
        return 0.0
    return float(val)


def fpt_density_reflected(x_tilde, b_tilde, a_tilde, t, K):
    """First-passage density with a reflecting lower barrier, standardized units."""
    if not a_tilde < x_tilde < b_tilde:
        raise ValueError("need a_tilde < x_tilde < b_tilde")
    if t <= 0:
        raise ValueError("t must be positive")
    es = eigen.build_reflected_eigensystem(b_tilde, a_tilde, int(K))
    val = density_series(es, x_tilde, t)
    if val < 0:
        warnings.warn("negative density value clamped to 0 (series truncation)",
                      RuntimeWarning, stacklevel=2)
        return 0.0
    return float(val)


def truncation_error_bound(x_tilde, b_tilde, lam, t, alpha_K):
    """Tail bound for the survival series truncated after eigenvalue alpha_K.

    exp((x'^2-b'^2)/2) / (sqrt(2)|b'|) * [e^{-lam t alpha}/alpha
    + (1 - lam t) Gamma(0, lam t alpha)].  The bracket is positive for every
    lam*t > 0 even though its second term changes sign.
    """
    if b_tilde == 0.0:
        raise ValueError("tail bound undefined for a barrier at the mean level")
    if alpha_K <= 0 or t <= 0:
        raise ValueError("need alpha_K > 0 and t > 0")
    y = lam * t * alpha_K
    prefix = math.exp((x_tilde**2 - b_tilde**2) / 2.0) / (math.sqrt(2.0) * abs(b_tilde))
    return prefix * (math.exp(-y) / alpha_K + (1.0 - lam * t) * float(exp1(y)))


def select_truncation(x_tilde, b_tilde, quantile, rel_tol, alpha_max):
    """Smallest series length whose quantile estimate is rel_tol-stable.

    The reference uses every eigenvalue below alpha_max; candidate lengths are
    accepted once their inverted quantile falls within the relative window
    around the reference quantile.  Quantile inversion bisects the survival
    function in time on [1e-8, 50] to 1e-8 in probability.
    """
    if not 0.0 < quantile < 1.0:
        raise ValueError("quantile must be in (0,1)")
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    if x_tilde >= b_tilde:
        raise ValueError("need x_tilde below the barrier")

    count = max(1, int(alpha_max / 2) + 2)
    while True:
        try:
            roots = eigen.find_eigenvalues(b_tilde, count, alpha_max)
            break
        except NotEnoughRoots as exc:
            if exc.found < 1:
                raise
            count = exc.found
    alphas = np.asarray(roots)
    coeffs = np.array([-1.0 / (ak * eigen.hermite_fn_dalpha(ak, -b_tilde)) for ak in alphas])
    hvals = np.array([eigen.hermite_fn(ak, -x_tilde) for ak in alphas])

    def survival_n(n, t):
        return float(np.sum(coeffs[:n] * np.exp(-alphas[:n] * t) * hvals[:n]))

    def invert(n):
        lo, hi = 1e-8, 50.0
        flo, fhi = survival_n(n, lo), survival_n(n, hi)
        for _ in range(200):
            if flo - fhi <= 1e-8:
                break
            mid = 0.5 * (lo + hi)
            fm = survival_n(n, mid)
            if fm >= quantile:
                lo, flo = mid, fm
            else:
                hi, fhi = mid, fm
        return 0.5 * (lo + hi)

    q_ref = invert(len(alphas))
    for n in range(1, len(alphas) + 1):
        q_n = invert(n)
        if q_ref * (1.0 - rel_tol) <= q_n <= q_ref * (1.0 + rel_tol):
            return n
    return len(alphas)


def hazard_rate(params, x, b, t, K=None):
    """Instantaneous crossing rate: density over survival at time t."""
    if t <= 0:
        raise ValueError("t must be positive")
    sp = standardize(params, x, b)
    if sp.x_tilde >= sp.b_tilde:
        raise ValueError("hazard defined for x below the barrier")
    if K is None:
        K = _default_terms(sp.x_tilde, sp.b_tilde)
    es = eigen.build_eigensystem(sp.b_tilde, int(K))
    t_tilde = sp.time_scale * t
    num = sp.time_scale * density_series(es, sp.x_tilde, t_tilde)
    den = survival_series(es, sp.x_tilde, t_tilde)
    return float(num / max(den, 1e-300))
