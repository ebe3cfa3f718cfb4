"""Special functions and eigensystems for the mean-reverting barrier problem.

The survival function of the first-passage time of a standardized
mean-reverting diffusion (dZ = -Z dt + dW) below a barrier level expands in a
series over real-order parabolic-cylinder-type eigenfunctions.  This module
provides the confluent hypergeometric building block, the real-order Hermite
function built from it, and the machinery that turns a barrier level into an
ordered eigenvalue/coefficient table (optionally with a reflecting lower
barrier).
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy.special import gamma as _gamma
from scipy.special import rgamma

from .errors import EvaluationOverflow, NotEnoughRoots

_SQRT_PI = math.sqrt(math.pi)

# Power series below this |z|, large-argument expansion above (when usable).
_SERIES_Z_CUTOFF = 30.0
_MAX_SERIES_TERMS = 12000

__all__ = [
    "EigenSystem",
    "kummer_1f1",
    "hermite_fn",
    "hermite_fn_dalpha",
    "find_eigenvalues",
    "build_eigensystem",
    "build_reflected_eigensystem",
    "reflected_mixing",
    "reflected_eigenfunction",
    "eigenfunction_matrix",
]


def _near_nonpositive_int(v, tol=1e-12):
    return v <= tol and abs(v - round(v)) <= tol


def _series_1f1(a, b, z):
    """Kahan-compensated power series for 1F1(a; b; z), broadcast over inputs."""
    a, b, z = np.broadcast_arrays(
        np.asarray(a, dtype=float), np.asarray(b, dtype=float), np.asarray(z, dtype=float)
    )
    term = np.ones(a.shape)
    total = np.ones(a.shape)
    comp = np.zeros(a.shape)
    streak = 0
    for n in range(_MAX_SERIES_TERMS):
        term = term * ((a + n) * z / ((b + n) * (n + 1.0)))
        # Kahan update keeps the alternating cancellation from accumulating.
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if not np.all(np.isfinite(total)):
            raise EvaluationOverflow(
                "1F1 power series exceeded float range "
                f"(a~{float(np.max(np.abs(a))):.3g}, z~{float(np.max(np.abs(z))):.3g})"
            )
        if np.all(np.abs(term) <= 1e-17 * np.abs(total) + 1e-300) and n >= np.max(z):
            streak += 1
            if streak >= 2:
                break
        else:
            streak = 0
    return total


def _asymptotic_1f1(a, b, z):
    """Large positive z expansion: Gamma(b) e^z z^(a-b)/Gamma(a) * correction sum.

    Only called where the leading correction terms decay (see kummer_1f1).
    The subdominant reflection term is ~e^{-z} relative and is dropped; at the
    z >= 30 switch point that is below the advertised accuracy.
    """
    a, b, z = np.broadcast_arrays(
        np.asarray(a, dtype=float), np.asarray(b, dtype=float), np.asarray(z, dtype=float)
    )
    term = np.ones(a.shape)
    total = np.ones(a.shape)
    for n in range(40):
        nxt = term * (b - a + n) * (1.0 - a + n) / ((n + 1.0) * z)
        grow = np.abs(nxt) >= np.abs(term)
        if grow.any():
            nxt = np.where(grow, 0.0, nxt)
        total = total + nxt
        term = nxt
        if np.all(np.abs(term) <= 1e-16 * np.abs(total)):
            break
    return _gamma(b) * rgamma(a) * np.exp(z + (a - b) * np.log(z)) * total


def kummer_1f1(a, b, z):
    """Confluent hypergeometric function 1F1(a; b; z) for real arguments.

    Strategy: the defining power series (with compensated summation) is the
    workhorse; for z >= 30 the large-z expansion is used instead, but only when
    its first corrections actually decay, i.e. |1-a|(|b-a|+1) <= z/4 -- with a
    strongly negative (high eigenvalue order) the expansion is useless and the
    series, whose cancellation stays below the result scale there, is kept.
    Negative z is routed through 1F1(a;b;z) = e^z 1F1(b-a;b;-z) so the series
    never alternates because of the argument.

    Inputs broadcast; returns a scalar when all inputs are scalars.

    Raises
    ------
    ValueError
        If b is a non-positive integer (the function has poles there).
    EvaluationOverflow
        If the value leaves the float64 range.
    """
    scalar = np.isscalar(a) and np.isscalar(b) and np.isscalar(z)
    a, b, z = np.broadcast_arrays(
        np.asarray(a, dtype=float), np.asarray(b, dtype=float), np.asarray(z, dtype=float)
    )
    if any(_near_nonpositive_int(v) for v in np.unique(b)):
        raise ValueError("1F1 undefined for non-positive integer b")

    out = np.empty(a.shape)
    neg = z < 0.0
    if neg.any():
        out[neg] = np.exp(z[neg]) * kummer_1f1(b[neg] - a[neg], b[neg], -z[neg])
    pos = ~neg
    if pos.any():
        ap, bp, zp = a[pos], b[pos], z[pos]
        # Integer non-positive a terminates the series exactly; never expand those.
        a_int = np.abs(ap - np.round(ap)) <= 1e-12
        use_asym = (
            (zp >= _SERIES_Z_CUTOFF)
            & (np.abs(1.0 - ap) * (np.abs(bp - ap) + 1.0) <= zp / 4.0)
            & ~(a_int & (ap <= 0.0))
        )
        vals = np.empty(ap.shape)
        if use_asym.any():
            vals[use_asym] = _asymptotic_1f1(ap[use_asym], bp[use_asym], zp[use_asym])
        if (~use_asym).any():
            vals[~use_asym] = _series_1f1(ap[~use_asym], bp[~use_asym], zp[~use_asym])
        out[pos] = vals
    if not np.all(np.isfinite(out)):
        raise EvaluationOverflow("1F1 value exceeded float range")
    return float(out) if scalar else out


def hermite_fn(alpha, x):
    """Real-order Hermite function, the 2^alpha sqrt(pi) two-term 1F1 combination.

    Reduces to the classical Hermite polynomial H_n(x) at non-negative integer
    order.  Broadcasts over alpha and x.
    """
    scalar = np.isscalar(alpha) and np.isscalar(x)
    alpha = np.asarray(alpha, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(alpha > 900.0):
        raise EvaluationOverflow("hermite_fn order too large for float64 (2^alpha)")
    z = x * x
    f1 = kummer_1f1(-alpha / 2.0, 0.5, z)
    f2 = kummer_1f1((1.0 - alpha) / 2.0, 1.5, z)
    out = (2.0**alpha) * _SQRT_PI * (
        rgamma((1.0 - alpha) / 2.0) * f1 - 2.0 * x * rgamma(-alpha / 2.0) * f2
    )
    if not np.all(np.isfinite(out)):
        raise EvaluationOverflow("hermite_fn value exceeded float range")
    return float(out) if scalar else out


def hermite_fn_dalpha(alpha, x, h=None):
    """Order-derivative of the Hermite function by central differences.

    The step defaults to 1e-5 * max(1, |alpha|), balancing finite-difference
    truncation against float cancellation.
    """
    if h is None:
        h = 1e-5 * max(1.0, abs(float(np.max(np.abs(alpha)))))
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    return (hermite_fn(alpha + h, x) - hermite_fn(alpha - h, x)) / (2.0 * h)


@dataclass(frozen=True)
class EigenSystem:
    """Ordered eigenvalues and series coefficients for one barrier setup.

    a_tilde is None when there is no reflecting lower barrier.  alphas are
    strictly increasing and positive; coeffs has the same length.
    """

    b_tilde: float
    a_tilde: float | None
    alphas: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        if len(self.alphas) != len(self.coeffs) or len(self.alphas) < 1:
            raise ValueError("eigenvalues and coefficients must be equal-length, non-empty")
        if np.any(np.diff(self.alphas) <= 0) or self.alphas[0] <= 0:
            raise ValueError("eigenvalues must be strictly increasing and positive")

    @property
    def n_terms(self):
        return len(self.alphas)


def _bisect_root(f, lo, hi, flo, xtol=1e-6):
    """Bisection to absolute tolerance xtol, then a short secant polish.

    The polish costs a handful of evaluations and drives the residual down to
    rounding level, which matters because the expansion coefficients divide by
    the order-derivative at the located root.
    """
    fhi = f(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= xtol:
            break
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    a, fa, b, fb = lo, flo, hi, fhi
    for _ in range(8):
        if fb == fa:
            break
        c = b - fb * (b - a) / (fb - fa)
        if not (lo <= c <= hi):
            break
        fc = f(c)
        a, fa, b, fb = b, fb, c, fc
        if fc == 0.0 or abs(b - a) < 1e-14 * max(1.0, abs(b)):
            break
    return b


def _scan_roots(f, count, alpha_max, scan_step, overflow_cap=None):
    """Locate the first `count` zeros of f on (0, alpha_max] by sign-change scan.

    scan_step is chosen well below the known minimal eigenvalue spacing, so no
    root is skipped.  overflow_cap caps the scan for large barriers where the
    evaluation destabilizes; needing roots beyond it is a typed overflow.
    """
    scan_top = alpha_max if overflow_cap is None else min(alpha_max, overflow_cap)
    grid = np.arange(0.0, scan_top + scan_step, scan_step)
    grid = grid[grid <= scan_top + 1e-12]
    vals = f(grid)
    roots = []
    i = 0
    while i < len(grid) - 1 and len(roots) < count:
        v0, v1 = vals[i], vals[i + 1]
        if v0 == 0.0:
            if grid[i] > 0.0:
                roots.append(grid[i])
            i += 1
            continue
        if v0 * v1 < 0.0:
            roots.append(_bisect_root(lambda t: float(f(np.array([t]))[0]),
                                      grid[i], grid[i + 1], v0))
        i += 1
    if len(roots) < count:
        if overflow_cap is not None and alpha_max > overflow_cap:
            raise EvaluationOverflow(
                f"eigenfunction evaluation unstable beyond alpha={overflow_cap} "
                "for barriers above 5"
            )
        raise NotEnoughRoots(len(roots), count, alpha_max)
    return roots[:count]


def find_eigenvalues(b_tilde, count, alpha_max, scan_step=0.05):
    """First `count` zeros of alpha -> H_alpha(-b_tilde), in increasing order.

    Zeros are bracketed by a fixed-step sign scan (eigenvalue gaps stay near 2,
    far above the 0.05 step) and bisected to 1e-6 absolute.  For b_tilde > 5
    the evaluation is known to destabilize past alpha ~ 70 and a typed overflow
    is raised instead of returning noise-driven roots.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    b_tilde = float(b_tilde)
    cap = 70.0 if b_tilde > 5.0 else None
    f = lambda alphas: hermite_fn(alphas, -b_tilde)
    return _scan_roots(f, count, float(alpha_max), scan_step, overflow_cap=cap)


def _default_alpha_max(b_tilde, K):
    # Upper end from the large-k eigenvalue growth law, plus slack.
    b = float(b_tilde)
    root = math.sqrt(4 * K + 3 + 4 * b * b / math.pi**2)
    return 2 * K + 3 + 4 * b * b / math.pi**2 + (2 * max(b, 0.0) / math.pi) * root + 4.0


@lru_cache(maxsize=512)
def build_eigensystem(b_tilde, K):
    """Eigenvalue/coefficient table for the single-barrier expansion.

    Coefficients are c_k = -1 / (alpha_k * d/dalpha H_alpha(-b_tilde)), the
    normalization that makes the series equal 1 at time zero.  Results are
    cached per (b_tilde, K); the returned arrays are read-only.
    """
    b_tilde = float(b_tilde)
    K = int(K)
    if K < 1:
        raise ValueError("K must be >= 1")
    alpha_max = _default_alpha_max(b_tilde, K)
    for _ in range(4):
        try:
            alphas = find_eigenvalues(b_tilde, K, alpha_max)
            break
        except NotEnoughRoots:
            alpha_max *= 2.0
    else:
        alphas = find_eigenvalues(b_tilde, K, alpha_max)
    alphas = np.asarray(alphas)
    coeffs = np.array(
        [-1.0 / (ak * hermite_fn_dalpha(ak, -b_tilde)) for ak in alphas]
    )
    alphas.setflags(write=False)
    coeffs.setflags(write=False)
    return EigenSystem(b_tilde=b_tilde, a_tilde=None, alphas=alphas, coeffs=coeffs)


def _reflected_den(alpha, a_tilde):
    """Denominator D of the lower-barrier mixing ratio (entire in alpha)."""
    z = a_tilde * a_tilde
    return kummer_1f1((1.0 - alpha) / 2.0, 1.5, z) + (2.0 / 3.0) * (
        1.0 - alpha
    ) * z * kummer_1f1((3.0 - alpha) / 2.0, 2.5, z)


def _reflected_num(alpha, a_tilde):
    """Numerator of the mixing ratio (entire in alpha)."""
    return 2.0 * alpha * a_tilde * kummer_1f1((2.0 - alpha) / 2.0, 1.5, a_tilde * a_tilde)


def reflected_mixing(alpha, a_tilde):
    """Mixing ratio y(alpha, a_tilde) between the even and odd 1F1 solutions.

    Fixed by the zero-slope condition at the reflecting level a_tilde.  As
    a_tilde -> -inf it tends to 2 Gamma((1-alpha)/2) / Gamma(-alpha/2), which
    recovers the plain Hermite function.
    """
    return _reflected_num(alpha, a_tilde) / _reflected_den(alpha, a_tilde)


def reflected_eigenfunction(alpha, x, a_tilde):
    """Spatial eigenfunction for the reflected problem, in a pole-free scaling.

    This is D(alpha) times the textbook eigenfunction, with D the mixing-ratio
    denominator; the factor cancels identically between the coefficients and
    the series terms, and keeps evaluation finite where the mixing ratio has
    poles.  Do not mix values from this scaling with unscaled coefficients.
    """
    x = np.asarray(x, dtype=float)
    z = x * x
    den = _reflected_den(alpha, a_tilde)
    num = _reflected_num(alpha, a_tilde)
    comb = den * kummer_1f1(-alpha / 2.0, 0.5, z) + num * x * kummer_1f1(
        (1.0 - alpha) / 2.0, 1.5, z
    )
    return (2.0**alpha) * _SQRT_PI * rgamma((1.0 - alpha) / 2.0) * comb


def _reflected_root_fn(alphas, b_tilde, a_tilde):
    """Entire function whose positive zeros are the reflected eigenvalues.

    The raw root equation divides by D(alpha); multiplying through by D gives
    an entire function with the same zeros and no spurious pole brackets, so a
    plain sign scan is safe.  The 2^alpha sqrt(pi) rgamma((1-alpha)/2) prefactor
    is dropped: its zeros (odd integers) would be spurious roots where the whole
    eigenfunction degenerates to zero.
    """
    alphas = np.asarray(alphas, dtype=float)
    zb = b_tilde * b_tilde
    return _reflected_den(alphas, a_tilde) * kummer_1f1(-alphas / 2.0, 0.5, zb) + (
        _reflected_num(alphas, a_tilde) * b_tilde * kummer_1f1((1.0 - alphas) / 2.0, 1.5, zb)
    )


@lru_cache(maxsize=256)
def build_reflected_eigensystem(b_tilde, a_tilde, K):
    """Eigenvalue/coefficient table with a reflecting lower barrier at a_tilde.

    Coefficients use the order-derivative of the (scaled) eigenfunction at the
    upper barrier, mirroring the single-barrier normalization.
    """
    b_tilde = float(b_tilde)
    a_tilde = float(a_tilde)
    K = int(K)
    if not a_tilde < b_tilde:
        raise ValueError("reflecting level must lie below the barrier")
    if K < 1:
        raise ValueError("K must be >= 1")
    cap = 70.0 if b_tilde > 5.0 else None
    f = lambda alphas: _reflected_root_fn(alphas, b_tilde, a_tilde)
    alpha_max = _default_alpha_max(b_tilde, K)
    for _ in range(6):
        try:
            alphas = _scan_roots(f, K, alpha_max, 0.05, overflow_cap=cap)
            break
        except NotEnoughRoots:
            alpha_max *= 2.0
    else:
        alphas = _scan_roots(f, K, alpha_max, 0.05, overflow_cap=cap)
    alphas = np.asarray(alphas)

    def dH(ak):
        h = 1e-5 * max(1.0, ak)
        up = reflected_eigenfunction(ak + h, b_tilde, a_tilde)
        dn = reflected_eigenfunction(ak - h, b_tilde, a_tilde)
        return (up - dn) / (2.0 * h)

    coeffs = np.array([-1.0 / (ak * dH(ak)) for ak in alphas])
    alphas.setflags(write=False)
    coeffs.setflags(write=False)
    return EigenSystem(b_tilde=b_tilde, a_tilde=a_tilde, alphas=alphas, coeffs=coeffs)


def eigenfunction_matrix(es, x):
    """Stack of eigenfunction values, shape (n_terms, len(x)).

    Row k evaluates the k-th spatial eigenfunction of `es` at the states x:
    the Hermite function at -x for the single-barrier case, the scaled
    reflected eigenfunction otherwise.  The single-barrier stack is built in
    one broadcast call so the 1F1 series iterates over the whole block at
    once instead of once per order.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if es.a_tilde is None:
        return np.reshape(hermite_fn(es.alphas[:, None], -x[None, :]),
                          (es.n_terms, x.size))
    rows = np.empty((es.n_terms, x.size))
    for k, ak in enumerate(es.alphas):
        rows[k] = reflected_eigenfunction(ak, x, es.a_tilde)
    return rows
