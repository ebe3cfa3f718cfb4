"""Reduction of inhomogeneous OU problems to the standardized process.

A scale/shift/time-change triple (alpha, beta, gamma) maps a process with
time-varying drift level, reversion speed, and volatility onto the
standardized one, so the single-barrier series from :mod:`oux.fpt` and the
interval-maxima pipeline from :mod:`oux.crossing` apply unchanged.  This
module solves the defining ODE system for that triple, rebases barrier
functions, houses the piecewise-constant approximation helper, and implements
the curvature rule for choosing between the transformation route and direct
piecewise approximation of the parameters.
"""

from dataclasses import dataclass, field
from enum import Enum
import math

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import NonMonotoneGamma, ResidualTooLarge

__all__ = [
    "TimeFunctions",
    "Transform",
    "Method",
    "SelectorReport",
    "default_alpha0",
    "solve_transform",
    "transformed_barrier",
    "piecewise_approx",
    "PiecewiseConstant",
    "method_selector",
    "inhomo_fpt_survival",
]

_KINDS = ("smooth", "piecewise")


@dataclass(frozen=True)
class TimeFunctions:
    """Drift level, reversion speed, and volatility as functions of time.

    Each function is tagged "smooth" or "piecewise"; the reversion speed and
    volatility must stay positive on the working horizon, and the usual
    linear-growth conditions are assumed rather than checked.
    """

    mu: callable
    lam: callable
    sigma: callable
    mu_kind: str = "smooth"
    lam_kind: str = "smooth"
    sigma_kind: str = "smooth"

    def __post_init__(self):
        for kind in (self.mu_kind, self.lam_kind, self.sigma_kind):
            if kind not in _KINDS:
                raise ValueError(f"kind must be one of {_KINDS}, got {kind!r}")

    @classmethod
    def constant(cls, mu, lam, sigma):
        return cls(lambda t: mu, lambda t: lam, lambda t: sigma)


@dataclass(frozen=True)
class Transform:
    """Tabulated scale alpha(t), shift beta(t), and clock gamma(t).

    gamma is strictly increasing with gamma(0) = 0; gamma_inv is its
    monotone-cubic inverse on the tabulated range.  max_residual records the
    worst defining-equation residual found at interior grid nodes.
    """

    ts: np.ndarray
    alpha_vals: np.ndarray
    beta_vals: np.ndarray
    gamma_vals: np.ndarray
    alpha0: float
    beta0: float
    max_residual: float
    _gamma_inv: PchipInterpolator = field(repr=False, default=None)

    def __post_init__(self):
        if self.gamma_vals[0] != 0.0:
            raise ValueError("gamma must start at 0")
        if np.any(np.diff(self.gamma_vals) <= 0.0):
            raise NonMonotoneGamma("tabulated gamma is not strictly increasing")
        for arr in (self.ts, self.alpha_vals, self.beta_vals, self.gamma_vals):
            arr.setflags(write=False)
        inv = PchipInterpolator(self.gamma_vals, self.ts, extrapolate=False)
        object.__setattr__(self, "_gamma_inv", inv)

    def alpha(self, t):
        return np.interp(t, self.ts, self.alpha_vals)

    def beta(self, t):
        return np.interp(t, self.ts, self.beta_vals)

    def gamma(self, t):
        return np.interp(t, self.ts, self.gamma_vals)

    def gamma_inv(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < self.gamma_vals[0] - 1e-12) or np.any(u > self.gamma_vals[-1] + 1e-12):
            raise ValueError("gamma_inv argument outside the tabulated range")
        out = self._gamma_inv(np.clip(u, self.gamma_vals[0], self.gamma_vals[-1]))
        return float(out) if out.ndim == 0 else out

    @property
    def horizon(self):
        return float(self.ts[-1])


def default_alpha0(funcs):
    """Initial scale that makes constant-parameter inputs a fixed point."""
    return math.sqrt(funcs.lam(0.0)) / funcs.sigma(0.0)


def _dsigma(sigma, t):
    h = 1e-6 * max(1.0, abs(t))
    return (sigma(t + h) - sigma(t - h)) / (2.0 * h)


def solve_transform(funcs, alpha0=None, beta0=0.0, horizon=5.0, step=None):
    """Integrate the defining ODE system for (alpha, beta, gamma).

    Classical fixed-step fourth-order Runge-Kutta on the closed first-order
    form: the clock rate gamma' follows an exponential of the accumulated
    reversion/volatility drag, the scale obeys alpha = 1/(sigma(gamma)
    sqrt(gamma')), and the shift integrates beta' = alpha mu(gamma) gamma'
    - beta.  Residuals of all three defining equations are evaluated at
    interior nodes with fourth-order central stencils.

    Raises ResidualTooLarge when any residual exceeds 1e-6 (a smaller step
    usually fixes it) and NonMonotoneGamma when the clock stalls.
    """
    if alpha0 is None:
        alpha0 = default_alpha0(funcs)
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if step is None:
        step = horizon / 4096.0
    if step <= 0:
        raise ValueError("step must be positive")
    n = max(8, int(round(horizon / step)))
    h = horizon / n
    ts = np.linspace(0.0, horizon, n + 1)

    sig0 = funcs.sigma(0.0)
    if sig0 <= 0:
        raise ValueError("sigma(0) must be positive")
    gp0 = 1.0 / (sig0 * alpha0) ** 2

    mu, lam, sigma = funcs.mu, funcs.lam, funcs.sigma

    def rhs(t, y):
        g, w, beta = y
        lam_g = lam(g)
        sig_g = sigma(g)
        if lam_g <= 0.0 or sig_g <= 0.0:
            raise ValueError(f"nonpositive reversion speed or volatility at time {g}")
        gp = gp0 * math.exp(2.0 * t - 2.0 * w)
        alpha = 1.0 / (sig_g * math.sqrt(gp))
        return np.array([
            gp,
            (lam_g + _dsigma(sigma, g) / sig_g) * gp,
            alpha * mu(g) * gp - beta,
        ])

    ys = np.empty((n + 1, 3))
    ys[0] = (0.0, 0.0, beta0)
    y = ys[0].copy()
    for i in range(n):
        t = ts[i]
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        ys[i + 1] = y

    gamma_vals = ys[:, 0]
    w_vals = ys[:, 1]
    beta_vals = ys[:, 2]
    with np.errstate(over="raise"):
        gp_vals = gp0 * np.exp(2.0 * ts - 2.0 * w_vals)
    if np.any(gp_vals <= 0.0) or not np.all(np.isfinite(gp_vals)):
        raise NonMonotoneGamma("clock rate underflowed to zero")
    sig_vals = np.array([sigma(g) for g in gamma_vals])
    alpha_vals = 1.0 / (sig_vals * np.sqrt(gp_vals))

    max_residual = _check_residuals(funcs, ts, alpha_vals, beta_vals, gamma_vals, h)
    return Transform(ts=ts, alpha_vals=alpha_vals, beta_vals=beta_vals,
                     gamma_vals=gamma_vals, alpha0=float(alpha0),
                     beta0=float(beta0), max_residual=max_residual)


def _stencil_d1(vals, h):
    """Fourth-order first derivative at interior nodes (index 2..n-3)."""
    return (-vals[4:] + 8.0 * vals[3:-1] - 8.0 * vals[1:-3] + vals[:-4]) / (12.0 * h)


def _check_residuals(funcs, ts, alpha_vals, beta_vals, gamma_vals, h):
    gp = _stencil_d1(gamma_vals, h)
    ap = _stencil_d1(alpha_vals, h)
    bp = _stencil_d1(beta_vals, h)
    a = alpha_vals[2:-2]
    b = beta_vals[2:-2]
    g = gamma_vals[2:-2]
    if np.any(gp <= 0.0):
        raise NonMonotoneGamma("clock derivative nonpositive at interior nodes")
    sig_g = np.array([funcs.sigma(x) for x in g])
    lam_g = np.array([funcs.lam(x) for x in g])
    mu_g = np.array([funcs.mu(x) for x in g])
    r1 = sig_g * a * np.sqrt(gp) - 1.0
    r2 = lam_g * gp - ap / a - 1.0
    r3 = bp + b - a * mu_g * gp
    worst = max(np.max(np.abs(r1)), np.max(np.abs(r2)), np.max(np.abs(r3)))
    if worst > 1e-6:
        raise ResidualTooLarge(
            f"defining-equation residual {worst:.3e} exceeds 1e-6; "
            "use a smaller integration step"
        )
    return float(worst)


def transformed_barrier(tr, b):
    """Barrier seen by the standardized process: g(t) = alpha(t) b(gamma(t)) - beta(t).

    Accepts a constant or a callable barrier; returns a callable that
    interpolates linearly between the transform's grid nodes.
    """
    if not callable(b):
        level = float(b)
        b = lambda t: level
    b_gamma = np.array([b(g) for g in tr.gamma_vals])
    g_vals = tr.alpha_vals * b_gamma - tr.beta_vals

    def g(t):
        out = np.interp(t, tr.ts, g_vals)
        return float(out) if np.ndim(t) == 0 else out

    g.grid = tr.ts
    g.values = g_vals
    return g


@dataclass(frozen=True)
class PiecewiseConstant:
    """Left-closed right-open step function on [breaks[0], breaks[-1]]."""

    breaks: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.breaks.setflags(write=False)
        self.values.setflags(write=False)

    def __call__(self, t):
        idx = np.searchsorted(self.breaks, t, side="right") - 1
        idx = np.clip(idx, 0, len(self.values) - 1)
        out = self.values[idx]
        return float(out) if np.ndim(t) == 0 else out


def piecewise_approx(f, t0, t1, n):
    """Approximate f on [t0, t1] by n equal-width midpoint-sampled steps."""
    if n < 1:
        raise ValueError("need at least one segment")
    if not t1 > t0:
        raise ValueError("need t1 > t0")
    breaks = np.linspace(t0, t1, n + 1)
    mids = 0.5 * (breaks[:-1] + breaks[1:])
    values = np.array([float(f(m)) for m in mids])
    return PiecewiseConstant(breaks=breaks, values=values)


class Method(Enum):
    TRANSFORMATION = "Transformation"
    DIRECT_APPROX = "DirectApprox"


@dataclass(frozen=True)
class SelectorReport:
    """Outcome of the curvature rule with its diagnostics."""

    method: Method
    ratio: float
    threshold: float
    hypothesis_failed: bool = False
    degenerate: bool = False


def _mu_derivs(mu, t):
    h = 1e-4 * max(1.0, abs(t))
    f_m, f_0, f_p = mu(t - h), mu(t), mu(t + h)
    d1 = (f_p - f_m) / (2.0 * h)
    d2 = (f_p - 2.0 * f_0 + f_m) / (h * h)
    return d1, d2


def method_selector(funcs, b, t1, t2, transform_capable=True, beta0=1.0,
                    n_samples=101):
    """Choose between the transformation route and direct approximation.

    Compares the curvature of the barrier seen after transformation against
    the curvature of the drift level over the window [t1, t2] (reversion
    speed and volatility constant there, drift level twice differentiable).
    The flatter side needs fewer piecewise-constant segments for the same
    accuracy.  Also verifies that the transformed barrier's first two
    derivatives agree in sign with the drift level's; disagreement returns
    DirectApprox with hypothesis_failed set.
    """
    if not transform_capable or funcs.mu_kind != "smooth":
        return SelectorReport(Method.DIRECT_APPROX, ratio=math.inf,
                              threshold=0.0)
    if not t2 > t1:
        raise ValueError("need t2 > t1")
    lam = funcs.lam(0.5 * (t1 + t2))
    sigma = funcs.sigma(0.5 * (t1 + t2))
    scale = sigma * math.sqrt(lam)

    # shift beta(s) on the standardized clock, from its linear response form
    s_hi = lam * t2
    u = np.linspace(0.0, s_hi, 16385)
    integrand = np.exp(u - s_hi) * np.array([funcs.mu(x / lam) for x in u]) / scale
    csum = np.concatenate(([0.0], np.cumsum(
        0.5 * (integrand[1:] + integrand[:-1]) * np.diff(u))))
    # csum holds e^{-s_hi} * integral_0^s e^u mu(u/lam)/scale du at the u nodes

    def beta_at(s):
        base = np.interp(s, u, csum)
        return beta0 * math.exp(-s) + base * math.exp(s_hi - s)

    ts = np.linspace(t1, t2, n_samples)
    mu1 = np.empty(n_samples)
    mu2 = np.empty(n_samples)
    g1 = np.empty(n_samples)
    g2 = np.empty(n_samples)
    for i, t in enumerate(ts):
        mu1[i], mu2[i] = _mu_derivs(funcs.mu, t)
        beta_s = beta_at(lam * t)
        g1[i] = beta_s - funcs.mu(t) / scale
        g2[i] = (funcs.mu(t) - mu1[i] / lam) / scale - beta_s

    inf_mu2 = float(np.min(np.abs(mu2)))
    mu_scale = max(1.0, float(np.max(np.abs(mu2))))
    if inf_mu2 < 1e-12 * mu_scale:
        return SelectorReport(Method.DIRECT_APPROX, ratio=math.inf,
                              threshold=scale, degenerate=True)

    inf_bracket = float(np.min(np.abs(scale * g2)))
    ratio = inf_bracket / inf_mu2

    tol1 = 1e-9 * max(np.max(np.abs(g1)), np.max(np.abs(mu1)), 1.0)
    tol2 = 1e-9 * max(np.max(np.abs(g2)), np.max(np.abs(mu2)), 1.0)
    ok1 = (np.abs(g1) <= tol1) | (np.abs(mu1) <= tol1) | (np.sign(g1) == np.sign(mu1))
    ok2 = (np.abs(g2) <= tol2) | (np.abs(mu2) <= tol2) | (np.sign(g2) == np.sign(mu2))
    if not (ok1.all() and ok2.all()):
        return SelectorReport(Method.DIRECT_APPROX, ratio=ratio, threshold=scale,
                              hypothesis_failed=True)

    method = Method.TRANSFORMATION if ratio < scale else Method.DIRECT_APPROX
    return SelectorReport(method, ratio=ratio, threshold=scale)


def inhomo_fpt_survival(funcs, b, y0, t, n_segments=16, grid=None, K=None,
                        alpha0=None, beta0=0.0, J=64):
    """Survival of an inhomogeneous OU process against a barrier function.

    Transforms the problem onto the standardized clock, replaces the
    transformed barrier by n_segments midpoint steps, and evaluates the
    all-below joint probability of the per-segment maxima.  The error field
    adds the quadrature refinement estimate and a series-truncation
    allowance.
    """
    from . import crossing

    if t <= 0:
        raise ValueError("t must be positive")
    if alpha0 is None:
        alpha0 = default_alpha0(funcs)

    # pick a horizon whose clock covers t, doubling if the first guess is short
    lam_samples = [funcs.lam(x) for x in np.linspace(0.0, t, 17)]
    horizon = 1.25 * t * float(np.mean(lam_samples)) + 0.25
    tr = None
    for _ in range(7):
        cand = solve_transform(funcs, alpha0=alpha0, beta0=beta0, horizon=horizon)
        if cand.gamma_vals[-1] >= t:
            tr = cand
            break
        horizon *= 2.0
    if tr is None:
        raise ValueError("transform clock never reached the requested time")

    s_star = float(tr.gamma_inv(t))
    x0 = tr.alpha0 * y0 - tr.beta0
    g = transformed_barrier(tr, b)
    pw = piecewise_approx(g, 0.0, s_star, n_segments)

    problem = crossing.JointProblem(
        z0=x0, t_grid=pw.breaks, barriers=pw.values,
        direction=crossing.Direction.ALL_BELOW)
    if grid is None:
        grid = crossing.Grid()
    res = crossing.joint_distribution_quadrature(problem, grid, K=K, J=J)

    trunc = 0.0
    dts = np.diff(pw.breaks)
    for bi, dt_i in zip(pw.values, dts):
        trunc += crossing.interval_truncation_allowance(bi, dt_i, K)
    return crossing.ProbResult(prob=res.prob, err=res.err + trunc,
                               kind="quadrature")
