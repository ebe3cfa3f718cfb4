"""Joint barrier-crossing probabilities for interval maxima of the standardized OU process.

Given a time grid t_0 = 0 < t_1 < ... < t_N, per-interval running maxima
M_i = sup { Z_t : t in (t_{i-1}, t_i] } of dZ = -Z dt + dW and barrier levels
b_1 .. b_N, this module evaluates

    P(M_1 >= b_1, ..., M_N >= b_N | Z_0 = z0)        (all-above)
    P(M_1 <  b_1, ..., M_N <  b_N | Z_0 = z0)        (all-below)

by three routes: nested quadrature over a state grid chaining one-interval
kernel matrices, a pairwise product approximation whose cost stays linear in
the grid size, and importance sampling of the same nested integral.  The
one-interval kernels come from the eigenfunction series of the single-barrier
crossing problem (see eigen, fpt), evaluated through the staying-below form
whose terms decay like e^{-alpha_k dt}; the crossing kernel is its complement
under the transition density.  Helpers for non-matching time grids and
sub-divided intervals live at the bottom.
"""

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.special import roots_legendre

from . import eigen, fpt
from .errors import DegenerateWeights, GridTooNarrow
from .fpt import ProbResult

_SQRT_PI = math.sqrt(math.pi)

# Beyond this gap between a barrier and every reachable state the crossing
# mass is below 1e-15 and the eigenfunction series is bypassed entirely.
_UNREACHABLE_GAP = 6.0


class Direction(Enum):
    """Whether every interval maximum must reach its barrier or stay below."""

    ALL_ABOVE = "all-above"
    ALL_BELOW = "all-below"


@dataclass(frozen=True)
class Grid:
    """Uniform state grid used to discretize the intermediate-state integrals."""

    z_min: float = -5.0
    z_max: float = 5.0
    L: int = 2001

    def __post_init__(self):
        if not self.z_min < self.z_max:
            raise ValueError("need z_min < z_max")
        if self.L < 2:
            raise ValueError("need at least two grid nodes")

    @property
    def delta_z(self):
        return (self.z_max - self.z_min) / (self.L - 1)

    def nodes(self):
        return np.linspace(self.z_min, self.z_max, self.L)


@dataclass(frozen=True)
class JointProblem:
    """Interval grid, per-interval barriers, start state and event direction.

    t_grid holds t_0 = 0 and the N right endpoints; barriers holds b_1..b_N.
    Intervals are left-open right-closed, so a start state at or above its
    first barrier already counts as a crossing.
    """

    z0: float
    t_grid: np.ndarray
    barriers: np.ndarray
    direction: Direction

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        b = np.asarray(self.barriers, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("t_grid needs the origin and at least one right endpoint")
        if t[0] != 0.0:
            raise ValueError("time grid must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if b.ndim != 1 or b.size != t.size - 1:
            raise ValueError("need exactly one barrier per interval")
        if not isinstance(self.direction, Direction):
            raise ValueError("direction must be a Direction member")
        t.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "barriers", b)

    @property
    def n_intervals(self):
        return len(self.barriers)

    @property
    def dts(self):
        return np.diff(self.t_grid)


def transition_density(z, z_next, dt):
    """Gaussian transition density of dZ = -Z dt + dW over a step dt.

    The mean decays as z e^{-dt} and the variance is (1 - e^{-2 dt}) / 2,
    approaching the stationary N(0, 1/2) law.  Broadcasts over arrays.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    var = -0.5 * math.expm1(-2.0 * dt)
    dev = np.asarray(z_next) - np.asarray(z) * math.exp(-dt)
    out = np.exp(-dev * dev / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)
    return float(out) if np.ndim(out) == 0 else out


def _gauss_pdf(x, mean, var):
    return np.exp(-((x - mean) ** 2) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)


def _clamp_prob(value):
    v = float(value)
    clipped = min(1.0, max(0.0, v))
    return clipped, clipped != v


@lru_cache(maxsize=64)
def _panel_rule(npp):
    return roots_legendre(npp)


def _graded_panels(lo, hi, n_half, npp):
    """Composite Gauss-Legendre nodes on (lo, hi) with panels geometrically
    refined (ratio 2) toward both endpoints from the midpoint outward."""
    mid = 0.5 * (lo + hi)
    edges = np.concatenate((
        [lo],
        [lo + (mid - lo) * 2.0 ** (-k) for k in range(n_half - 1, 0, -1)],
        [mid],
        [hi - (hi - mid) * 2.0 ** (-k) for k in range(1, n_half)],
        [hi],
    ))
    x, w = _panel_rule(npp)
    half = 0.5 * (edges[1:] - edges[:-1])
    centers = 0.5 * (edges[1:] + edges[:-1])
    nodes = (centers[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


@lru_cache(maxsize=256)
def _u_rule(dt, J):
    """Inner-integral rule after the substitution u = sqrt(1 - x^2).

    The time-like variable runs from the full interval length down to zero as
    u rises to U = sqrt(1 - e^{-2 dt}); grading toward u = 0 resolves the
    near-arrival layer, grading toward U the fast eigenvalue decay.
    """
    big_u = math.sqrt(-math.expm1(-2.0 * dt))
    u, w = _graded_panels(0.0, big_u, 8, max(4, J // 16))
    log_x = 0.5 * np.log1p(-u * u)
    s = np.maximum(dt + log_x, 0.0)
    x = np.exp(log_x)
    for arr in (u, w, log_x, s, x):
        arr.setflags(write=False)
    return u, w, log_x, s, x


def _series_rows(es, z):
    """Departure-state factors c_k alpha_k H_k(z_j), shape (len(z), n_terms)."""
    rows = eigen.eigenfunction_matrix(es, np.asarray(z, dtype=float))
    return (rows * (es.coeffs * es.alphas)[:, None]).T


def _series_cols(es, z, b, dt, J):
    """Arrival-state integral factors, shape (n_terms, len(z)).

    Entry (k, j) is the one-interval time integral for eigenvalue alpha_k and
    arrival state z_j with the e^{-alpha_k dt} decay folded in, so large
    eigenvalues never overflow.  Only the diagnostic time-integral route uses
    this; see _kappa_time_integral for why it cannot drive the pipelines.
    """
    u, w, log_x, s, x = _u_rule(float(dt), int(J))
    envelope = np.exp(-np.outer(es.alphas, s) - 2.0 * log_x) * (w / _SQRT_PI)
    gauss = np.exp(-(((np.asarray(z)[None, :] - b * x[:, None]) / u[:, None]) ** 2))
    return envelope @ gauss


@lru_cache(maxsize=512)
def _edge_factors(b_tilde, n_terms):
    """Boundary factors H_{alpha_k - 1}(-b) normalizing the staying-below kernel.

    Each equals e^{b^2} int_{-inf}^{b} H_{alpha_k}(-y) e^{-y^2} dy and is
    strictly nonzero at an eigenvalue (its product with the matching series
    coefficient is a squared norm), so dividing by it is safe.
    """
    es = eigen.build_eigensystem(float(b_tilde), int(n_terms))
    vals = [float(eigen.hermite_fn(float(ak) - 1.0, -float(b_tilde)))
            for ak in es.alphas]
    return np.asarray(vals)


def _stay_rows(es, z, stack=None):
    """Departure factors c_k H_k(-z_l) of the staying-below kernel, (len(z), K).

    stack, when given, must hold the eigenfunction values already evaluated
    at exactly these states (callers that sweep one fixed node set pass a
    hoisted copy instead of re-evaluating the Hermite series).
    """
    if stack is None:
        stack = eigen.eigenfunction_matrix(es, np.asarray(z, dtype=float))
    return (stack * es.coeffs[:, None]).T


def _stay_cols(es, z, dt, stack=None):
    """Arrival factors of the staying-below kernel, shape (n_terms, len(z)).

    Entry (k, j) is e^{-alpha_k dt} H_k(-z_j) e^{b^2-z_j^2} / H_{alpha_k-1}(-b).
    Contracted against _stay_rows this gives the transition density restricted
    to paths whose running maximum stays below b; its state integral up to b
    reproduces the survival series term by term, and composing two spans over
    dt1 and dt2 reproduces the span over dt1 + dt2 exactly.
    """
    if es.a_tilde is not None:
        raise ValueError("interval kernels need a single-barrier eigensystem")
    z = np.asarray(z, dtype=float)
    b = es.b_tilde
    cols = eigen.eigenfunction_matrix(es, z) if stack is None else stack
    decay = np.exp(-es.alphas * float(dt)) / _edge_factors(es.b_tilde, es.n_terms)
    return cols * decay[:, None] * np.exp(b * b - z * z)[None, :]


def _no_crossing_mass(z_prev, z_next, b, dt):
    """Reflection-style screen for scalar kernels: once (b-z)(b-z') exceeds
    40 step variances the bridge crossing probability is below ~e^-40 and the
    staying-below subtraction would only return cancellation noise."""
    var = -0.5 * math.expm1(-2.0 * dt)
    return (b - z_prev) * (b - z_next) > 40.0 * var


def _psi_value(z_prev, z_next, b, dt, es, dens):
    """Scalar staying-below kernel clamped to [0, dens]; also returns the
    two-term series tail for the caller's truncation warning."""
    terms = _stay_rows(es, [z_prev])[0] * _stay_cols(es, np.array([z_next]), dt)[:, 0]
    value = min(max(float(terms.sum()), 0.0), dens)
    tail = abs(float(terms[-1])) + abs(float(terms[-2])) if es.n_terms >= 2 else 0.0
    return value, tail


def kappa_kernel(z_prev, z_next, b, dt, es, J=64):
    """One-interval crossing kernel: P(max >= b | endpoints) x transition density.

    Either endpoint at or above the barrier forces the crossing, so the kernel
    degenerates to the bare transition density there.  Below the barrier the
    staying-below eigenfunction sum is removed from the transition density; a
    warning is emitted when the last two series terms suggest a tail above
    1e-6 of the value.  J sizes the diagnostic time-integral route only (see
    _kappa_time_integral) and is kept for interface stability.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if J < 8:
        raise ValueError("J must be at least 8")
    if z_prev >= b or z_next >= b:
        return transition_density(z_prev, z_next, dt)
    if es is None or _no_crossing_mass(z_prev, z_next, b, dt):
        return 0.0
    dens = transition_density(z_prev, z_next, dt)
    psi, tail = _psi_value(z_prev, z_next, b, dt, es, dens)
    value = dens - psi
    if tail > 1e-6 * max(abs(value), 1e-300):
        warnings.warn(
            "crossing-kernel series tail estimate %.2e exceeds 1e-6 of the "
            "value %.2e; consider more terms" % (tail, value),
            RuntimeWarning, stacklevel=2)
    return value


def psi_kernel(z_prev, z_next, b, dt, es, J=64):
    """Complement kernel: P(max < b | endpoints) x transition density.

    Zero whenever either endpoint sits at or above the barrier; equal to the
    bare transition density when the barrier is out of reach.  kappa and psi
    sum to the transition density exactly by construction.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if z_prev >= b or z_next >= b:
        return 0.0
    dens = transition_density(z_prev, z_next, dt)
    if es is None or _no_crossing_mass(z_prev, z_next, b, dt):
        return dens
    psi, _ = _psi_value(z_prev, z_next, b, dt, es, dens)
    return psi


def q_tail(z, b, dt, es):
    """Probability that the interval maximum stays below b, started at z.

    Vectorized over z; exactly zero at or above the barrier, the clipped
    survival series below it.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    out = _q_vec(z_arr, b, dt, es)
    return float(out[0]) if np.ndim(z) == 0 else out


def qbar_tail(z, b, dt, es):
    """Probability that the interval maximum reaches b, started at z."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    out = 1.0 - _q_vec(z_arr, b, dt, es)
    return float(out[0]) if np.ndim(z) == 0 else out


def _q_vec(z_arr, b, dt, es, stack=None):
    out = np.zeros(z_arr.shape)
    below = z_arr < b
    if below.any():
        if es is None:
            out[below] = 1.0
        elif stack is None:
            out[below] = np.clip(fpt.survival_series(es, z_arr[below], dt), 0.0, 1.0)
        else:
            weights = es.coeffs * np.exp(-es.alphas * float(dt))
            out[below] = np.clip(weights @ stack[:, below], 0.0, 1.0)
    return out


def bridge_crossing_prob(z, z_next, b, T, es, n_t=256):
    """Crossing probability of b on (0, T] for a bridge pinned at z and z_next.

    One minus the staying-below kernel over the direct transition density.
    Returns 1 when either pinned state is at or above the barrier; clamped to
    [0, 1].  n_t is kept for interface stability; the spectral evaluation
    needs no time discretization (the time integral it replaces is only
    conditionally convergent under series truncation, see
    _kappa_time_integral).
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if z >= b or z_next >= b:
        return 1.0
    if es is None or _no_crossing_mass(z, z_next, b, T):
        return 0.0
    dens = transition_density(z, z_next, T)
    psi, _ = _psi_value(z, z_next, b, T, es, dens)
    value, _ = _clamp_prob(1.0 - psi / dens)
    return value


def _kappa_time_integral(z_prev, z_next, b, dt, es, J=64):
    """Crossing kernel by direct quadrature of the first-passage density
    against the through-barrier transition density.

    Diagnostic only.  Under truncation the series inside the time integral is
    just conditionally convergent: its partial sums oscillate around the true
    value with an envelope decaying like a small negative power of the term
    count, so no practical truncation reaches better than a few percent.  The
    production kernels therefore subtract the staying-below sum instead; this
    route stays as a cross-check on the quadrature machinery.
    """
    if z_prev >= b or z_next >= b:
        return transition_density(z_prev, z_next, dt)
    if es is None:
        return 0.0
    terms = _series_rows(es, [z_prev])[0] * _series_cols(es, np.array([z_next]), b, dt, J)[:, 0]
    return float(terms.sum())


# ---------------------------------------------------------------------------
# kernel matrices and matrix-free applications


def _kappa_matrix(z_rows, z_cols, b, dt, es, J, row_stack=None, col_stack=None):
    """Dense one-interval crossing-kernel matrix kappa(z_rows[i], z_cols[j]).

    Starts from the bare transition density (the branch where either endpoint
    already crossed) and removes the staying-below product on the below/below
    block.  es may be None when the barrier is unreachable, which zeroes that
    block.  row_stack/col_stack optionally carry eigenfunction values hoisted
    over the full z_rows/z_cols arrays.
    """
    z_rows = np.asarray(z_rows, dtype=float)
    z_cols = np.asarray(z_cols, dtype=float)
    out = transition_density(z_rows[:, None], z_cols[None, :], dt)
    br = z_rows < b
    bc = z_cols < b
    if br.any() and bc.any():
        if es is None:
            out[np.ix_(br, bc)] = 0.0
        else:
            stay = (_stay_rows(es, z_rows[br],
                               None if row_stack is None else row_stack[:, br])
                    @ _stay_cols(es, z_cols[bc], dt,
                                 None if col_stack is None else col_stack[:, bc]))
            out[np.ix_(br, bc)] = np.maximum(out[np.ix_(br, bc)] - stay, 0.0)
    return out


def _psi_matrix(z_rows, z_cols, b, dt, es, J, row_stack=None, col_stack=None):
    """Dense staying-below kernel matrix; zero outside the below/below block."""
    z_rows = np.asarray(z_rows, dtype=float)
    z_cols = np.asarray(z_cols, dtype=float)
    out = np.zeros((z_rows.size, z_cols.size))
    br = z_rows < b
    bc = z_cols < b
    if br.any() and bc.any():
        dens = transition_density(z_rows[br][:, None], z_cols[None, bc], dt)
        if es is None:
            out[np.ix_(br, bc)] = dens
        else:
            stay = (_stay_rows(es, z_rows[br],
                               None if row_stack is None else row_stack[:, br])
                    @ _stay_cols(es, z_cols[bc], dt,
                                 None if col_stack is None else col_stack[:, bc]))
            out[np.ix_(br, bc)] = np.minimum(np.maximum(stay, 0.0), dens)
    return out


def _kappa_apply(z_rows, z_cols, b, dt, es, J, v):
    """Matrix-free (crossing kernel) @ v for unsorted state samples.

    The full-transition part streams over row blocks so the dense density
    matrix never exceeds a few tens of megabytes; the staying-below part is a
    rank-n_terms correction on the below/below states.
    """
    z_rows = np.asarray(z_rows, dtype=float)
    z_cols = np.asarray(z_cols, dtype=float)
    v = np.asarray(v, dtype=float)
    out = np.empty(z_rows.size)
    step = max(1, int(4_000_000 // max(z_cols.size, 1)))
    for lo in range(0, z_rows.size, step):
        hi = min(lo + step, z_rows.size)
        out[lo:hi] = transition_density(z_rows[lo:hi, None], z_cols[None, :], dt) @ v
    br = z_rows < b
    bc = z_cols < b
    if br.any() and bc.any() and es is not None:
        stay_v = _stay_cols(es, z_cols[bc], dt) @ v[bc]
        out[br] -= _stay_rows(es, z_rows[br]) @ stay_v
    return out


# ---------------------------------------------------------------------------
# eigensystem resolution per interval


def _alpha_growth(b, k):
    """Large-index eigenvalue growth law used only to size the series."""
    bp = -float(b)
    root = math.sqrt(4 * k + 3 + 4 * bp * bp / math.pi**2)
    return 2 * k + 1 + 4 * bp * bp / math.pi**2 + (2 * bp / math.pi) * root


@lru_cache(maxsize=512)
def _default_interval_terms(b, dt):
    """Smallest series length whose tail allowance drops below 1e-9.

    Uses the eigenvalue growth law instead of the exact roots; clipped to
    [8, 64].  A barrier at the mean has no usable bound, so a fixed default
    is returned there.
    """
    if abs(b) < 1e-6:
        return 24
    for n in range(8, 64):
        a_est = _alpha_growth(b, n - 1)
        if a_est <= 0.0:
            continue
        try:
            if fpt.truncation_error_bound(b, b, 1.0, dt, a_est) < 1e-9:
                return n
        except ValueError:
            return 24
    return 64


def _interval_series(b, dt, K, z_hi):
    """Eigensystem for one interval, or None when the barrier is unreachable."""
    if b - z_hi >= _UNREACHABLE_GAP:
        return None
    n = int(K) if K is not None else _default_interval_terms(float(b), float(dt))
    return eigen.build_eigensystem(float(b), n)


def _resolve_es(problem, grid, es_list, K):
    if es_list is not None:
        seq = list(es_list)
        if len(seq) != problem.n_intervals:
            raise ValueError("need one eigensystem per interval")
        return seq
    z_hi = max(grid.z_max, problem.z0)
    return [_interval_series(float(b), float(dt), K, z_hi)
            for b, dt in zip(problem.barriers, problem.dts)]


def interval_truncation_allowance(b, dt, K=None):
    """Per-interval series-truncation allowance.

    The survival tail bound with the departure state put at the barrier
    itself (unit prefactor), which is where crossing paths concentrate.
    Returns 0 outside the window where the series is evaluated at all.
    """
    b = float(b)
    dt = float(dt)
    if dt <= 0:
        raise ValueError("dt must be positive")
    if abs(b) > 5.5:
        return 0.0
    n = int(K) if K is not None else _default_interval_terms(b, dt)
    es = eigen.build_eigensystem(b, n)
    if b == 0.0:
        return float(abs(es.coeffs[-1]) * math.exp(-es.alphas[-1] * dt)
                     * abs(float(eigen.hermite_fn(es.alphas[-1], 0.0))))
    return float(fpt.truncation_error_bound(b, b, 1.0, dt, float(es.alphas[-1])))


# ---------------------------------------------------------------------------
# nested quadrature


def _require_direction(problem, wanted):
    if problem.direction is not wanted:
        raise ValueError("problem direction must be %s" % wanted.value)


def _check_grid_mass(grid):
    worst = max(math.exp(-grid.z_min**2), math.exp(-grid.z_max**2)) / _SQRT_PI
    if worst * grid.delta_z > 1e-8:
        raise GridTooNarrow(
            "stationary mass %.2e at a grid boundary exceeds 1e-8; widen the grid"
            % (worst * grid.delta_z))


def _node_stacks(es_list, nodes):
    """One eigenfunction stack per distinct eigensystem over a fixed node set."""
    stacks = {}
    for es in es_list:
        if es is not None and id(es) not in stacks:
            stacks[id(es)] = eigen.eigenfunction_matrix(es, nodes)
    return stacks


def _chain_once(z0, dts, barriers, nodes, delta_z, survival, es_list, J):
    """Right-to-left kernel-chain evaluation on one fixed node set."""
    n = len(barriers)
    if n == 1:
        q = _q_vec(np.array([z0]), barriers[0], dts[0], es_list[0])[0]
        return 1.0 - q if survival else float(q)
    stacks = _node_stacks(es_list, nodes)
    matrix = _kappa_matrix if survival else _psi_matrix
    q_last = _q_vec(nodes, barriers[-1], dts[-1], es_list[-1],
                    stacks.get(id(es_list[-1])))
    v = 1.0 - q_last if survival else q_last
    for i in range(n - 2, 0, -1):
        stack = stacks.get(id(es_list[i]))
        v = matrix(nodes, nodes, barriers[i], dts[i], es_list[i], J,
                   row_stack=stack, col_stack=stack) @ v * delta_z
    row = matrix(np.array([z0]), nodes, barriers[0], dts[0], es_list[0], J,
                 col_stack=stacks.get(id(es_list[0])))[0]
    return float(row @ v) * delta_z


def _joint_quadrature(problem, grid, es_list, J, K, survival):
    _check_grid_mass(grid)
    es_list = _resolve_es(problem, grid, es_list, K)
    nodes = grid.nodes()
    dts = problem.dts
    full = _chain_once(problem.z0, dts, problem.barriers, nodes, grid.delta_z,
                       survival, es_list, J)
    prob, clamped = _clamp_prob(full)
    if problem.n_intervals == 1:
        err = interval_truncation_allowance(float(problem.barriers[0]), float(dts[0]),
                                            None if es_list[0] is None else es_list[0].n_terms)
        return ProbResult(prob=prob, err=err, kind="quadrature", clamped=clamped)
    half = _chain_once(problem.z0, dts, problem.barriers, nodes[::2],
                       2.0 * grid.delta_z, survival, es_list, J)
    return ProbResult(prob=prob, err=abs(full - half), kind="quadrature",
                      clamped=clamped)


def joint_survival_quadrature(problem, grid, es_list=None, J=64, K=None):
    """Nested quadrature for the probability that every interval maximum
    reaches its barrier.

    Chains dense one-interval kernel matrices over the state grid from the
    terminal interval backwards (matrix-vector products only).  err is the
    difference against a rerun on every other grid node; for a single
    interval it is the series-truncation allowance instead.
    """
    _require_direction(problem, Direction.ALL_ABOVE)
    return _joint_quadrature(problem, grid, es_list, J, K, survival=True)


def joint_distribution_quadrature(problem, grid, es_list=None, J=64, K=None):
    """Nested quadrature for the probability that every interval maximum
    stays below its barrier.

    Same pipeline as the all-above case with complement kernels and the
    staying-below terminal vector.
    """
    _require_direction(problem, Direction.ALL_BELOW)
    return _joint_quadrature(problem, grid, es_list, J, K, survival=False)


# ---------------------------------------------------------------------------
# pairwise product (linear in the grid size)


def _arrival_crossing_density(z0, t_start, dt, b, es, nodes, delta_z, J):
    """Density over arrival states x that the interval (t_start, t_start+dt]
    maximum reached b and the state ends at x, given Z_0 = z0.

    The unconstrained arrival density minus the staying-below mass.  The
    latter composes the exact transition up to the interval start with the
    staying-below kernel, which collapses to one eigenfunction sum over the
    grid, so the cost stays linear in the node count.  Above-barrier arrivals
    force the crossing and keep the plain marginal density.
    """
    nodes = np.asarray(nodes, dtype=float)
    out = transition_density(z0, nodes, t_start + dt)
    below = nodes < b
    if not below.any() or (t_start == 0.0 and z0 >= b):
        return out
    if es is None:
        # barrier unreachable: essentially no path has crossed it
        out[below] = 0.0
        return out
    if t_start == 0.0:
        coeffs = _stay_rows(es, [z0])[0]
    else:
        dens0 = transition_density(z0, nodes[below], t_start)
        coeffs = _stay_rows(es, nodes[below]).T @ (dens0 * delta_z)
    stay = coeffs @ _stay_cols(es, nodes[below], dt)
    out[below] = np.maximum(out[below] - stay, 0.0)
    return out


def _simplified_once(problem, nodes, delta_z, es_list, J):
    z0 = problem.z0
    dts = problem.dts
    bs = problem.barriers
    ts = problem.t_grid
    n = len(bs)
    if n == 1:
        return 1.0 - float(_q_vec(np.array([z0]), bs[0], dts[0], es_list[0])[0])
    pairs = []
    for i in range(2, n + 1):
        m_prev = _arrival_crossing_density(z0, float(ts[i - 2]), float(dts[i - 2]),
                                           float(bs[i - 2]), es_list[i - 2],
                                           nodes, delta_z, J)
        reach = 1.0 - _q_vec(nodes, bs[i - 1], dts[i - 1], es_list[i - 1])
        pairs.append(float(m_prev @ reach) * delta_z)
    value = 1.0
    for p in pairs:
        value *= p
    if value == 0.0:
        return 0.0
    for i in range(2, n):
        dens = transition_density(z0, nodes, float(ts[i - 1]))
        reach = 1.0 - _q_vec(nodes, bs[i - 1], dts[i - 1], es_list[i - 1])
        single = float(dens @ reach) * delta_z
        if single <= 0.0:
            return 0.0
        value /= single
    return value


def joint_survival_simplified(problem, grid, es_list=None, J=64, K=None):
    """Pairwise-product approximation of the all-above joint probability.

    The chain of interval crossing indicators is treated one neighbour pair
    at a time: the joint probability becomes the product of adjacent-pair
    probabilities divided by the interior single-interval ones.  Every factor
    reduces to one state-grid sum, so the cost is linear in the grid size.
    Exact for one or two intervals; for more it conditions away longer-range
    dependence.  err as in the nested quadrature.
    """
    _require_direction(problem, Direction.ALL_ABOVE)
    _check_grid_mass(grid)
    es_list = _resolve_es(problem, grid, es_list, K)
    nodes = grid.nodes()
    full = _simplified_once(problem, nodes, grid.delta_z, es_list, J)
    prob, clamped = _clamp_prob(full)
    if problem.n_intervals == 1:
        err = interval_truncation_allowance(float(problem.barriers[0]), float(problem.dts[0]),
                                            None if es_list[0] is None else es_list[0].n_terms)
        return ProbResult(prob=prob, err=err, kind="quadrature", clamped=clamped)
    half = _simplified_once(problem, nodes[::2], 2.0 * grid.delta_z, es_list, J)
    return ProbResult(prob=prob, err=abs(full - half), kind="quadrature",
                      clamped=clamped)


# ---------------------------------------------------------------------------
# importance sampling of the nested integral


def joint_survival_mc_integration(problem, sampler_mean=0.0, sampler_var=1.125,
                                  sample_sizes=100_000, seed=0, es_list=None,
                                  J=64, K=None, n_replicates=20):
    """Importance-sampling evaluation of the all-above joint probability.

    Every intermediate-state integral is replaced by an average over draws
    from one fixed Gaussian proposal; the default is the stationary law
    widened by 1.5 in standard deviation, which stays heavier-tailed than any
    one-step transition.  The per-level budget is split into independent
    replicates; the estimate is their mean, err their standard error.  Raises
    DegenerateWeights when one draw carries most of the outer-level mass.
    """
    _require_direction(problem, Direction.ALL_ABOVE)
    if sampler_var <= 0:
        raise ValueError("sampler_var must be positive")
    n = problem.n_intervals
    dts = problem.dts
    bs = problem.barriers
    grid_proxy = Grid()  # reachability reference for barrier screening
    es_list = _resolve_es(problem, grid_proxy, es_list, K)
    if n == 1:
        prob, clamped = _clamp_prob(1.0 - _q_vec(np.array([problem.z0]), bs[0], dts[0], es_list[0])[0])
        err = interval_truncation_allowance(float(bs[0]), float(dts[0]),
                                            None if es_list[0] is None else es_list[0].n_terms)
        return ProbResult(prob=prob, err=err, kind="mc-stderr", clamped=clamped)
    sizes = np.broadcast_to(np.asarray(sample_sizes, dtype=int), (n - 1,))
    if np.any(sizes < n_replicates):
        raise ValueError("sample sizes must cover %d replicates" % n_replicates)
    per_rep = sizes // n_replicates
    sd = math.sqrt(sampler_var)
    estimates = np.empty(n_replicates)
    for r, child in enumerate(np.random.SeedSequence(seed).spawn(n_replicates)):
        rng = np.random.Generator(np.random.Philox(child))
        samples = [rng.normal(sampler_mean, sd, size=per_rep[i]) for i in range(n - 1)]
        v = 1.0 - _q_vec(samples[-1], bs[-1], dts[-1], es_list[-1])
        for i in range(n - 2, 0, -1):
            weighted = v / _gauss_pdf(samples[i], sampler_mean, sampler_var)
            v = _kappa_apply(samples[i - 1], samples[i], bs[i], dts[i],
                             es_list[i], J, weighted) / per_rep[i]
        weighted = v / _gauss_pdf(samples[0], sampler_mean, sampler_var)
        contrib = _kappa_matrix(np.array([problem.z0]), samples[0], bs[0], dts[0],
                                es_list[0], J)[0] * weighted
        total = float(np.sum(np.abs(contrib)))
        if total > 0.0 and float(np.max(np.abs(contrib))) > 0.5 * total:
            raise DegenerateWeights(
                "one proposal draw carries more than half of the estimate; "
                "adjust sampler_mean/sampler_var")
        estimates[r] = float(contrib.sum()) / per_rep[0]
    prob, clamped = _clamp_prob(float(np.mean(estimates)))
    err = float(np.std(estimates, ddof=1) / math.sqrt(n_replicates))
    return ProbResult(prob=prob, err=err, kind="mc-stderr", clamped=clamped)


# ---------------------------------------------------------------------------
# non-matching grids and sub-divided intervals


def merge_discretizations(param_grid, barrier_grid):
    """Union of two time grids that share their endpoints.

    Returns (times, param_index, barrier_index): the sorted union of the cut
    points and, for each resulting sub-segment, the index of the enclosing
    segment in each input grid.
    """
    pg = np.asarray(param_grid, dtype=float)
    bg = np.asarray(barrier_grid, dtype=float)
    for g in (pg, bg):
        if g.ndim != 1 or g.size < 2 or np.any(np.diff(g) <= 0):
            raise ValueError("grids must be strictly increasing with >= 2 points")
    if pg[0] != bg[0] or pg[-1] != bg[-1]:
        raise ValueError("grids must share their endpoints")
    times = np.union1d(pg, bg)
    mids = 0.5 * (times[:-1] + times[1:])
    param_index = np.searchsorted(pg, mids) - 1
    barrier_index = np.searchsorted(bg, mids) - 1
    return times, param_index, barrier_index


def interval_crossing_subbarriers(z, z_next, sub_times, b, es_list, grid, J=64):
    """Crossing probability of one barrier over an interval cut into
    sub-segments, optionally pinned at the right endpoint.

    Without z_next this is one minus the all-below probability of the
    sub-segment maxima.  With z_next the intermediate states are chained with
    complement kernels, the last factor is evaluated at z_next, and the whole
    chain is divided by the direct transition density (bridge conditioning).
    Because the complement kernels compose exactly, refining sub_times leaves
    the value unchanged up to grid error.
    """
    ts = np.asarray(sub_times, dtype=float)
    if ts.ndim != 1 or ts.size < 2 or np.any(np.diff(ts) <= 0):
        raise ValueError("sub_times must be strictly increasing with >= 2 points")
    rel = ts - ts[0]
    dts = np.diff(rel)
    n_seg = len(dts)
    if es_list is None:
        z_hi = max(grid.z_max, z) if z_next is None else max(grid.z_max, z, z_next)
        es_list = [_interval_series(float(b), float(dt), None, z_hi) for dt in dts]
    es_list = list(es_list)
    if len(es_list) != n_seg:
        raise ValueError("need one eigensystem per sub-segment")

    if z_next is None:
        problem = JointProblem(z0=z, t_grid=rel, barriers=np.full(n_seg, float(b)),
                               direction=Direction.ALL_BELOW)
        below = joint_distribution_quadrature(problem, grid, es_list=es_list, J=J)
        return 1.0 - below.prob

    if z >= b or z_next >= b:
        return 1.0
    nodes = grid.nodes()
    if n_seg == 1:
        below_val = psi_kernel(float(z), float(z_next), float(b), float(dts[0]),
                               es_list[0], J)
    else:
        w = _psi_matrix(nodes, np.array([z_next]), b, dts[-1], es_list[-1], J)[:, 0]
        for seg in range(n_seg - 2, 0, -1):
            w = _psi_matrix(nodes, nodes, b, dts[seg], es_list[seg], J) @ w * grid.delta_z
        row = _psi_matrix(np.array([z]), nodes, b, dts[0], es_list[0], J)[0]
        below_val = float(row @ w) * grid.delta_z
    cond = below_val / transition_density(float(z), float(z_next), float(rel[-1]))
    value, _ = _clamp_prob(1.0 - cond)
    return value
