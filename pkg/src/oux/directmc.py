"""Direct Monte Carlo baseline: exact-step path simulation of interval maxima.

Paths of the standardized process dZ = -Z dt + dW are advanced with the exact
Gaussian transition, per-interval discrete maxima are compared against the
barriers and the joint indicator is averaged.  Discrete monitoring can only
miss excursions between skeleton points, so these estimates underestimate the
continuous-time probability and increase toward it as the step count grows;
mc_error_ratio gives the matching prediction for how the sampling error
shrinks along the way.  A common-random-number sweep over several step counts
reuses one fine skeleton so the monotonicity in the step count holds path by
path, not just in distribution.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .crossing import Direction, JointProblem  # noqa: F401  (re-exported context)
from .fpt import ProbResult

__all__ = [
    "MCConfig",
    "ou_exact_step",
    "direct_mc_joint",
    "direct_mc_sweep",
    "mc_error_ratio",
]

# Paths are simulated in fixed-size blocks so memory stays flat and the
# per-block random streams are independent of how many blocks run at once.
_BLOCK = 1 << 18


@dataclass(frozen=True)
class MCConfig:
    """Path count, monitoring density, number of simulation sets, seed.

    n_steps counts monitoring points per unit of time, so the skeleton
    spacing is 1/n_steps regardless of how many intervals the horizon holds;
    an interval of length dt then carries dt * n_steps whole steps.
    """

    n_paths: int
    n_steps: int
    n_sets: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        if self.n_sets < 1:
            raise ValueError("n_sets must be at least 1")


def ou_exact_step(x, params, delta, gaussian):
    """One exact-in-distribution step of dX = (mu - lam X) dt + sigma dW.

    Works on scalars or arrays; `gaussian` supplies the standard normal
    increment(s).
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    decay = math.exp(-params.lam * delta)
    sd = params.sigma * math.sqrt(-math.expm1(-2.0 * params.lam * delta)
                                  / (2.0 * params.lam))
    return x * decay + (params.mu / params.lam) * (1.0 - decay) + sd * gaussian


def _steps_per_interval(problem, n_steps):
    """Whole number of monitoring steps carried by each interval.

    Every interval length must be a whole multiple of the skeleton spacing
    1/n_steps, so interval ends land on skeleton points.
    """
    per = []
    for dt in problem.dts:
        frac = float(dt) * n_steps
        m = int(round(frac))
        if m < 1 or abs(frac - m) > 1e-9 * n_steps:
            raise ValueError("interval lengths must be multiples of 1/n_steps")
        per.append(m)
    return per


def _block_indicators(problem, per_interval, delta, rng, n_block, subsample=None):
    """Joint event indicators for one block of paths.

    Returns an array of shape (len(subsample) or 1, n_block) of 0/1 floats.
    With `subsample` the same fine skeleton is re-read at coarser strides
    (each stride must divide the per-interval step counts), giving common
    random numbers across step counts; stride 1 reproduces the plain run.
    """
    strides = [1] if subsample is None else list(subsample)
    decay = math.exp(-delta)
    sd = math.sqrt(-0.5 * math.expm1(-2.0 * delta))
    z = np.full(n_block, float(problem.z0))
    above = problem.direction is Direction.ALL_ABOVE
    ok = np.ones((len(strides), n_block), dtype=bool)
    for b, m_steps in zip(problem.barriers, per_interval):
        run_max = np.full((len(strides), n_block), -np.inf)
        for m in range(1, m_steps + 1):
            z = z * decay + sd * ndtri(rng.random(n_block))
            for s, stride in enumerate(strides):
                if m % stride == 0:
                    np.maximum(run_max[s], z, out=run_max[s])
        crossed = run_max >= float(b)
        ok &= crossed if above else ~crossed
    return ok.astype(float)


def _run_sets(problem, cfg, strides):
    per_interval = _steps_per_interval(problem, cfg.n_steps)
    delta = 1.0 / cfg.n_steps
    for stride in strides:
        if any(m % stride for m in per_interval):
            raise ValueError("every stride must divide the per-interval steps")
    root = np.random.SeedSequence(cfg.seed)
    set_means = np.empty((len(strides), cfg.n_sets))
    for i, set_seq in enumerate(root.spawn(cfg.n_sets)):
        n_blocks = (cfg.n_paths + _BLOCK - 1) // _BLOCK
        total = np.zeros(len(strides))
        done = 0
        for child in set_seq.spawn(n_blocks):
            n_block = min(_BLOCK, cfg.n_paths - done)
            rng = np.random.Generator(np.random.Philox(child))
            total += _block_indicators(problem, per_interval, delta, rng,
                                       n_block, strides).sum(axis=1)
            done += n_block
        set_means[:, i] = total / cfg.n_paths
    return set_means


def direct_mc_joint(problem, cfg):
    """Fraction of simulated paths whose per-interval discrete maxima satisfy
    the joint event.

    The start state is excluded from the first interval's maximum (intervals
    are open on the left).  With one simulation set the error is the binomial
    standard error over paths; with several it is the standard error of the
    set means.
    """
    means = _run_sets(problem, cfg, [1])[0]
    est = float(means.mean())
    if cfg.n_sets == 1:
        n = cfg.n_paths
        err = math.sqrt(max(est * (1.0 - est), 0.0) / n)
    else:
        err = float(np.std(means, ddof=1) / math.sqrt(cfg.n_sets))
    return ProbResult(prob=est, err=err, kind="mc-stderr")


def direct_mc_sweep(problem, cfg, step_counts):
    """Estimates at several per-unit step counts from one fine skeleton.

    cfg.n_steps is the finest count; every entry of step_counts must divide
    it (and keep whole steps per interval).  Because the coarser skeletons are
    subsets of the fine one, the all-above estimates are nondecreasing in the
    step count path by path.  Returns a dict step count -> ProbResult.
    """
    counts = sorted(set(int(m) for m in step_counts))
    if any(m < 1 or cfg.n_steps % m for m in counts):
        raise ValueError("step counts must divide the configured n_steps")
    strides = [cfg.n_steps // m for m in counts]
    means = _run_sets(problem, cfg, strides)
    out = {}
    for m, row in zip(counts, means):
        est = float(row.mean())
        if cfg.n_sets == 1:
            err = math.sqrt(max(est * (1.0 - est), 0.0) / cfg.n_paths)
        else:
            err = float(np.std(row, ddof=1) / math.sqrt(cfg.n_sets))
        out[m] = ProbResult(prob=est, err=err, kind="mc-stderr")
    return out


def mc_error_ratio(p1, p2, err2):
    """Predicted sampling error at the coarser monitoring from the finer one.

    With p1 the coarser and p2 the finer estimate of the same event, the
    missed mass a = p2 - p1 rescales the binomial error as
    sqrt(p1 (1-p1) / (p2 (1-p2))) * err2.
    """
    if not 0.0 < p2 < 1.0:
        raise ValueError("p2 must lie strictly inside (0, 1)")
    if not 0.0 <= p1 <= p2:
        raise ValueError("need 0 <= p1 <= p2")
    return math.sqrt(p1 * (1.0 - p1) / (p2 * (1.0 - p2))) * err2
