"""Simulation-based reference values for bridge crossing and path survival.

Run from the repository root:

    python3 tests/oracles/gen_mc_oracles.py

Writes tests/data/mc_oracles.json.  Uses exact-in-distribution OU steps plus
Brownian-bridge crossing completion inside each step, so the time
discretization bias is far below the reported standard errors.  Nothing here
imports the library under test.
"""

import json
import os

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, os.pardir, "data", "mc_oracles.json")


def simulate_block(rng, n_paths, n_steps, dt, x0):
    """Full path matrix (n_steps+1, n_paths) of a standardized OU process."""
    c = np.exp(-dt)
    s = np.sqrt((1.0 - np.exp(-2.0 * dt)) / 2.0)
    x = np.empty((n_steps + 1, n_paths))
    x[0] = x0
    cur = np.full(n_paths, float(x0))
    for j in range(n_steps):
        cur = cur * c + s * rng.standard_normal(n_paths)
        x[j + 1] = cur
    return x


def no_cross_weight(path_block, b, dt):
    """P(no within-step upcrossing | discrete skeleton), bridge-completed.

    path_block has shape (n_steps+1, n_cols).  Columns whose skeleton already
    touches b get weight 0.  For the rest the per-step crossing probability is
    the Brownian-bridge formula exp(-2(b-x0)(b-x1)/dt).
    """
    crossed = (path_block >= b).any(axis=0)
    d0 = b - path_block[:-1]
    d1 = b - path_block[1:]
    with np.errstate(over="ignore"):
        p_step = np.exp(-2.0 * d0 * d1 / dt)
    w = np.prod(1.0 - np.clip(p_step, 0.0, 1.0), axis=0)
    w[crossed] = 0.0
    return w


def bridge_oracle(seed=20260814, n_paths=10_000_000, dt=1e-3,
                  z=0.0, z_next=0.5, b=1.5, horizon=1.0, bin_width=0.01):
    """Crossing probability of the OU bridge from z to (z_next +- bin/2)."""
    rng = np.random.default_rng(seed)
    n_steps = int(round(horizon / dt))
    block = 20_000
    total = 0
    acc_n = 0
    acc_sum = 0.0
    acc_sq = 0.0
    while total < n_paths:
        n = min(block, n_paths - total)
        paths = simulate_block(rng, n, n_steps, dt, z)
        keep = np.abs(paths[-1] - z_next) <= bin_width / 2.0
        if keep.any():
            w = no_cross_weight(paths[:, keep], b, dt)
            q = 1.0 - w
            acc_n += q.size
            acc_sum += q.sum()
            acc_sq += (q * q).sum()
        total += n
    mean = acc_sum / acc_n
    var = acc_sq / acc_n - mean * mean
    stderr = np.sqrt(var / acc_n)
    return {
        "z": z, "z_next": z_next, "b": b, "T": horizon,
        "value": mean, "stderr": stderr, "accepted": acc_n,
        "paths": n_paths, "dt": dt, "bin_width": bin_width, "seed": seed,
    }


def survival_oracle(seed=20260815, n_paths=1_000_000, dt=1e-3,
                    x0=0.0, b=1.5, horizon=1.0):
    """P(max over [0,T] stays below b), bridge-completed estimator."""
    rng = np.random.default_rng(seed)
    n_steps = int(round(horizon / dt))
    block = 20_000
    total = 0
    acc_sum = 0.0
    acc_sq = 0.0
    while total < n_paths:
        n = min(block, n_paths - total)
        paths = simulate_block(rng, n, n_steps, dt, x0)
        w = no_cross_weight(paths, b, dt)
        acc_sum += w.sum()
        acc_sq += (w * w).sum()
        total += n
    mean = acc_sum / n_paths
    var = acc_sq / n_paths - mean * mean
    stderr = np.sqrt(var / n_paths)
    return {
        "x0": x0, "b": b, "T": horizon, "value": mean, "stderr": stderr,
        "paths": n_paths, "dt": dt, "seed": seed,
    }


def main():
    data = {
        "bridge_crossing": bridge_oracle(),
        "path_survival": survival_oracle(),
    }
    os.makedirs(os.path.dirname(OUT), exist_ok=True)
    with open(OUT, "w") as fh:
        json.dump(data, fh, indent=1)
    print("wrote", os.path.normpath(OUT))


if __name__ == "__main__":
    main()
