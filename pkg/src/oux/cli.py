"""ou-x: command line front end.

Subcommands
-----------
fpt        single-barrier first-passage survival or density curve
joint      interval-maximum joint probability by one or several methods
transform  time-change tabulation and method selection
presets    canned runs reproducing the reference tables and figures

Configuration is an INI file (sections [problem], [numerics], [output])
passed with --config; every key is also a command line flag of the same
name, and flags win over the file.  Output is CSV with '.' as the decimal
mark, scientific notation with 10 significant digits, and a '#' comment
header recording the library version and the fully resolved configuration.
A given configuration always produces identical bytes, except for the
wall_ms timing column emitted by `joint` (and by the timing presets), which
necessarily varies between runs.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.

numpy and the numerical submodules are imported inside the handlers, after
--threads (or the OUX_THREADS environment variable) has been copied into the
BLAS thread-pool environment variables; setting those after numpy loads has
no effect.
"""

import argparse
import configparser
import math
import os
import sys
import time
from dataclasses import dataclass

from . import __version__
from .errors import (
    DegenerateWeights,
    EvaluationOverflow,
    GridTooNarrow,
    NonMonotoneGamma,
    NotEnoughRoots,
    ResidualTooLarge,
)

__all__ = ["ConfigError", "RunConfig", "cmd_fpt", "cmd_joint", "cmd_transform",
           "cmd_presets", "main", "PRESETS"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

# Exceptions that signal a numerical failure rather than a usage problem.
_NUMERICAL_FAILURES = (
    EvaluationOverflow,
    NotEnoughRoots,
    ResidualTooLarge,
    NonMonotoneGamma,
    GridTooNarrow,
    DegenerateWeights,
    ArithmeticError,
)

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)

_SECTIONS = ("problem", "numerics", "output")


class ConfigError(ValueError):
    """Unusable configuration: unknown key, bad value, missing file."""


# ---------------------------------------------------------------------------
# configuration keys

def _parse_float(raw):
    return float(raw)


def _parse_int(raw):
    return int(raw, 10)


def _parse_optional_int(raw):
    if raw.strip().lower() in ("", "auto", "none"):
        return None
    return int(raw, 10)


def _parse_optional_float(raw):
    if raw.strip().lower() in ("", "auto", "none"):
        return None
    return float(raw)


def _parse_lower_barrier(raw):
    text = raw.strip().lower()
    if text in ("", "none", "-inf", "inf", "off", "auto"):
        return None
    return float(raw)


def _parse_float_list(raw):
    parts = [p for p in raw.replace(",", " ").split() if p]
    if not parts:
        raise ValueError("empty list")
    return tuple(float(p) for p in parts)


def _parse_choice(*options):
    def parse(raw):
        value = raw.strip().lower()
        if value not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return value
    return parse


def _parse_str(raw):
    return raw


@dataclass(frozen=True)
class Key:
    name: str
    section: str
    parse: callable
    default: object
    help: str


def _key(name, section, parse, default, help):
    return Key(name, section, parse, default, help)


_NUMERIC_KEYS = [
    _key("grid-min", "numerics", _parse_float, -5.0, "state grid lower edge"),
    _key("grid-max", "numerics", _parse_float, 5.0, "state grid upper edge"),
    _key("grid-l", "numerics", _parse_int, 2001, "number of state grid nodes"),
    _key("k-terms", "numerics", _parse_optional_int, None,
         "series length per interval (auto if omitted)"),
    _key("inner-j", "numerics", _parse_int, 64, "inner quadrature nodes"),
    _key("paths", "numerics", _parse_int, 100_000,
         "sample paths / integration samples"),
    _key("steps", "numerics", _parse_int, 500,
         "path monitoring steps per unit time"),
    _key("sets", "numerics", _parse_int, 1, "independent simulation sets"),
    _key("seed", "numerics", _parse_int, 0, "random seed"),
]

_THREADS_KEY = _key("threads", "numerics", _parse_optional_int, None,
                    "cap BLAS worker threads (default: all cores)")
_OUT_KEY = _key("out", "output", _parse_str, None,
                "output file (default: stdout)")

_KEYS = {
    "fpt": [
        _key("x", "problem", _parse_float, 0.0, "start state"),
        _key("b", "problem", _parse_float, 1.5, "absorbing barrier level"),
        _key("a", "problem", _parse_lower_barrier, None,
             "reflecting lower barrier (none = unreflected)"),
        _key("mu", "problem", _parse_float, 0.0, "drift level"),
        _key("lam", "problem", _parse_float, 1.0, "mean reversion speed"),
        _key("sigma", "problem", _parse_float, 1.0, "volatility"),
        _key("t-max", "problem", _parse_float, 5.0, "curve endpoint in time"),
        _key("points", "problem", _parse_int, 200, "curve sample count"),
        _key("quantity", "problem", _parse_choice("survival", "density"),
             "survival", "curve to emit"),
        _key("k-terms", "numerics", _parse_optional_int, None,
             "series length (auto if omitted)"),
        _THREADS_KEY,
        _OUT_KEY,
    ],
    "joint": [
        _key("z0", "problem", _parse_float, 0.0, "start state"),
        _key("t-grid", "problem", _parse_float_list, (0.0, 1.0, 2.0),
             "comma separated interval endpoints, starting at 0"),
        _key("barriers", "problem", _parse_float_list, (2.0, 2.0),
             "comma separated barrier levels, one per interval"),
        _key("direction", "problem", _parse_choice("above", "below"),
             "above", "event direction for every interval maximum"),
        _key("method", "problem",
             _parse_choice("quadrature", "simplified", "mc-integration",
                           "direct-mc", "all"),
             "quadrature", "evaluation method(s)"),
        *_NUMERIC_KEYS,
        _THREADS_KEY,
        _OUT_KEY,
    ],
    "transform": [
        _key("mu", "problem", _parse_float, 0.0, "drift level (constant)"),
        _key("lam", "problem", _parse_float, 1.0,
             "mean reversion speed (constant)"),
        _key("sigma", "problem", _parse_float, 1.0, "volatility (constant)"),
        _key("b", "problem", _parse_float, 1.0, "barrier level"),
        _key("alpha0", "problem", _parse_optional_float, None,
             "initial scale (auto if omitted)"),
        _key("beta0", "problem", _parse_float, 0.0, "initial shift"),
        _key("horizon", "problem", _parse_float, 5.0,
             "tabulation horizon on the transformed clock"),
        _key("step", "problem", _parse_optional_float, None,
             "integrator step (auto if omitted)"),
        _key("points", "problem", _parse_int, 200, "curve sample count"),
        _key("t1", "problem", _parse_optional_float, None,
             "selector window start (original clock)"),
        _key("t2", "problem", _parse_optional_float, None,
             "selector window end (original clock)"),
        _THREADS_KEY,
        _OUT_KEY,
    ],
}


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings for one command invocation."""

    command: str
    values: dict

    def __getitem__(self, name):
        return self.values[name]


def _load_config_file(path, keys):
    known = {k.name: k for k in keys}
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    out = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        for name, raw in parser.items(section):
            key = known.get(name)
            if key is None or key.section != section:
                raise ConfigError(f"unknown key {name!r} in section [{section}]")
            try:
                out[name] = key.parse(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {name!r}: {exc}") from exc
    return out


def _resolve(args, command):
    keys = _KEYS[command]
    values = {k.name: k.default for k in keys}
    config_path = getattr(args, "config", None)
    if config_path:
        values.update(_load_config_file(config_path, keys))
    for key in keys:
        raw = getattr(args, key.name.replace("-", "_"), None)
        if raw is not None:
            try:
                values[key.name] = key.parse(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for --{key.name}: {exc}") from exc
    return RunConfig(command, values)


def _apply_threads(n_threads):
    if n_threads is None:
        env = os.environ.get("OUX_THREADS", "").strip()
        if not env:
            return
        try:
            n_threads = int(env, 10)
        except ValueError as exc:
            raise ConfigError(f"bad OUX_THREADS value {env!r}") from exc
    if n_threads < 1:
        raise ConfigError("threads must be at least 1")
    for var in _THREAD_ENV_VARS:
        os.environ[var] = str(n_threads)


# ---------------------------------------------------------------------------
# CSV emission

def _fmt_cell(value):
    if isinstance(value, float):
        return f"{value:.9e}"
    return str(value)


def _cfg_repr(value):
    if value is None:
        return "auto"
    if isinstance(value, (list, tuple)):
        return ",".join(_cfg_repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _render(command, values, columns, rows, extra=()):
    lines = [f"# ou-x {command}", f"# version = {__version__}"]
    for name in sorted(values):
        lines.append(f"# {name} = {_cfg_repr(values[name])}")
    lines.extend(extra)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt_cell(cell) for cell in row))
    return "\n".join(lines) + "\n"


def _emit(text, out_path):
    if out_path is None:
        sys.stdout.write(text)
        return
    try:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {out_path}: {exc}") from exc


# ---------------------------------------------------------------------------
# fpt

def _series_tail(es, x_tilde, t_tilde, density=False):
    """Magnitude of the last retained series term, an error indicator."""
    from . import eigen

    import numpy as np

    alpha = float(es.alphas[-1])
    weight = float(es.coeffs[-1]) * math.exp(-alpha * t_tilde)
    if density:
        weight *= alpha
    basis = eigen.eigenfunction_matrix(es, np.array([x_tilde]))[-1, 0]
    return abs(weight * basis)


def _reflected_terms(b_tilde, a_tilde, alpha_ceiling=70.0):
    """Series length keeping reflected eigenvalues below the stability ceiling."""
    width = b_tilde - a_tilde
    est = int(width * math.sqrt(2.0 * alpha_ceiling) / math.pi) + 2
    return max(4, est)


def _slice_below(es, alpha_ceiling):
    import dataclasses

    keep = int((es.alphas <= alpha_ceiling).sum())
    keep = max(4, keep)
    if keep >= len(es.alphas):
        return es
    return dataclasses.replace(es, alphas=es.alphas[:keep].copy(),
                               coeffs=es.coeffs[:keep].copy())


def _fpt_table(values):
    from . import eigen, fpt

    try:
        params = fpt.OUParams(values["mu"], values["lam"], values["sigma"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    x, b = values["x"], values["b"]
    sp = fpt.standardize(params, x, b)
    if not sp.x_tilde < sp.b_tilde:
        raise ConfigError("start state must lie below the barrier")
    n_pts = values["points"]
    if n_pts < 1:
        raise ConfigError("points must be at least 1")
    if values["t-max"] <= 0:
        raise ConfigError("t-max must be positive")
    k_terms = values["k-terms"]

    a = values["a"]
    es = None
    if a is not None and not math.isinf(a):
        scale = math.sqrt(params.lam) / params.sigma
        shift = params.mu / params.lam
        a_tilde = scale * (a - shift)
        if not a_tilde < sp.x_tilde:
            raise ConfigError("reflecting barrier must lie below the start state")
        K = k_terms if k_terms is not None else _reflected_terms(sp.b_tilde, a_tilde)
        es = _slice_below(eigen.build_reflected_eigensystem(sp.b_tilde, a_tilde, K), 70.0)

    ts = [values["t-max"] * i / n_pts for i in range(n_pts + 1)]
    rows = []
    if values["quantity"] == "survival":
        for t in ts:
            if t == 0.0:
                rows.append((0.0, 1.0, 0.0))
            elif es is None:
                res = fpt.fpt_survival(params, x, b, t, K=k_terms)
                rows.append((t, res.prob, res.err))
            else:
                raw = fpt.survival_series(es, sp.x_tilde, sp.time_scale * t)
                tail = _series_tail(es, sp.x_tilde, sp.time_scale * t)
                rows.append((t, min(1.0, max(0.0, raw)), tail))
    else:
        if es is None:
            K = k_terms
            if K is None:
                try:
                    K = max(8, fpt.select_truncation(sp.x_tilde, sp.b_tilde,
                                                     0.5, 0.05, 60.0))
                except NotEnoughRoots:
                    K = 8
            es_plain = eigen.build_eigensystem(sp.b_tilde, K)
            for t in ts[1:]:
                val = fpt.fpt_density(params, x, b, t, K=K)
                tail = sp.time_scale * _series_tail(es_plain, sp.x_tilde,
                                                    sp.time_scale * t, density=True)
                rows.append((t, val, tail))
        else:
            for t in ts[1:]:
                raw = fpt.density_series(es, sp.x_tilde, sp.time_scale * t)
                val = sp.time_scale * max(0.0, raw)
                tail = sp.time_scale * _series_tail(es, sp.x_tilde,
                                                    sp.time_scale * t, density=True)
                rows.append((t, val, tail))
    return ("t", "value", "error_bound"), rows


def cmd_fpt(config):
    columns, rows = _fpt_table(config.values)
    text = _render("fpt", config.values, columns, rows)
    _emit(text, config["out"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# joint

_ALL_METHODS = ("quadrature", "simplified", "mc-integration", "direct-mc")


def _joint_problem(values):
    from .crossing import Direction, JointProblem

    direction = (Direction.ALL_ABOVE if values["direction"] == "above"
                 else Direction.ALL_BELOW)
    try:
        return JointProblem(values["z0"], values["t-grid"],
                            values["barriers"], direction)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _joint_grid(values):
    from .crossing import Grid

    try:
        return Grid(values["grid-min"], values["grid-max"], values["grid-l"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _run_joint_method(method, problem, grid, values):
    from . import crossing, directmc
    from .crossing import Direction

    J, K = values["inner-j"], values["k-terms"]
    below = problem.direction is Direction.ALL_BELOW
    start = time.perf_counter()
    if method == "quadrature":
        if below:
            res = crossing.joint_distribution_quadrature(problem, grid, J=J, K=K)
        else:
            res = crossing.joint_survival_quadrature(problem, grid, J=J, K=K)
    elif method == "simplified":
        if below:
            raise ConfigError("simplified is defined for the all-above event only")
        res = crossing.joint_survival_simplified(problem, grid, J=J, K=K)
    elif method == "mc-integration":
        if below:
            raise ConfigError("mc-integration is defined for the all-above event only")
        res = crossing.joint_survival_mc_integration(
            problem, sample_sizes=values["paths"], seed=values["seed"], J=J, K=K)
    elif method == "direct-mc":
        try:
            cfg = directmc.MCConfig(values["paths"], values["steps"],
                                    values["sets"], values["seed"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        res = directmc.direct_mc_joint(problem, cfg)
    else:
        raise ConfigError(f"unknown method {method!r}")
    wall_ms = 1000.0 * (time.perf_counter() - start)
    return res, wall_ms


def _joint_rows(values):
    from .crossing import Direction

    problem = _joint_problem(values)
    grid = _joint_grid(values)
    if values["method"] == "all":
        methods = [m for m in _ALL_METHODS
                   if problem.direction is Direction.ALL_ABOVE
                   or m in ("quadrature", "direct-mc")]
    else:
        methods = [values["method"]]
    rows = []
    for method in methods:
        res, wall_ms = _run_joint_method(method, problem, grid, values)
        rows.append((method, res.prob, res.err, wall_ms))
    return ("method", "prob", "err", "wall_ms"), rows


def cmd_joint(config):
    columns, rows = _joint_rows(config.values)
    text = _render("joint", config.values, columns, rows)
    _emit(text, config["out"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# transform

def _transform_table(funcs, barrier, values, t1, t2):
    from . import transform as tf

    try:
        tr = tf.solve_transform(funcs, alpha0=values.get("alpha0"),
                                beta0=values.get("beta0", 0.0),
                                horizon=values["horizon"],
                                step=values.get("step"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    g = tf.transformed_barrier(tr, barrier)

    orig_end = float(tr.gamma_vals[-1])
    if t1 is None:
        t1 = 0.0
    if t2 is None:
        t2 = orig_end
    if not 0.0 <= t1 < t2 <= orig_end + 1e-9:
        raise ConfigError("selector window must satisfy 0 <= t1 < t2 <= gamma(horizon)")
    report = tf.method_selector(funcs, barrier, t1, t2,
                                beta0=values.get("beta0", 0.0) or 1.0)

    n_pts = values["points"]
    if n_pts < 1:
        raise ConfigError("points must be at least 1")
    rows = []
    for i in range(n_pts + 1):
        t = tr.horizon * i / n_pts
        rows.append((t, float(tr.alpha(t)), float(tr.beta(t)),
                     float(tr.gamma(t)), float(g(t))))
    extra = [
        f"# verdict = {report.method.value}",
        f"# selector_ratio = {report.ratio!r}",
        f"# selector_threshold = {report.threshold!r}",
        f"# selector_degenerate = {report.degenerate}",
        f"# selector_hypothesis_failed = {report.hypothesis_failed}",
        f"# max_residual = {tr.max_residual!r}",
    ]
    return ("t", "alpha", "beta", "gamma", "barrier"), rows, extra


def cmd_transform(config):
    from . import transform as tf

    values = config.values
    if values["lam"] <= 0 or values["sigma"] <= 0:
        raise ConfigError("lam and sigma must be positive")
    funcs = tf.TimeFunctions.constant(values["mu"], values["lam"], values["sigma"])
    columns, rows, extra = _transform_table(funcs, values["b"], values,
                                            values["t1"], values["t2"])
    text = _render("transform", values, columns, rows, extra)
    _emit(text, config["out"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# presets

def _preset_values(overrides, **defaults):
    values = dict(defaults)
    for name in ("paths", "steps", "seed", "grid-l", "k-terms", "points"):
        if overrides.get(name) is not None:
            values[name] = overrides[name]
    return values


def _roots_below(b_tilde, ceiling):
    from . import eigen

    count = max(1, int(ceiling / 2) + 2)
    while True:
        try:
            return eigen.find_eigenvalues(b_tilde, count, ceiling)
        except NotEnoughRoots as exc:
            if exc.found < 1:
                raise
            count = exc.found


def _preset_fig1(outdir, overrides):
    """Eigenvalue spacing against index for several reflecting barriers."""
    from . import eigen

    values = _preset_values(overrides, **{"b": 1.5, "alpha-ceiling": 70.0})
    b = values["b"]
    ceiling = values["alpha-ceiling"]
    rows = []
    for a in (-1.0, -2.0, -3.0, None):
        if a is None:
            alphas = list(_roots_below(b, ceiling))
        else:
            es = eigen.build_reflected_eigensystem(b, a, _reflected_terms(b, a, ceiling))
            alphas = [ak for ak in es.alphas if ak <= ceiling]
        label = float("-inf") if a is None else a
        for k in range(len(alphas) - 1):
            rows.append((label, k + 1, float(alphas[k + 1] - alphas[k])))
    return [("fig1.csv", values, ("a", "k", "gap"), rows, ())]


def _preset_fig2(outdir, overrides):
    """First-passage density curves for a range of reflecting barriers."""
    values = _preset_values(overrides, **{
        "x": 0.0, "b": 1.5, "mu": 0.0, "lam": 1.0, "sigma": 1.0,
        "t-max": 5.0, "points": 200, "quantity": "density", "k-terms": None,
    })
    rows = []
    for a in (-1.0, -2.0, -3.0, None):
        curve = dict(values)
        curve["a"] = a
        _, curve_rows = _fpt_table(curve)
        label = float("-inf") if a is None else a
        rows.extend((label, t, v, e) for t, v, e in curve_rows)
    values["a"] = "-1,-2,-3,-inf"
    return [("fig2.csv", values, ("a", "t", "value", "error_bound"), rows, ())]


def _preset_fig4(outdir, overrides):
    """Series truncation error against its a-priori bound, log scale in mind."""
    from . import eigen, fpt

    values = _preset_values(overrides, **{
        "x": 0.0, "b": 1.0, "lam": 1.0, "t-list": (0.25, 0.5, 1.0),
        "k-min": 5, "k-max": 40,
    })
    x, b, lam = values["x"], values["b"], values["lam"]
    ref_alphas = _roots_below(b, 140.0)
    ref_es = eigen.build_eigensystem(b, len(ref_alphas))
    rows = []
    for t in values["t-list"]:
        ref = fpt.survival_series(ref_es, x, lam * t)
        for K in range(values["k-min"], values["k-max"] + 1):
            es = eigen.build_eigensystem(b, K)
            err = abs(fpt.survival_series(es, x, lam * t) - ref)
            bound = fpt.truncation_error_bound(x, b, lam, t, float(es.alphas[-1]))
            rows.append((t, K, err, bound))
    return [("fig4.csv", values, ("t", "k", "error", "bound"), rows, ())]


def _preset_fig5(outdir, overrides):
    """Series length needed for a stable median against start and barrier."""
    from . import fpt

    values = _preset_values(overrides, **{
        "quantile": 0.5, "rel-tol": 0.05, "alpha-ceiling": 70.0,
    })
    rows = []
    for b in (0.5, 1.0, 1.5, 2.0, 2.5, 3.0):
        for i in range(13):
            x = b - 3.0 + i * (2.9 / 12.0)
            n = fpt.select_truncation(x, b, values["quantile"],
                                      values["rel-tol"], values["alpha-ceiling"])
            rows.append((x, b, n))
    return [("fig5.csv", values, ("x", "b", "n_terms"), rows, ())]


def _preset_fig6(outdir, overrides):
    """Oscillating drift with a matched oscillating barrier; the time change
    flattens the barrier, so the selector should favor the transformation."""
    from . import transform as tf

    values = _preset_values(overrides, **{
        "horizon": 1.0, "points": 200, "beta0": 1.9,
        "t1": 0.02, "t2": 0.14, "alpha0": None, "step": None,
    })
    funcs = tf.TimeFunctions(lambda t: math.sin(10.0 * t),
                             lambda t: 1.0, lambda t: 1.0)
    phase = math.atan(10.0)
    barrier = lambda t: 1.0 + 0.65 * math.sin(10.0 * t + phase)
    columns, rows, extra = _transform_table(funcs, barrier, values,
                                            values["t1"], values["t2"])
    values["barrier"] = "oscillating"
    values["mu"] = "oscillating"
    return [("fig6.csv", values, columns, rows, extra)]


def _preset_fig7(outdir, overrides):
    """Logistic drift ramp under a flat barrier; the time change steepens the
    barrier, so the selector should favor direct approximation."""
    from . import transform as tf

    values = _preset_values(overrides, **{
        "horizon": 8.0, "points": 200, "beta0": 0.0,
        "t1": 5.5, "t2": 7.0, "alpha0": None, "step": None,
    })
    funcs = tf.TimeFunctions(lambda t: 1.0 / (1.0 + math.exp(5.0 - t)),
                             lambda t: 1.0, lambda t: 1.0)
    columns, rows, extra = _transform_table(funcs, 0.5, values,
                                            values["t1"], values["t2"])
    values["barrier"] = 0.5
    values["mu"] = "logistic-ramp"
    return [("fig7.csv", values, columns, rows, extra)]


_TABLE1_PAIRS = ((1.0, 1.0), (1.0, 2.0), (2.0, 1.0), (2.0, 2.0),
                 (2.0, 3.0), (3.0, 2.0), (3.0, 3.0))


def _table_methods(problem, grid, values):
    """quadrature + mc-integration + a shared-skeleton direct MC sweep."""
    from . import crossing, directmc

    rows = []
    res, wall = _run_joint_method("quadrature", problem, grid, values)
    rows.append(("quadrature", res.prob, res.err, wall))
    res, wall = _run_joint_method("mc-integration", problem, grid, values)
    rows.append(("mc-integration", res.prob, res.err, wall))

    counts = values["step-counts"]
    cfg = directmc.MCConfig(values["paths"], max(counts), 1, values["seed"])
    start = time.perf_counter()
    sweep = directmc.direct_mc_sweep(problem, cfg, counts)
    wall = 1000.0 * (time.perf_counter() - start)
    for m in counts:
        rows.append((f"direct-mc-{m}", sweep[m].prob, sweep[m].err, wall))
    return rows


def _preset_table1(outdir, overrides):
    """Two consecutive unit intervals, one barrier pair per row."""
    from .crossing import Direction, Grid, JointProblem

    values = _preset_values(overrides, **{
        "z0": 0.0, "t-grid": (0.0, 1.0, 2.0), "direction": "above",
        "grid-min": -5.0, "grid-max": 5.0, "grid-l": 2001,
        "k-terms": None, "inner-j": 64, "paths": 100_000,
        "step-counts": (500, 1000, 2000), "sets": 1, "seed": 0,
    })
    grid = Grid(values["grid-min"], values["grid-max"], values["grid-l"])
    rows = []
    for b1, b2 in _TABLE1_PAIRS:
        problem = JointProblem(values["z0"], values["t-grid"], (b1, b2),
                               Direction.ALL_ABOVE)
        for method, prob, err, wall in _table_methods(problem, grid, values):
            rows.append((b1, b2, method, prob, err, wall))
    extra = ("# direct-mc rows share one skeleton per (b1,b2); wall_ms is the"
             " sweep total",)
    return [("table1.csv", values, ("b1", "b2", "method", "prob", "err", "wall_ms"),
             rows, extra)]


def _preset_table2(outdir, overrides):
    """Fixed barrier, growing number of consecutive unit intervals."""
    from .crossing import Direction, Grid, JointProblem

    values = _preset_values(overrides, **{
        "z0": 0.0, "b": 2.0, "n-list": (2, 3, 4, 5), "direction": "above",
        "grid-min": -5.0, "grid-max": 5.0, "grid-l": 2001,
        "k-terms": None, "inner-j": 64, "paths": 100_000,
        "step-counts": (500, 1000, 2000), "sets": 1, "seed": 0,
    })
    grid = Grid(values["grid-min"], values["grid-max"], values["grid-l"])
    rows = []
    for n in values["n-list"]:
        problem = JointProblem(values["z0"], tuple(float(i) for i in range(n + 1)),
                               (values["b"],) * n, Direction.ALL_ABOVE)
        for method, prob, err, wall in _table_methods(problem, grid, values):
            rows.append((n, method, prob, err, wall))
    extra = ("# direct-mc rows share one skeleton per n; wall_ms is the sweep"
             " total",)
    return [("table2.csv", values, ("n", "method", "prob", "err", "wall_ms"),
             rows, extra)]


def _preset_fig8(outdir, overrides):
    """Wall time of each method on the two-interval barrier-2 problem."""
    from .crossing import Direction, Grid, JointProblem

    values = _preset_values(overrides, **{
        "z0": 0.0, "t-grid": (0.0, 1.0, 2.0), "barriers": (2.0, 2.0),
        "direction": "above", "method": "all",
        "grid-min": -5.0, "grid-max": 5.0, "grid-l": 2001,
        "k-terms": None, "inner-j": 64, "paths": 200_000, "steps": 1000,
        "sets": 1, "seed": 0,
    })
    grid = Grid(values["grid-min"], values["grid-max"], values["grid-l"])
    problem = JointProblem(values["z0"], values["t-grid"], values["barriers"],
                           Direction.ALL_ABOVE)
    rows = []
    for method in ("quadrature", "mc-integration", "direct-mc"):
        res, wall = _run_joint_method(method, problem, grid, values)
        rows.append((method, res.prob, res.err, wall))
    return [("fig8.csv", values, ("method", "prob", "err", "wall_ms"), rows, ())]


def _preset_fig10(outdir, overrides):
    """Wall time of each method as the interval count grows."""
    from .crossing import Direction, Grid, JointProblem

    values = _preset_values(overrides, **{
        "z0": 0.0, "b": 2.0, "n-list": (2, 3, 4, 5), "direction": "above",
        "grid-min": -5.0, "grid-max": 5.0, "grid-l": 2001,
        "k-terms": None, "inner-j": 64, "paths": 50_000, "steps": 500,
        "sets": 1, "seed": 0,
    })
    grid = Grid(values["grid-min"], values["grid-max"], values["grid-l"])
    rows = []
    for n in values["n-list"]:
        problem = JointProblem(values["z0"], tuple(float(i) for i in range(n + 1)),
                               (values["b"],) * n, Direction.ALL_ABOVE)
        for method in ("quadrature", "mc-integration", "direct-mc"):
            res, wall = _run_joint_method(method, problem, grid, values)
            rows.append((n, method, res.prob, res.err, wall))
    return [("fig10.csv", values, ("n", "method", "prob", "err", "wall_ms"),
             rows, ())]


PRESETS = {
    "table1": _preset_table1,
    "table2": _preset_table2,
    "fig1": _preset_fig1,
    "fig2": _preset_fig2,
    "fig4": _preset_fig4,
    "fig5": _preset_fig5,
    "fig6": _preset_fig6,
    "fig7": _preset_fig7,
    "fig8": _preset_fig8,
    "fig10": _preset_fig10,
}


def cmd_presets(name, outdir, overrides):
    try:
        os.makedirs(outdir, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {outdir}: {exc}") from exc
    written = []
    for fname, values, columns, rows, extra in PRESETS[name](outdir, overrides):
        text = _render(f"presets {name}", values, columns, rows, extra)
        path = os.path.join(outdir, fname)
        _emit(text, path)
        written.append(path)
    for path in written:
        print(path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing and dispatch

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="ou-x",
        description="First-passage and interval-maximum probabilities for "
                    "mean-reverting processes.")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in ("fpt", "joint", "transform"):
        p = sub.add_parser(command)
        p.add_argument("--config", metavar="FILE",
                       help="INI configuration file")
        for key in _KEYS[command]:
            p.add_argument(f"--{key.name}", metavar="V", help=key.help)
    p = sub.add_parser("presets")
    p.add_argument("name", choices=sorted(PRESETS))
    p.add_argument("--out", metavar="DIR", default=".",
                   help="output directory (default: current)")
    for name, help_text in (("paths", "override sample counts"),
                            ("steps", "override monitoring steps"),
                            ("seed", "override the random seed"),
                            ("grid-l", "override the state grid size"),
                            ("k-terms", "override the series length"),
                            ("points", "override curve sample counts"),
                            ("threads", "cap BLAS worker threads")):
        p.add_argument(f"--{name}", metavar="V", help=help_text)
    return parser


_OVERRIDE_PARSERS = {
    "paths": _parse_int,
    "steps": _parse_int,
    "seed": _parse_int,
    "grid-l": _parse_int,
    "k-terms": _parse_optional_int,
    "points": _parse_int,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "presets":
            _apply_threads(_parse_optional_int(args.threads)
                           if args.threads is not None else None)
            overrides = {}
            for name, parse in _OVERRIDE_PARSERS.items():
                raw = getattr(args, name.replace("-", "_"))
                if raw is not None:
                    try:
                        overrides[name] = parse(raw)
                    except ValueError as exc:
                        raise ConfigError(f"bad value for --{name}: {exc}") from exc
            return cmd_presets(args.name, args.out, overrides)
        config = _resolve(args, args.command)
        _apply_threads(config["threads"])
        handler = {"fpt": cmd_fpt, "joint": cmd_joint,
                   "transform": cmd_transform}[args.command]
        return handler(config)
    except ConfigError as exc:
        print(f"ou-x: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERICAL_FAILURES as exc:
        print(f"ou-x: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"ou-x: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
