"""First-passage times and interval-maximum probabilities for OU processes.

Submodules
----------
eigen     special functions, eigenvalues, expansion coefficients
fpt       single-barrier first-passage survival/density and truncation control
transform time-change of inhomogeneous problems to the standardized process
crossing  joint interval-maximum probabilities (quadrature, fast product, MC)
directmc  exact-step path simulation baseline
cli       ou-x command line front end

Submodules load on first attribute access.  The indirection keeps ``import
oux`` cheap and, more importantly, lets the command line front end cap BLAS
thread pools through environment variables before numpy is ever imported.
"""

import importlib

__version__ = "0.1.0"

_SUBMODULES = ("cli", "crossing", "directmc", "eigen", "errors", "fpt", "transform")

__all__ = ["__version__", *_SUBMODULES]


def __getattr__(name):
    if name in _SUBMODULES:
        module = importlib.import_module("." + name, __name__)
        globals()[name] = module
        return module
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(set(globals()) | set(_SUBMODULES))
