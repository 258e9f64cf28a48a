"""Selection between the compiled chain kernel and the pure-Python sweep.

The compiled extension is optional: if it failed to build, everything
falls back to numpy.  ``FRIGIBBS_BACKEND=python`` forces the fallback.
"""

import os

from .errors import InvalidConfigError

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

ENV_VAR = "FRIGIBBS_BACKEND"
BACKENDS = ("compiled", "python")


def compiled_available() -> bool:
    return _core is not None


def default_backend() -> str:
    requested = os.environ.get(ENV_VAR, "").strip().lower()
    if requested:
        return resolve(requested)
    return "compiled" if compiled_available() else "python"


def resolve(name=None) -> str:
    if name is None:
        return default_backend()
    if name not in BACKENDS:
        raise InvalidConfigError(f"unknown backend {name!r}; choose from {BACKENDS}")
    if name == "compiled" and not compiled_available():
        raise InvalidConfigError("compiled backend requested but frigibbs._core is not built")
    return name


def core():
    return _core
