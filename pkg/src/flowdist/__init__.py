"""Flow-adapted distances, directional Lipschitz extension, and
continuity-equation cross-validation on discretized vector fields."""

import importlib

__version__ = "0.1.0"

_SUBMODULES = (
    "cli",
    "config",
    "errors",
    "extension",
    "fields",
    "figures",
    "flow",
    "flownet",
    "geometry",
    "metric",
    "reporting",
    "sobolev",
    "transport",
)

__all__ = list(_SUBMODULES) + ["__version__"]


def __getattr__(name):
    # lazy submodule loading keeps `flowdist.cli` importable before numpy
    # spins up, so its thread-count env override can take effect
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(__all__)
