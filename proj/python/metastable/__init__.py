"""Mean reaction times between metastable sets.

Exact quantities come from kernel linear algebra; diffusion estimates from
direct simulation or QSD loops plus adaptive multilevel splitting. Scenario
functions return the same report dictionaries the command-line tool writes.
"""

import json as _json
import os as _os

from . import _core
from ._core import (
    Error,
    Kernel,
    bias_report,
    certified_qsd,
    entrance_distribution,
    graph_b,
    hill_identity,
    load_kernel,
    mean_hitting_time,
    mean_hitting_times,
    qsd_spectrum,
    stationary_distribution,
    toy_a1,
    toy_a2,
)

__all__ = [
    "Error",
    "Kernel",
    "analyze",
    "bias_report",
    "birkhoff",
    "certified_qsd",
    "diffusion",
    "entrance_distribution",
    "error_code",
    "graph_b",
    "hill_identity",
    "load_kernel",
    "mean_hitting_time",
    "mean_hitting_times",
    "parse_kernel",
    "qsd_spectrum",
    "reproduce",
    "stationary_distribution",
    "toy_a1",
    "toy_a2",
]


def error_code(exc):
    """The code name of an Error, e.g. "ParseError"."""
    return str(exc).split(":", 1)[0]


def parse_kernel(spec, params=None):
    """Kernel from a dict or JSON text in the kernel file format."""
    text = spec if isinstance(spec, str) else _json.dumps(spec)
    return _core.parse_kernel(text, params or {})


def analyze(kernel, tol=1e-9, seed=None):
    return _json.loads(_core.analyze(kernel, tol, seed))


def reproduce(which, params=None, tol=1e-9):
    return _json.loads(_core.reproduce(which, params or {}, tol))


def diffusion(config, seed=None, workers=None):
    """Run an experiment given as a dict, JSON text or a path to a JSON file."""
    if isinstance(config, dict):
        text = _json.dumps(config)
    elif _os.path.exists(str(config)):
        with open(config) as fh:
            text = fh.read()
    else:
        text = config
    return _json.loads(_core.diffusion(text, seed, workers))


def birkhoff(kernel, target_tv=1e-8, seed=None):
    return _json.loads(_core.birkhoff(kernel, target_tv, seed))
