"""Replay engine and discovery harness for width-depth test-time controllers."""

import json

from . import _core
from ._core import Error, EvalConfig, SyntheticConfig

__version__ = _core.version()

__all__ = [
    "Error",
    "EvalConfig",
    "SyntheticConfig",
    "cli",
    "default_spec",
    "evaluate",
    "generate_synthetic",
    "replay",
    "resolve_hyperparameters",
    "resolve_spec",
    "run_discovery",
    "sweep",
    "validate_pools",
]


def _spec_text(spec):
    return spec if isinstance(spec, str) else json.dumps(spec)


def _pools_text(pools):
    if isinstance(pools, str):
        return pools
    return "".join(json.dumps(p) + "\n" for p in pools)


def generate_synthetic(config=None, **fields):
    """Synthetic bench as a list of pool records."""
    c = config or SyntheticConfig()
    for name, value in fields.items():
        setattr(c, name, value)
    return [json.loads(line) for line in _core.generate_synthetic(c).splitlines()]


def validate_pools(pools):
    return _core.validate_pools(_pools_text(pools))


def default_spec(kind="round_policy"):
    return json.loads(_core.default_spec(kind))


def resolve_spec(text, overrides=()):
    return json.loads(_core.resolve_spec(_spec_text(text), list(overrides)))


def resolve_hyperparameters(spec, beta):
    return _core.resolve_hyperparameters(_spec_text(spec), beta)


def replay(pool, actions=(), order=(), kappa=0.0):
    """State after applying action labels such as "BRANCH" or "PROBE(1)"."""
    return json.loads(_core.replay(_pools_text([pool]), list(order), list(actions), kappa))


def _eval_config(config, fields):
    c = config or EvalConfig()
    for name, value in fields.items():
        setattr(c, name, value)
    return c


def evaluate(spec, beta, pools, config=None, **fields):
    c = _eval_config(config, fields)
    return json.loads(_core.evaluate(_spec_text(spec), beta, _pools_text(pools), c))


def sweep(spec, pools, config=None, **fields):
    """Scaling curve as a list of dicts, one per beta."""
    c = _eval_config(config, fields)
    lines = _core.sweep(_spec_text(spec), _pools_text(pools), c).splitlines()
    keys = lines[0].split(",")
    return [dict(zip(keys, map(float, row.split(",")))) for row in lines[1:] if row]


def run_discovery(config):
    return json.loads(_core.run_discovery(json.dumps(config)))


def cli(*args):
    return _core.cli([str(a) for a in args])
