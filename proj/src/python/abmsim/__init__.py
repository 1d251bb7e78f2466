"""Python bindings for the abmsim simulator.

Configs may be passed as dicts or JSON strings; results come back as dicts.
"""

import json as _json

from . import _abmsim
from ._abmsim import ConfigError, Error, UsageError, infection_probability, version

__all__ = [
    "ConfigError",
    "Error",
    "UsageError",
    "calibrate_self",
    "cli",
    "config_hash",
    "counterfactual",
    "infection_probability",
    "normalize_config",
    "prospective_sweep",
    "simulate",
    "version",
]


def _text(obj):
    return obj if isinstance(obj, str) else _json.dumps(obj)


def normalize_config(config):
    return _abmsim.normalize_config(_text(config))


def config_hash(config):
    return _abmsim.config_hash(_text(config))


def simulate(config, seed):
    return _abmsim.simulate(_text(config), seed)


def counterfactual(config, seed, patch, n_seeds=10):
    return _abmsim.counterfactual(_text(config), seed, _text(patch), n_seeds)


def prospective_sweep(config, seed, protocol_b, grid, field="first_dose_efficacy", n_seeds=1):
    return _abmsim.prospective_sweep(_text(config), seed, _text(protocol_b), field, list(grid), n_seeds)


def calibrate_self(config, seed, epochs=100, lr=0.02, hidden=32, iur_source="observed"):
    return _abmsim.calibrate_self(_text(config), seed, epochs, lr, hidden, iur_source)


def cli(args):
    return _abmsim.cli([str(a) for a in args])
