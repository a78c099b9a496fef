"""TOML experiment configs validated against a JSON schema."""

import json
from importlib import resources

import jsonschema

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .engine import ExperimentConfig, config_digest
from .exceptions import BerrymixError, ConfigError
from .processes import process_from_dict
from .statistics import make_statistic

_DIST = {
    "type": "object",
    "required": ["name"],
    "properties": {
        "name": {"enum": ["normal", "rademacher", "uniform", "gamma", "bernoulli", "student_t", "lognormal"]},
        "shape": {"type": "number", "exclusiveMinimum": 0},
        "p": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "df": {"type": "number", "exclusiveMinimum": 2},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}

_PROCESS = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["iid", "mdependent", "polynomial", "markov", "scaled"]},
        "dists": {"type": "array", "items": _DIST, "minItems": 1},
        "dist": _DIST,
        "window": {"type": "integer", "minimum": 0},
        "weights": {"type": "array", "items": {"type": "number"}},
        "transform": {"enum": ["identity", "tanh", "cube", "sign", "square"]},
        "lookback_law": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "lookback_coef": {"type": "number"},
        "decay_model": {
            "type": "object",
            "properties": {"K": {"type": "number"}, "p": {"type": "number"}},
            "required": ["K", "p"],
        },
        "target_p": {"type": "number", "exclusiveMinimum": 0},
        "K": {"type": "number", "exclusiveMinimum": 0},
        "max_lag": {"type": "integer", "minimum": 1},
        "coef": {"type": "number"},
        "initial_law": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "transitions": {"type": "array", "minItems": 1},
        "observable": {"type": "array"},
        "inner": {"$ref": "#/definitions/process"},
        "schedule": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["constant", "linear", "periodic"]},
                "base": {"type": "number"},
                "slope": {"type": "number"},
                "values": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "berrymix experiment",
    "definitions": {"process": _PROCESS},
    "type": "object",
    "required": ["process", "N_grid"],
    "properties": {
        "name": {"type": "string"},
        "root_seed": {"type": "integer", "minimum": 0},
        "n_paths": {"type": "integer", "minimum": 1000},
        "N_grid": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
        "rate_model": {"enum": ["polynomial", "log-power"]},
        "normalization": {"enum": ["sigma", "sd"]},
        "eps_p": {"type": "number", "minimum": 0},
        "A": {"type": "number", "exclusiveMinimum": 0},
        "dimension": {"type": "integer", "minimum": 1, "maximum": 8},
        "dkw_level": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "plot": {"type": "boolean"},
        "chunk_size": {"type": "integer", "minimum": 1},
        "process": {"$ref": "#/definitions/process"},
        "statistic": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["linear", "ustatistic", "studentized", "function_of_mean"]},
                "kernel": {"enum": ["product", "centered_quadratic", "sum", "zero"]},
                "window": {"type": "integer", "minimum": 1},
                "window_exponent": {"type": "number", "exclusiveMinimum": 0},
                "H": {"enum": ["linear", "square", "quadratic", "sin_sum"]},
            },
            "additionalProperties": False,
        },
        "blocks": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["two-step", "gaps", "bounded-summand"]},
                "tau": {"type": "number", "exclusiveMinimum": 0},
                "tau_exponent": {"type": "number", "exclusiveMinimum": 0},
                "exceptional": {"type": "boolean"},
                "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 2},
                "beta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 2},
                "A": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "gamma": {
            "type": "object",
            "properties": {
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "max_pairs": {"type": "integer", "minimum": 1},
                "paths": {"type": "integer", "minimum": 2},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


def schema_json():
    return json.dumps(SCHEMA, indent=2, sort_keys=True)


def validate_document(doc):
    """Raise :class:`ConfigError` naming the path of the first offending field."""
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        e = errors[0]
        raise ConfigError(e.message, path=tuple(e.absolute_path))
    grid = doc["N_grid"]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("must be strictly increasing", path=("N_grid",))
    try:
        process_from_dict(doc["process"])
    except (BerrymixError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path=("process",)) from None
    try:
        make_statistic(doc.get("statistic", {"kind": "linear"}))
    except (BerrymixError, TypeError) as exc:
        raise ConfigError(str(exc), path=("statistic",)) from None
    return doc


def config_from_document(doc, seed=None, threads=1):
    validate_document(doc)
    kw = {k: v for k, v in doc.items() if k not in ("process", "N_grid")}
    if seed is not None:
        kw["root_seed"] = seed
    kw.setdefault("statistic", {"kind": "linear"})
    try:
        return ExperimentConfig(process=doc["process"], N_grid=tuple(doc["N_grid"]), threads=threads, **kw)
    except BerrymixError as exc:
        raise ConfigError(str(exc)) from None


def load_document(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=(str(path),)) from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}", path=(str(path),)) from None


def load_config(path, seed=None, threads=1):
    return config_from_document(load_document(path), seed, threads)


def document_digest(doc):
    """Digest invariant to key order and whitespace of the source document."""
    return config_digest(doc)


def example_config_path(name="mdep_linear.toml"):
    return resources.files("berrymix") / "data" / name
