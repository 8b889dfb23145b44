"""Run configuration: a JSON document validated against a schema, turned into model objects."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import jsonschema

from .errors import DomainError, ModelError
from .kernel import MarketParams, kernel_from_market
from .preferences import (
    Identity,
    PowerHead,
    Tabulated,
    TverskyKahneman,
    TwoPieceCRRA,
    build_reversed_s,
    reversed_s_from_params,
)

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

DISTORTION_SCHEMA = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["identity", "reversed-s", "tversky-kahneman", "power-head", "tabulated"]},
        "c0": _POS,
        "a": _NUM,
        "b": _NUM,
        "gamma": {"type": "number", "exclusiveMinimum": 0.28, "maximum": 1},
        "exponent": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "knot": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "p": {"type": "array", "items": _NUM, "minItems": 2},
        "t": {"type": "array", "items": _NUM, "minItems": 2},
        "unrestricted": {"type": "boolean"},
    },
    "allOf": [
        {"if": {"properties": {"type": {"const": "reversed-s"}}}, "then": {"required": ["c0", "a", "b"]}},
        {"if": {"properties": {"type": {"const": "tversky-kahneman"}}}, "then": {"required": ["gamma"]}},
        {"if": {"properties": {"type": {"const": "tabulated"}}}, "then": {"required": ["p", "t"]}},
    ],
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "required": ["market", "utility", "t_plus", "t_minus", "x0"],
    "properties": {
        "market": {
            "type": "object",
            "required": ["r", "B", "sigma", "T"],
            "properties": {
                "r": _NUM,
                "B": {"type": "array", "items": _NUM, "minItems": 1},
                "sigma": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 1}, "minItems": 1},
                "T": _POS,
            },
            "additionalProperties": False,
        },
        "utility": {
            "type": "object",
            "required": ["type", "alpha", "k_minus"],
            "properties": {
                "type": {"const": "crra"},
                "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "k_minus": _POS,
            },
            "additionalProperties": False,
        },
        "t_plus": DISTORTION_SCHEMA,
        "t_minus": DISTORTION_SCHEMA,
        "x0": _NUM,
        "waive": {"type": "array", "items": {"type": "string"}},
        "options": {
            "type": "object",
            "properties": {
                "grid": {"type": "integer", "minimum": 16, "maximum": 100000},
                "tol": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
                "seed": {"type": "integer", "minimum": 0},
                "times": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "rho_points": {"type": "integer", "minimum": 2, "maximum": 100000},
                "oracle_n": {"type": "integer", "minimum": 8, "maximum": 400},
                "oracle_scheme": {"enum": ["equal-prob", "stratified-tail"]},
                "frontier_x0": {"type": "array", "items": _NUM, "minItems": 1},
                "samples": {"type": "integer", "minimum": 0, "maximum": 1000000},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """Schema or model-construction failure; field names the offending entry."""

    def __init__(self, message, field="?"):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class Options:
    grid: int = 512
    tol: float = 0.01
    seed: int = 0
    times: tuple = (0.0, 0.25, 0.5, 0.75)
    rho_points: int = 41
    oracle_n: int = 200
    oracle_scheme: str = "stratified-tail"
    frontier_x0: tuple = (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0)
    samples: int = 1000


@dataclass
class RunConfig:
    market: MarketParams
    utility: TwoPieceCRRA
    t_plus: object
    t_minus: object
    x0: float
    waive: tuple = ()
    options: Options = field(default_factory=Options)
    raw: Optional[dict] = None

    def model(self, x0=None):
        from .solver import BehavioralModel

        return BehavioralModel.build(self.market, self.utility, self.t_plus, self.t_minus,
                                     self.x0 if x0 is None else x0, self.waive)


def _distortion(entry, kernel, where):
    kind = entry["type"]
    try:
        if kind == "identity":
            return Identity()
        if kind == "reversed-s":
            make = reversed_s_from_params if entry.get("unrestricted") else build_reversed_s
            return make(kernel, entry["c0"], entry["a"], entry["b"])
        if kind == "tversky-kahneman":
            return TverskyKahneman(entry["gamma"])
        if kind == "power-head":
            return PowerHead(entry.get("exponent", 0.25), entry.get("knot", 0.5))
        return Tabulated(entry["p"], entry["t"])
    except (DomainError, ModelError) as exc:
        raise ConfigError(str(exc), where) from None


def parse_config(doc: dict) -> RunConfig:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "(root)"
        raise ConfigError(exc.message, where) from None
    mk = doc["market"]
    try:
        market = MarketParams(mk["r"], mk["B"], mk["sigma"], mk["T"])
        kernel = kernel_from_market(market)
    except (DomainError, ModelError, ValueError) as exc:
        raise ConfigError(str(exc), "market") from None
    ut = doc["utility"]
    utility = TwoPieceCRRA(ut["alpha"], ut["k_minus"])
    opts = Options(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in doc.get("options", {}).items()})
    return RunConfig(
        market=market,
        utility=utility,
        t_plus=_distortion(doc["t_plus"], kernel, "t_plus"),
        t_minus=_distortion(doc["t_minus"], kernel, "t_minus"),
        x0=float(doc["x0"]),
        waive=tuple(doc.get("waive", ())),
        options=opts,
        raw=doc,
    )


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(str(exc), "--config") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", f"line {exc.lineno}") from None
    return parse_config(doc)
