"""Run configuration: a TOML file merged over defaults and validated against a JSON Schema."""

import copy
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import tomlkit
from jsonschema import Draft7Validator
from jsonschema.exceptions import best_match
from tomlkit.exceptions import ParseError

from memlab.shortpulse import FAMILIES, PulseProfile, RrmeSettings
from memlab.solver import GridSpec, radial_grid
from memlab.utils import DPATH, InvalidInputError

DEFAULTS = """
[run]
mode = "radial"
n = 3
delta = 0.1
deltas = []
t_end = 6.0
cfl = 0.4
provenance = "direct"

[grid]
N = 1024
r_max = "auto"
x_min = -1.0
x_max = 8.0

[profile]
family = "exp"
p = 6
c0 = 1.0
c1 = 1.0
width = 1.0

[diagnostics]
cones = [0.0, 0.5, 1.0]
multipliers = ["dt", "Lbt", "Lt"]
letters = ["dt", "S"]
max_order = 1
stations = 6
history_stride = 4
energy_resolution = 32

[rrme]
N = 1600
margin = 0.1
slab_dt = 0.005
cfl = 0.4
cells_per_delta = 0

[chart]
dt = 0.2
cells_per_delta = 40

[output]
directory = "auto"
checkpoint_stride = 0
deterministic = true

[verify]
seed = 0
tolerance_scale = 1.0
samples = 0
suites = []

[thresholds]
fit_tolerance = 0.15
min_g = 0.5
uniform_ratio = 3.0
null_cone = 1e-8
jet_bound = 50.0
chart = 5e-2

[thresholds.bounds]
L_sup = 0.9
Lb_last_slice = 0.7
Lb_decay = 0.8
region_one = 0.6
energy_Lbt = 0.9
energy_Lt = 1.8
"""

_delta = {"type": "number", "exclusiveMinimum": 0, "maximum": 0.25}
_positive = {"type": "number", "exclusiveMinimum": 0}
_count = {"type": "integer", "minimum": 1}


def _section(properties):
    return {"type": "object", "additionalProperties": False, "properties": properties}


SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "run": _section(
            {
                "mode": {"enum": ["planar", "radial"]},
                "n": {"type": "integer", "minimum": 1, "maximum": 3},
                "delta": _delta,
                "deltas": {"type": "array", "items": _delta},
                "t_end": {"type": "number", "minimum": 1},
                "cfl": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
                "provenance": {"enum": ["direct", "rrme"]},
            }
        ),
        "grid": _section(
            {
                "N": {"type": "integer", "minimum": 16},
                "r_max": {"anyOf": [{"const": "auto"}, _positive]},
                "x_min": {"type": "number"},
                "x_max": {"type": "number"},
            }
        ),
        "profile": _section(
            {
                "family": {"enum": list(FAMILIES)},
                "p": {"type": "integer", "minimum": 4},
                "c0": {"type": "number"},
                "c1": {"type": "number"},
                "width": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            }
        ),
        "diagnostics": _section(
            {
                "cones": {"type": "array", "items": {"type": "number"}},
                "multipliers": {"type": "array", "items": {"enum": ["dt", "Lt", "Lbt"]}},
                "letters": {"type": "array", "items": {"enum": ["dt", "dr", "B", "S"]}},
                "max_order": {"type": "integer", "minimum": 0, "maximum": 2},
                "stations": {"type": "integer", "minimum": 3},
                "history_stride": _count,
                "energy_resolution": {"type": "integer", "minimum": 4},
            }
        ),
        "rrme": _section(
            {
                "N": {"type": "integer", "minimum": 16},
                "margin": {"type": "number", "minimum": 0},
                "slab_dt": _positive,
                "cfl": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
                "cells_per_delta": {"type": "integer", "minimum": 0},
            }
        ),
        "chart": _section({"dt": _positive, "cells_per_delta": {"type": "integer", "minimum": 0}}),
        "output": _section(
            {
                "directory": {"type": "string", "minLength": 1},
                "checkpoint_stride": {"type": "integer", "minimum": 0},
                "deterministic": {"type": "boolean"},
            }
        ),
        "verify": _section(
            {
                "seed": {"type": "integer", "minimum": 0},
                "tolerance_scale": _positive,
                "samples": {"type": "integer", "minimum": 0},
                "suites": {"type": "array", "items": {"type": "string"}},
            }
        ),
        "thresholds": _section(
            {
                "fit_tolerance": {"type": "number", "minimum": 0},
                "min_g": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "uniform_ratio": {"type": "number", "minimum": 1},
                "null_cone": _positive,
                "jet_bound": _positive,
                "chart": _positive,
                "bounds": _section(
                    {
                        key: {"type": "number"}
                        for key in ("L_sup", "Lb_last_slice", "Lb_decay", "region_one", "energy_Lbt", "energy_Lt")
                    }
                ),
            }
        ),
    },
}

_validator = Draft7Validator(SCHEMA)


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _field_path(error):
    path = ".".join(str(p) for p in error.absolute_path)
    if error.validator == "additionalProperties":
        extra = sorted(set(error.instance) - set(error.schema.get("properties", {})))
        path = ".".join(p for p in (path, *extra) if p)
    return path or "<root>"


def validate(document, source="<config>"):
    error = best_match(_validator.iter_errors(document))
    if error is not None:
        raise InvalidInputError(f"{source}: {_field_path(error)}: {error.message}")
    run = document["run"]
    if run["mode"] == "planar" and run["n"] != 1:
        raise InvalidInputError(f"{source}: run.n: planar runs have n = 1, got {run['n']}")
    if run["mode"] == "radial" and run["n"] not in (2, 3):
        raise InvalidInputError(f"{source}: run.n: radial runs need n in (2, 3), got {run['n']}")
    grid = document["grid"]
    if run["mode"] == "planar" and not grid["x_max"] > grid["x_min"]:
        raise InvalidInputError(f"{source}: grid.x_max: must exceed grid.x_min")
    if len(run["deltas"]) == 1:
        raise InvalidInputError(f"{source}: run.deltas: a sweep needs at least two values")


def parse_config(text, source="<config>"):
    """RunConfig from TOML text; syntax errors carry line and column."""
    try:
        user = tomlkit.parse(text).unwrap()
    except ParseError as e:
        raise InvalidInputError(f"{source}: line {e.line}, column {e.col}: {e}")
    document = _merge(tomlkit.parse(DEFAULTS).unwrap(), user)
    validate(document, source)
    return RunConfig(document, source)


def load_config(path=None):
    if path is None:
        return parse_config("", "<defaults>")
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), str(path))


@dataclass(frozen=True)
class RunConfig:
    document: dict
    source: str = "<defaults>"

    def __getitem__(self, section):
        return self.document[section]

    @property
    def mode(self):
        return self["run"]["mode"]

    @property
    def n(self):
        return self["run"]["n"]

    @property
    def delta(self):
        return float(self["run"]["delta"])

    @property
    def deltas(self):
        """Sweep values, sorted; a single run is a sweep of one."""
        return sorted(float(d) for d in self["run"]["deltas"]) or [self.delta]

    @property
    def t_end(self):
        return float(self["run"]["t_end"])

    @property
    def output_dir(self):
        """The data folder of the package conf when the directory is "auto"."""
        directory = self["output"]["directory"]
        return DPATH if directory == "auto" else Path(directory)

    def with_overrides(self, delta=None, out=None):
        """Copy with CLI overrides applied; --delta collapses a sweep list."""
        document = copy.deepcopy(self.document)
        if delta is not None:
            document["run"]["delta"] = delta
            document["run"]["deltas"] = []
        if out is not None:
            document["output"]["directory"] = str(out)
        validate(document, self.source)
        return RunConfig(document, self.source)

    def for_delta(self, delta):
        return self.with_overrides(delta=delta)

    def to_toml(self):
        return tomlkit.dumps(self.document)

    def grid(self):
        g = self["grid"]
        if self.mode == "planar":
            return GridSpec("planar", 1, float(g["x_min"]), float(g["x_max"]), g["N"])
        if g["r_max"] == "auto":
            return radial_grid(self.n, g["N"], self.t_end)
        return GridSpec("radial", self.n, 0.0, float(g["r_max"]), g["N"])

    def profile(self):
        return PulseProfile(**self["profile"])

    def rrme_settings(self):
        return RrmeSettings(**self["rrme"])

    def chart_settings(self):
        """Rescaled solve behind the chart comparison, resolved by chart.cells_per_delta."""
        return replace(self.rrme_settings(), cells_per_delta=self["chart"]["cells_per_delta"])

    def cones(self, delta=None):
        """Outgoing cones u = c delta for the configured multiples c."""
        delta = self.delta if delta is None else delta
        return tuple(float(c) * delta for c in self["diagnostics"]["cones"])

    def stations(self, delta=None):
        """Geometric ub stations along the pulse, inside the evolved range."""
        delta = self.delta if delta is None else delta
        return np.geomspace(1.0 + delta, self.t_end - 2 * delta, self["diagnostics"]["stations"])

    def words(self):
        letters = self["diagnostics"]["letters"]
        if self.mode == "radial":
            letters = [z for z in letters if z in ("dt", "S")]
        order = self["diagnostics"]["max_order"]
        words = [()]
        if order >= 1:
            words += [(z,) for z in letters]
        if order >= 2:
            words += [(a, b) for a in letters for b in letters]
        return words
