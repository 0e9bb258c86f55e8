"""Plot-ready CSV tables and the JSON summary.

Every CSV holds one quantity. Its `#` lines name the quantity, document the
columns and carry the calibration notice; floats are written with repr so
identical runs give identical bytes.
"""

import csv
import json
import logging
from pathlib import Path

import numpy as np
from jsonschema import Draft7Validator
from jsonschema.exceptions import best_match

from memlab.utils import InvalidInputError

NOTICE = (
    "constants are desk-calibrated: reference exponents are asymptotic bounds "
    "with unquantified constants, verdict tolerances are configurable"
)

_fit = {
    "type": "object",
    "required": ["slope", "stderr", "reference", "side", "passed"],
    "properties": {
        "slope": {"type": "number"},
        "stderr": {"type": "number"},
        "reference": {"type": ["number", "null"]},
        "side": {"enum": ["both", "lower", "upper"]},
        "passed": {"type": "boolean"},
    },
}

SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["command", "config", "exit_code", "notice", "runs", "fits", "checks"],
    "additionalProperties": False,
    "properties": {
        "command": {"type": "string"},
        "config": {"type": "string"},
        "exit_code": {"type": "integer", "minimum": 0},
        "notice": {"type": "string"},
        "runs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["mode", "n", "delta", "N", "status", "exit_code"],
                "properties": {
                    "mode": {"type": "string"},
                    "n": {"type": "integer"},
                    "delta": {"type": "number"},
                    "N": {"type": "integer"},
                    "status": {"enum": ["ok", "failed", "skipped"]},
                    "exit_code": {"type": "integer"},
                    "final_t": {"type": ["number", "null"]},
                    "min_g": {"type": ["number", "null"]},
                    "error": {"type": "string"},
                    "outputs": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
        "fits": {"type": "object", "additionalProperties": _fit},
        "checks": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["value", "threshold", "passed"],
                "properties": {
                    "value": {"type": ["number", "null"]},
                    "threshold": {"type": ["number", "null"]},
                    "passed": {"type": "boolean"},
                },
            },
        },
        "provenance": {"type": "object"},
        "suites": {"type": "object"},
    },
}


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, tuple):
        return ".".join(str(v) for v in value) or "-"
    return str(value)


def write_table(path, quantity, columns, rows):
    """Write one quantity. `columns` is a list of (name, description) pairs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        f.write(f"# quantity={quantity}\n")
        for name, description in columns:
            f.write(f"# column {name}: {description}\n")
        f.write(f"# note={NOTICE}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow([name for name, _ in columns])
        for row in rows:
            w.writerow([_cell(v) for v in row])
    logging.debug("wrote %d rows of %s to %s", len(rows), quantity, path)
    return path


def _parse(value):
    try:
        return float(value)
    except ValueError:
        return value


def read_table(path):
    """(header lines, column names, rows) with numeric cells parsed to float."""
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"table not found: {path}")
    with path.open(newline="", encoding="utf-8") as f:
        lines = f.read().splitlines()
    meta = [line[2:] for line in lines if line.startswith("# ")]
    body = [line for line in lines if not line.startswith("#")]
    reader = csv.reader(body)
    columns = next(reader)
    return meta, columns, [[_parse(v) for v in row] for row in reader]


def fit_entry(fit):
    return {
        "slope": float(fit.slope),
        "stderr": float(fit.stderr),
        "reference": None if fit.reference is None else float(fit.reference),
        "side": fit.side,
        "passed": bool(fit.passed),
    }


def check_entry(value, threshold, passed):
    value = None if value is None or not np.isfinite(value) else float(value)
    return {"value": value, "threshold": threshold, "passed": bool(passed)}


def validate_summary(summary):
    error = best_match(Draft7Validator(SUMMARY_SCHEMA).iter_errors(summary))
    if error is not None:
        path = ".".join(str(p) for p in error.absolute_path) or "<root>"
        raise InvalidInputError(f"summary {path}: {error.message}")


def write_summary(path, summary):
    summary = dict(summary, notice=NOTICE)
    validate_summary(summary)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def monitor_rows(records):
    return [(r.t, r.min_g, r.max_speed, r.gauge_residual, r.sup_phi, r.sup_dphi) for r in records]


MONITOR_COLUMNS = [
    ("t", "time of the record"),
    ("min_g", "minimum of 1 + Q over the grid"),
    ("max_speed", "largest characteristic speed"),
    ("gauge_residual", "discrete L2 norm of the wave-gauge identity"),
    ("sup_phi", "sup |phi|"),
    ("sup_dphi", "sup of |d_t phi| and |d_r phi|"),
]

FLUX_COLUMNS = [
    ("multiplier", "multiplier vector field"),
    ("word", "commuting word, '-' for phi itself"),
    ("u", "outgoing cone bounding the region"),
    ("ub", "incoming cone bounding the region"),
    ("u0", "outer outgoing cone"),
    ("t0", "initial slice"),
    ("outgoing", "flux through C_u"),
    ("incoming", "flux through the incoming cone"),
    ("initial", "flux through the initial slice"),
    ("outer", "flux through C_u0"),
    ("bulk", "spacetime integral of the divergence"),
    ("residual", "absolute residual of the energy identity"),
    ("relative_residual", "residual over the flux scale"),
    ("margin", "smallest flux density sample, >= 0 when positive"),
]


def flux_rows(reports):
    return [
        (
            rep.multiplier, rep.word, rep.u, rep.ub, rep.u0, rep.t0, rep.outgoing, rep.incoming,
            rep.initial, rep.outer, rep.bulk, rep.residual, rep.relative_residual, rep.margin,
        )
        for rep in reports
    ]


FIT_COLUMNS = [
    ("quantity", "fitted quantity"),
    ("slope", "least-squares log-log slope"),
    ("stderr", "standard error of the slope"),
    ("reference", "reference exponent or bound"),
    ("side", "both, lower or upper"),
    ("passed", "verdict"),
]


def fit_rows(fits):
    return [
        (name, fit.slope, fit.stderr, "" if fit.reference is None else fit.reference, fit.side, fit.passed)
        for name, fit in sorted(fits.items())
    ]


CONSTRAINT_COLUMNS = [
    ("family", "constraint family"),
    ("k", "weighted radial order"),
    ("l", "angular order"),
    ("m", "extra weighted radial order"),
    ("value", "sup over the shell"),
]
