"""JSON schemas for the command-line job files (unknown keys are rejected)."""

from __future__ import annotations

SCHEMA_VERSION = 1

_num = {"type": "number"}
_nonneg = {"type": "number", "minimum": 0}
_complex = {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}]}


def _obj(props: dict, required: tuple = ()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


HILBERT = _obj({
    "dim_fock": {"type": "integer", "minimum": 16},
    "leakage_buffer": {"type": "integer", "minimum": 1},
    "leakage_tol": {"type": "number", "exclusiveMinimum": 0},
})

MODE = {"oneOf": [
    {"type": "string", "pattern": "^(full|ld[1-4]?)$"},
    _obj({"kind": {"enum": ["ld", "full"]}, "order": {"type": "integer", "minimum": 1, "maximum": 4},
          "series": {"enum": ["exact", "printed"]}, "prefactor": {"type": ["boolean", "null"]}}),
]}

ROUND = _obj({
    "t1": _nonneg, "t1p": _nonneg, "t3": _nonneg, "t2": _nonneg,
    "beta": _num, "r": _num, "r_db": _num,
}, ("t1p", "t3"))

PER_K = {"type": "object", "patternProperties": {"^[1-9]$": _num}, "additionalProperties": False}

PROTOCOL = _obj({
    "name": {"type": "string"},
    "sequence": {"enum": ["cubic", "quartic", "simultaneous"]},
    "eta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    "nu": {"type": "number", "exclusiveMinimum": 0},
    "rabi_scale": {"type": "number", "exclusiveMinimum": 0},
    "omegas": PER_K,
    "phases": PER_K,
    "modes": {"oneOf": [{"const": "table1"},
                        {"type": "object", "patternProperties": {"^[1-9]$": MODE},
                         "additionalProperties": False}]},
    "h3": {"enum": ["full", "ld"]},
    "qubit_init": {"enum": ["plus_y", "minus_y"]},
    "displacement": {"enum": ["ideal", "sideband"]},
    "displacement_cost": _nonneg,
    "n_rounds": {"type": "integer", "minimum": 1},
    "rounds": {"type": "array", "items": ROUND, "minItems": 1},
    "pre_squeeze": _num,
    "quartic": _obj({k: _num for k in ("t2", "phi2", "t4", "phi4", "theta", "r_pre", "r_post")},
                    ("t2", "phi2", "t4", "phi4", "theta", "r_pre", "r_post")),
    "simultaneous": _obj({"t": _nonneg, "beta": _num, "r": _num, "t2": _nonneg}, ("t",)),
})

TARGET = _obj({"j": {"enum": [3, 4]}, "zeta": _num, "basis": {"enum": ["X", "P"]}})

INPUT = _obj({"alpha": _complex, "nbar": _nonneg, "weight": {"type": "number", "exclusiveMinimum": 0}})

NOISE = _obj({
    "name": {"type": "string"},
    "heating_rate": _nonneg,
    "coherence_time": {"type": ["number", "null"], "exclusiveMinimum": 0},
    "step": {"type": "number", "exclusiveMinimum": 0},
    "dephase_mode": {"enum": ["end-of-block", "per-step"]},
    "heating_mode": {"enum": ["kraus", "lindblad"]},
    "dephase_factor": {"type": "number", "exclusiveMinimum": 0},
})

WIGNER = _obj({"extent": {"type": "number", "exclusiveMinimum": 0},
               "points": {"type": "integer", "minimum": 11},
               "auto_extend": {"type": "boolean"}})

CUT = _obj({"slope": _num, "intercept": _num,
            "q_range": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
            "points": {"type": "integer", "minimum": 2}})

XI_RANGE = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

ALPHAS = {"oneOf": [
    {"type": "array", "items": _complex, "minItems": 1},
    _obj({"start": _num, "stop": _num, "num": {"type": "integer", "minimum": 1},
          "axis": {"enum": ["real", "imag"]}}, ("start", "stop", "num")),
]}

_common = {"schema_version": {"const": SCHEMA_VERSION}, "description": {"type": "string"},
           "hilbert": HILBERT, "target": TARGET}

SIMULATE = _obj({**_common, "protocol": PROTOCOL, "input": INPUT, "noise": NOISE,
                 "wigner": WIGNER, "cut": CUT, "xi_range": XI_RANGE}, ("protocol",))

SWEEP = _obj({**_common, "protocol": PROTOCOL, "alphas": ALPHAS, "noise": NOISE,
              "xi_range": XI_RANGE}, ("protocol", "alphas"))

NOISE_STUDY = _obj({**_common, "protocol": PROTOCOL, "alphas": ALPHAS,
                    "models": {"type": "array", "items": NOISE, "minItems": 1}},
                   ("protocol", "alphas", "models"))

PERTURB = _obj({**_common, "protocol": PROTOCOL, "input": INPUT,
                "magnitude": _nonneg, "trials": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"}}, ("protocol", "magnitude", "trials"))

VARIANCE_SCAN = _obj({**_common, "protocol": PROTOCOL, "input": INPUT,
                      "xi": _obj({"start": _num, "stop": _num, "num": {"type": "integer", "minimum": 3}},
                                 ("start", "stop", "num")),
                      "xi_range": XI_RANGE}, ("protocol",))

DIFF_MAP = _obj({**_common, "input": INPUT,
                 "n_max_display": {"type": "integer", "minimum": 1},
                 "protocols": {"type": "array", "minItems": 1,
                               "items": _obj({"label": {"type": "string"}, "protocol": PROTOCOL},
                                             ("label", "protocol"))}},
                ("protocols",))

DE = _obj({"population": {"type": "integer", "minimum": 4},
           "mutation": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
           "crossover": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
           "tol": {"type": "number", "exclusiveMinimum": 0},
           "patience": {"type": "integer", "minimum": 1},
           "max_iters": {"type": "integer", "minimum": 1},
           "seed": {"type": "integer"},
           "workers": {"type": "integer", "minimum": 1},
           "per_dimension": {"type": "boolean"}})

BOUND = _obj({"name": {"type": "string"}, "lower": _num, "upper": _num}, ("name", "lower", "upper"))

OPTIMIZE = _obj({
    **_common,
    "template": _obj({"kind": {"enum": ["cubic", "quartic", "simultaneous", "sphere"]},
                      "n_rounds": {"type": "integer", "minimum": 1},
                      "presqueeze": {"type": "boolean"},
                      "dimension": {"type": "integer", "minimum": 1},
                      "protocol": PROTOCOL}, ("kind",)),
    "bounds": {"type": "array", "items": BOUND},
    "objective": _obj({"kind": {"enum": ["single-state-fidelity", "ensemble-average", "thermal-input"]},
                       "inputs": {"type": "array", "items": INPUT, "minItems": 1}}),
    "noise": NOISE,
    "de": DE,
    "verify_dim": {"type": "integer", "minimum": 16},
}, ("template",))

COMMANDS = {
    "simulate": SIMULATE, "sweep": SWEEP, "noise-study": NOISE_STUDY, "perturb": PERTURB,
    "variance-scan": VARIANCE_SCAN, "diff-map": DIFF_MAP, "optimize": OPTIMIZE,
}
