"""Pipeline configuration: schema, defaults and strict validation.

A configuration is a JSON document with an explicit ``version``. Every
section is optional except ``objectives``; missing keys take the
defaults below and unknown keys are rejected.
"""

import copy
import hashlib
import json
from dataclasses import dataclass

from .exceptions import ConfigError
from .oracle import BUMP_FAMILIES

CONFIG_VERSION = 1

OUTPUT_KINDS = {"loss": "scalar", "mass_flow": "scalar", "mach": "vector"}
WEIGHT_REGIONS = ("peak", "leading_edge")

DEFAULTS = {
    "version": CONFIG_VERSION,
    "oracle": {"d": 20, "n_nodes": 128, "seed": 0, "amplitude": 0.004, "gamma": 1.4},
    "training": {"n_train": 800, "n_validation": 200, "seed": 1},
    "covariance": {"n_mc": 2000, "seed": 2, "rank_tol": 1e-8},
    "sampler": {"h": 5000, "burn_in": 1000, "thinning": 10, "seed": 3},
    "targets": {},
    "sweep": None,
    "envelope": {
        "quantile": 1.0,
        "ridge_scale": 1e-8,
        "n_calibration": 2000,
        "log10_scale": [-2.0, 0.0],
        "delta_threshold": 1.0,
        "seed": 4,
    },
    "classify": {"n_test": 500, "d": 30, "family": "hicks-henne", "log10_scale": [-2.0, 0.0], "seed": 5},
    "export": {"span": 0.3, "contour_levels": [0.33, 0.66], "absolute_levels": False, "scale": 100.0},
}

OBJECTIVE_KEYS = {"label", "output", "degree", "weights", "r_override", "min_ratio"}
WEIGHT_KEYS = {"region", "nodes", "values", "radius"}
SWEEP_DEFAULTS = {"label": None, "index": 0, "values": None, "h": 500, "burn_in": 1000, "thinning": 10, "seed": 6}

# seed fields moved by --seed-override, with their offsets from the override value
SEED_OFFSETS = {
    ("training", "seed"): 1,
    ("covariance", "seed"): 2,
    ("sampler", "seed"): 3,
    ("envelope", "seed"): 4,
    ("classify", "seed"): 5,
    ("sweep", "seed"): 6,
}


def _where(path):
    return ".".join(str(p) for p in path) or "<root>"


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _int(v, path, lo=None):
    if not _is_int(v):
        raise ConfigError(f"{_where(path)} must be an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"{_where(path)} must be >= {lo}, got {v}")
    return v


def _number(v, path, positive=False):
    if not _is_number(v):
        raise ConfigError(f"{_where(path)} must be a number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{_where(path)} must be positive, got {v}")
    return float(v)


def _numbers(v, path, length=None):
    if not isinstance(v, list) or not all(_is_number(x) for x in v):
        raise ConfigError(f"{_where(path)} must be a list of numbers")
    if length is not None and len(v) != length:
        raise ConfigError(f"{_where(path)} must have {length} entries, got {len(v)}")
    return [float(x) for x in v]


def _merge(defaults, given, path):
    if not isinstance(given, dict):
        raise ConfigError(f"{_where(path)} must be an object")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown key(s) in {_where(path)}: {', '.join(unknown)}")
    out = copy.deepcopy(defaults)
    out.update(copy.deepcopy(given))
    return out


def _check_weights(w, path, n_nodes):
    if not isinstance(w, dict):
        raise ConfigError(f"{_where(path)} must be an object")
    unknown = sorted(set(w) - WEIGHT_KEYS)
    if unknown:
        raise ConfigError(f"unknown key(s) in {_where(path)}: {', '.join(unknown)}")
    given = [k for k in ("region", "nodes", "values") if k in w]
    if len(given) != 1:
        raise ConfigError(f"{_where(path)} needs exactly one of region, nodes or values")
    out = {"radius": _int(w.get("radius", 6), path + ["radius"], 0)}
    if "region" in w:
        if w["region"] not in WEIGHT_REGIONS:
            raise ConfigError(f"{_where(path + ['region'])} must be one of {WEIGHT_REGIONS}, got {w['region']!r}")
        out["region"] = w["region"]
    elif "nodes" in w:
        nodes = w["nodes"]
        if not isinstance(nodes, list) or not nodes or not all(_is_int(k) and 0 <= k < n_nodes for k in nodes):
            raise ConfigError(f"{_where(path + ['nodes'])} must list node indices in [0, {n_nodes})")
        out["nodes"] = list(nodes)
    else:
        vals = _numbers(w["values"], path + ["values"], n_nodes)
        if any(v < 0 for v in vals) or not any(v > 0 for v in vals):
            raise ConfigError(f"{_where(path + ['values'])} must be non-negative with at least one positive entry")
        out = {"values": vals}
    return out


def _check_objective(obj, i, n_nodes, d):
    path = ["objectives", i]
    if not isinstance(obj, dict):
        raise ConfigError(f"{_where(path)} must be an object")
    unknown = sorted(set(obj) - OBJECTIVE_KEYS)
    if unknown:
        raise ConfigError(f"unknown key(s) in {_where(path)}: {', '.join(unknown)}")
    label = obj.get("label")
    if not isinstance(label, str) or not label or not label.replace("_", "").replace("-", "").isalnum():
        raise ConfigError(f"{_where(path + ['label'])} must be a non-empty name of letters, digits, '-' or '_'")
    output = obj.get("output", label)
    if output not in OUTPUT_KINDS:
        raise ConfigError(f"{_where(path + ['output'])} must be one of {sorted(OUTPUT_KINDS)}, got {output!r}")
    kind = OUTPUT_KINDS[output]
    degree = _int(obj.get("degree", 2 if kind == "scalar" else 1), path + ["degree"])
    if degree not in (1, 2):
        raise ConfigError(f"{_where(path + ['degree'])} must be 1 or 2")
    weights = None
    if kind == "vector":
        if obj.get("weights") is None:
            raise ConfigError(f"{_where(path)}: vector objective {label!r} needs weights")
        weights = _check_weights(obj["weights"], path + ["weights"], n_nodes)
    elif obj.get("weights") is not None:
        raise ConfigError(f"{_where(path)}: scalar objective {label!r} does not take weights")
    r = obj.get("r_override")
    if r is not None:
        _int(r, path + ["r_override"], 1)
        if r >= d:
            raise ConfigError(f"{_where(path + ['r_override'])} must be below the design dimension {d}, got {r}")
    min_ratio = _number(obj.get("min_ratio", 1.0), path + ["min_ratio"], positive=True)
    return {
        "label": label,
        "output": output,
        "degree": degree,
        "weights": weights,
        "r_override": r,
        "min_ratio": min_ratio,
    }


def objective_kind(objective):
    return OUTPUT_KINDS[objective["output"]]


def validate(raw):
    """Fill defaults into ``raw`` and check it; returns the normalized dict or raises :class:`ConfigError`."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    if "version" not in raw:
        raise ConfigError("configuration needs a 'version' field")
    if raw["version"] != CONFIG_VERSION:
        raise ConfigError(f"unsupported configuration version {raw['version']!r} (expected {CONFIG_VERSION})")
    unknown = sorted(set(raw) - set(DEFAULTS) - {"objectives"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    cfg = {"version": CONFIG_VERSION}
    for section in ("oracle", "training", "covariance", "sampler", "envelope", "classify", "export"):
        cfg[section] = _merge(DEFAULTS[section], raw.get(section, {}), [section])

    o = cfg["oracle"]
    _int(o["d"], ["oracle", "d"], 2)
    _int(o["n_nodes"], ["oracle", "n_nodes"], 64)
    _int(o["seed"], ["oracle", "seed"], 0)
    _number(o["amplitude"], ["oracle", "amplitude"], positive=True)
    if _number(o["gamma"], ["oracle", "gamma"]) <= 1.0:
        raise ConfigError("oracle.gamma must exceed 1")

    t = cfg["training"]
    _int(t["n_train"], ["training", "n_train"], 2)
    _int(t["n_validation"], ["training", "n_validation"], 0)
    _int(t["seed"], ["training", "seed"], 0)

    c = cfg["covariance"]
    if c["n_mc"] is not None:
        _int(c["n_mc"], ["covariance", "n_mc"], 1)
    _int(c["seed"], ["covariance", "seed"], 0)
    _number(c["rank_tol"], ["covariance", "rank_tol"], positive=True)

    s = cfg["sampler"]
    _int(s["h"], ["sampler", "h"], 1)
    _int(s["burn_in"], ["sampler", "burn_in"], 0)
    _int(s["thinning"], ["sampler", "thinning"], 1)
    _int(s["seed"], ["sampler", "seed"], 0)

    objs = raw.get("objectives")
    if not isinstance(objs, list) or not objs:
        raise ConfigError("objectives must be a non-empty list")
    cfg["objectives"] = [_check_objective(obj, i, o["n_nodes"], o["d"]) for i, obj in enumerate(objs)]
    labels = [ob["label"] for ob in cfg["objectives"]]
    dupes = sorted({lb for lb in labels if labels.count(lb) > 1})
    if dupes:
        raise ConfigError(f"objective labels must be unique; repeated: {', '.join(dupes)}")
    by_label = {ob["label"]: ob for ob in cfg["objectives"]}

    targets = raw.get("targets", {})
    if not isinstance(targets, dict):
        raise ConfigError("targets must be an object mapping labels to lists")
    cfg["targets"] = {}
    for label, values in targets.items():
        if label not in by_label:
            raise ConfigError(f"targets refer to unknown objective {label!r}")
        r = by_label[label]["r_override"]
        cfg["targets"][label] = _numbers(values, ["targets", label], r)

    sweep = raw.get("sweep")
    if sweep is not None:
        sw = _merge(SWEEP_DEFAULTS, sweep, ["sweep"])
        if sw["label"] not in by_label:
            raise ConfigError(f"sweep.label must name an objective, got {sw['label']!r}")
        _int(sw["index"], ["sweep", "index"], 0)
        r = by_label[sw["label"]]["r_override"]
        if r is not None and sw["index"] >= r:
            raise ConfigError(f"sweep.index {sw['index']} is out of range for r = {r}")
        sw["values"] = _numbers(sw["values"], ["sweep", "values"])
        if len(sw["values"]) < 2:
            raise ConfigError("sweep.values needs at least two entries")
        _int(sw["h"], ["sweep", "h"], 1)
        _int(sw["burn_in"], ["sweep", "burn_in"], 0)
        _int(sw["thinning"], ["sweep", "thinning"], 1)
        _int(sw["seed"], ["sweep", "seed"], 0)
        sweep = sw
    cfg["sweep"] = sweep

    e = cfg["envelope"]
    q = _number(e["quantile"], ["envelope", "quantile"])
    if not 0.5 < q <= 1.0:
        raise ConfigError(f"envelope.quantile must lie in (0.5, 1], got {q}")
    _number(e["ridge_scale"], ["envelope", "ridge_scale"], positive=True)
    _int(e["n_calibration"], ["envelope", "n_calibration"], 2)
    lo, hi = _numbers(e["log10_scale"], ["envelope", "log10_scale"], 2)
    if lo > hi or hi > 0:
        raise ConfigError("envelope.log10_scale must be [lo, hi] with lo <= hi <= 0")
    _number(e["delta_threshold"], ["envelope", "delta_threshold"], positive=True)
    _int(e["seed"], ["envelope", "seed"], 0)

    k = cfg["classify"]
    _int(k["n_test"], ["classify", "n_test"], 1)
    _int(k["d"], ["classify", "d"], 2)
    if k["family"] not in BUMP_FAMILIES:
        raise ConfigError(f"classify.family must be one of {sorted(BUMP_FAMILIES)}")
    lo, hi = _numbers(k["log10_scale"], ["classify", "log10_scale"], 2)
    if lo > hi or hi > 0:
        raise ConfigError("classify.log10_scale must be [lo, hi] with lo <= hi <= 0")
    _int(k["seed"], ["classify", "seed"], 0)

    x = cfg["export"]
    _number(x["span"], ["export", "span"], positive=True)
    _numbers(x["contour_levels"], ["export", "contour_levels"])
    if not isinstance(x["absolute_levels"], bool):
        raise ConfigError("export.absolute_levels must be true or false")
    _number(x["scale"], ["export", "scale"], positive=True)
    return cfg


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass(frozen=True)
class PipelineConfig:
    """A validated configuration; ``data`` holds the normalized document."""

    data: dict

    @classmethod
    def from_dict(cls, raw):
        return cls(validate(raw))

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"configuration {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def __getitem__(self, key):
        return self.data[key]

    @property
    def labels(self):
        return [ob["label"] for ob in self.data["objectives"]]

    def objective(self, label):
        for ob in self.data["objectives"]:
            if ob["label"] == label:
                return ob
        raise KeyError(label)

    @property
    def sha256(self):
        return hashlib.sha256(canonical_json(self.data).encode()).hexdigest()

    def seeds(self):
        out = {"oracle": self.data["oracle"]["seed"]}
        for (section, key), _ in SEED_OFFSETS.items():
            if self.data.get(section) is not None:
                out[section] = self.data[section][key]
        return out

    def with_seed_override(self, seed):
        """Copy with every stage seed replaced by ``seed`` plus a fixed per-stage offset.

        The oracle seed defines the synthetic physics and is left alone.
        """
        if not _is_int(seed) or seed < 0:
            raise ConfigError(f"seed override must be a non-negative integer, got {seed!r}")
        data = copy.deepcopy(self.data)
        for (section, key), offset in SEED_OFFSETS.items():
            if data.get(section) is not None:
                data[section][key] = seed + offset
        return PipelineConfig(data)
