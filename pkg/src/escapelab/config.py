"""Experiment configuration: YAML parsing, schema validation with line
numbers, and object construction.

A config is a YAML mapping. ``experiment`` selects the kind; each kind
reads a fixed set of sections (see ``KIND_SECTIONS``). Unknown keys,
duplicate keys and type/range violations raise :class:`ConfigError`
naming the offending line.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math

import yaml

from .errors import ArgumentError, CatalogError, ConfigError

__all__ = ["load_config", "parse_config", "ExperimentConfig", "KINDS", "dump_config"]

KINDS = ("simulate", "solve-fpe", "solve-vfp", "kramers", "stationary", "rates",
         "msgd-rates", "empirical", "assumptions")


# --------------------------------------------------------------------------
# field specs

class F:
    """One schema field: type tag, requiredness, default and numeric range."""

    def __init__(self, kind, required=False, default=None, positive=False, nonneg=False,
                 choices=None, schema=None, item=None, lo=None, hi=None):
        self.kind = kind
        self.required = required
        self.default = default
        self.positive = positive
        self.nonneg = nonneg
        self.choices = choices
        self.schema = schema
        self.item = item
        self.lo = lo
        self.hi = hi


def _num(**kw):
    return F("number", **kw)


def _int(**kw):
    return F("int", **kw)


_VEC = F("list", item=F("number"))
_INITIAL = {
    "kind": F("str", default="dirac", choices=("dirac", "gaussian", "stationary")),
    "center": F("list", item=F("number")),
    "std": F("list", item=F("number", positive=True)),
}

SECTIONS = {
    "landscape": {
        "name": F("str", required=True),
        "params": F("map", default={}),
    },
    "schedule": {
        "family": F("str", required=True, choices=("constant", "exp_approach", "step_decay")),
        "gamma": _num(positive=True),
        "batch": _num(positive=True),
        "beta": _num(nonneg=True),
        "eta_inf": _num(positive=True),
        "amplitude": _num(lo=-1.0),
        "rate": _num(positive=True),
        "points": F("list", item=F("list", item=F("number"))),
    },
    "momentum": {
        "gamma": _num(required=True, positive=True),
        "xi": _num(required=True, lo=0.0, hi=1.0),
        "M": _num(required=True, positive=True),
        "beta": _num(required=True, nonneg=True),
    },
    "grid": {
        "axes": F("list", required=True, item=F("list", item=F("number"))),
    },
    "simulate": {
        "mode": F("str", required=True,
                  choices=("sgd_sde", "discrete_sgd", "msgd_sde", "discrete_msgd")),
        "w0": F("list", required=True, item=F("number")),
        "v0": _VEC,
        "dt": _num(positive=True),
        "t_end": _num(positive=True),
        "n_steps": _int(positive=True),
        "n_paths": _int(default=1, positive=True),
        "n_trajectories": _int(default=1, nonneg=True),
        "regions": F("list", default=[], item=F("map", schema={
            "center": F("list", required=True, item=F("number")),
            "radius": _num(required=True, positive=True)})),
        "guard_radius": _num(default=10.0, positive=True),
        "stability_radius": _num(positive=True),
    },
    "fpe": {
        "dt": _num(required=True, positive=True),
        "t_end": _num(required=True, positive=True),
        "record_every": _num(required=True, positive=True),
        "initial": F("map", default={"kind": "dirac"}, schema=_INITIAL),
    },
    "vfp": {
        "dt": _num(required=True, positive=True),
        "t_end": _num(required=True, positive=True),
        "record_every": _num(required=True, positive=True),
        "initial": F("map", default={"kind": "gaussian"}, schema=_INITIAL),
    },
    "kramers": {
        "from": _int(default=0, nonneg=True),
        "to": _int(default=1, nonneg=True),
        "epsilon": _num(positive=True),
        "dt": _num(required=True, positive=True),
        "n_paths": _int(required=True, positive=True),
        "t_cap": _num(positive=True),
        "saddle": F("str", default="catalog", choices=("catalog", "search")),
    },
    "stationary": {
        "eta": _num(positive=True),
        "epsilons": F("list", default=[], item=F("number", positive=True)),
        "minima": F("list", item=F("int", nonneg=True)),
    },
    "rates": {
        "dt": _num(required=True, positive=True),
        "t_end": _num(required=True, positive=True),
        "record_every": _num(required=True, positive=True),
        "initial": F("map", default={"kind": "dirac"}, schema=_INITIAL),
        "R": _num(default=3.0, positive=True),
        "poincare_axes": F("list", item=F("list", item=F("number"))),
    },
    "msgd_rates": {
        "C_L": _num(nonneg=True),
        "b": _num(nonneg=True),
        "box": _num(default=5.0, positive=True),
        "C_P": _num(positive=True),
        "poincare_axes": F("list", item=F("list", item=F("number"))),
        "run_vfp": F("bool", default=False),
    },
    "empirical": {
        "dataset": F("map", required=True, schema={
            "kind": F("str", required=True, choices=("linear_regression", "logistic")),
            "n": _int(required=True, positive=True),
            "d": _int(required=True, positive=True),
            "noise": _num(default=0.0, nonneg=True),
            "seed": _int(default=0, nonneg=True),
            "design": F("str", default="gaussian", choices=("gaussian", "mixture")),
            "margin_scale": _num(default=0.5, positive=True)}),
        "loss": F("map", required=True, schema={
            "kind": F("str", required=True, choices=("squared", "cross_entropy")),
            "lam": _num(positive=True)}),
        "runs": F("list", required=True, item=F("map", schema={
            "optimizer": F("str", required=True, choices=("sgd", "msgd")),
            "gamma": _num(required=True, nonneg=True),
            "M": _int(required=True, positive=True),
            "xi": _num(lo=0.0, hi=1.0)})),
        "n_steps": _int(required=True, positive=True),
        "record_every": _int(default=1, positive=True),
        "n_seeds": _int(default=1, positive=True),
        "noise_moments": F("map", schema={
            "M": _int(required=True, positive=True),
            "n_draws": _int(default=10000, positive=True),
            "w": _VEC}),
    },
    "assumptions": {
        "radii": F("list", item=F("number", positive=True)),
        "samples_per_shell": _int(default=64, positive=True),
        "box": _num(default=5.0, positive=True),
        "box_points": _int(default=201, positive=True),
    },
}

TOP = {
    "experiment": F("str", required=True, choices=KINDS),
    "seed": _int(default=0, nonneg=True),
    "output": F("str"),
}

# sections each kind needs (required) and may use (optional)
KIND_SECTIONS = {
    "simulate": (("landscape", "simulate"), ("schedule", "momentum")),
    "solve-fpe": (("landscape", "schedule", "grid", "fpe"), ()),
    "solve-vfp": (("landscape", "momentum", "grid", "vfp"), ()),
    "kramers": (("landscape", "schedule", "kramers"), ()),
    "stationary": (("landscape", "grid"), ("stationary", "schedule")),
    "rates": (("landscape", "schedule", "grid", "rates"), ()),
    "msgd-rates": (("landscape", "momentum"), ("msgd_rates", "grid", "vfp")),
    "empirical": (("empirical",), ()),
    "assumptions": (("landscape",), ("assumptions",)),
}


# --------------------------------------------------------------------------
# YAML with line numbers

def _line_map(node, path=(), out=None, top=True):
    """Map each key path to its 1-based source line; reject duplicate keys."""
    if out is None:
        out = {}
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        seen = set()
        for k, v in node.value:
            key = k.value
            if key in seen:
                raise ConfigError(f"duplicate key {_dotted(path + (key,))!r}",
                                  line=k.start_mark.line + 1)
            seen.add(key)
            out[path + (key,)] = k.start_mark.line + 1
            _line_map(v, path + (key,), out, top=False)
            out[path + (key,)] = k.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, path + (i,), out, top=False)
    return out


def _dotted(path):
    return ".".join(str(p) for p in path) or "<root>"


class _Ctx:
    def __init__(self, lines):
        self.lines = lines

    def line(self, path):
        while path not in self.lines and path:
            path = path[:-1]
        return self.lines.get(path)

    def fail(self, path, msg):
        raise ConfigError(f"{_dotted(path)}: {msg}", line=self.line(path))


def _check(ctx, spec, value, path):
    if value is None:
        if spec.required:
            ctx.fail(path, "is required")
        if spec.kind == "map" and spec.schema is not None and spec.default is not None:
            return _check_section(ctx, spec.schema, copy.deepcopy(spec.default), path)
        return copy.deepcopy(spec.default)
    k = spec.kind
    if k == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            ctx.fail(path, f"expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            ctx.fail(path, "must be finite")
    elif k == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            ctx.fail(path, f"expected an integer, got {value!r}")
    elif k == "str":
        if not isinstance(value, str):
            ctx.fail(path, f"expected a string, got {value!r}")
        if spec.choices and value not in spec.choices:
            ctx.fail(path, f"must be one of {', '.join(spec.choices)}; got {value!r}")
    elif k == "bool":
        if not isinstance(value, bool):
            ctx.fail(path, f"expected true/false, got {value!r}")
    elif k == "list":
        if not isinstance(value, list):
            ctx.fail(path, f"expected a list, got {value!r}")
        if spec.item is not None:
            value = [_check(ctx, spec.item, v, path + (i,)) if v is not None
                     else ctx.fail(path + (i,), "list items may not be null")
                     for i, v in enumerate(value)]
    elif k == "map":
        if not isinstance(value, dict):
            ctx.fail(path, f"expected a mapping, got {value!r}")
        if spec.schema is not None:
            value = _check_section(ctx, spec.schema, value, path)
        else:
            value = dict(value)
    if k in ("number", "int"):
        if spec.positive and not value > 0:
            ctx.fail(path, f"must be positive, got {value!r}")
        if spec.nonneg and value < 0:
            ctx.fail(path, f"must be >= 0, got {value!r}")
        if spec.lo is not None and not value > spec.lo:
            ctx.fail(path, f"must exceed {spec.lo!r}, got {value!r}")
        if spec.hi is not None and not value < spec.hi:
            ctx.fail(path, f"must be below {spec.hi!r}, got {value!r}")
    return value


def _check_section(ctx, schema, data, path):
    for key in data:
        if key not in schema:
            ctx.fail(path + (key,), f"unknown key (allowed: {', '.join(schema)})")
    return {key: _check(ctx, spec, data.get(key), path + (key,))
            for key, spec in schema.items()}


# --------------------------------------------------------------------------
# config object

class ExperimentConfig:
    """Validated configuration with defaults filled in.

    ``data`` holds the normalized tree; ``raw`` the user-supplied tree (the
    form that is serialized back and fingerprinted).
    """

    def __init__(self, data, raw, lines):
        self.data = data
        self.raw = raw
        self._ctx = _Ctx(lines)

    @property
    def kind(self):
        return self.data["experiment"]

    @property
    def seed(self):
        return self.data["seed"]

    def section(self, name):
        return self.data.get(name)

    def fail(self, path, msg):
        self._ctx.fail(tuple(path), msg)

    def fingerprint(self):
        payload = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def to_yaml(self):
        return dump_config(self.raw)


def dump_config(tree):
    return yaml.safe_dump(tree, sort_keys=False, default_flow_style=None)


def parse_config(text):
    """Parse and validate YAML text into an :class:`ExperimentConfig`."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          line=None if mark is None else mark.line + 1) from None
    if node is None or not isinstance(node, yaml.MappingNode):
        raise ConfigError("config must be a YAML mapping",
                          line=None if node is None else node.start_mark.line + 1)
    lines = _line_map(node)
    raw = yaml.safe_load(text)
    ctx = _Ctx(lines)
    allowed = dict(TOP)
    allowed.update({name: F("map") for name in SECTIONS})
    for key in raw:
        if key not in allowed:
            ctx.fail((key,), f"unknown key (allowed: {', '.join(allowed)})")
    data = {key: _check(ctx, spec, raw.get(key), (key,)) for key, spec in TOP.items()}
    required, optional = KIND_SECTIONS[data["experiment"]]
    for name in SECTIONS:
        present = name in raw
        if name in required and not present:
            ctx.fail((), f"experiment {data['experiment']!r} needs a {name!r} section")
        if present and name not in required and name not in optional:
            ctx.fail((name,), f"section not used by experiment {data['experiment']!r}")
        if present:
            if not isinstance(raw[name], dict):
                ctx.fail((name,), "expected a mapping")
            data[name] = _check_section(ctx, SECTIONS[name], raw[name], (name,))
    cfg = ExperimentConfig(data, raw, lines)
    _cross_validate(cfg)
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


# --------------------------------------------------------------------------
# cross-field validation and object construction

def build_landscape(cfg):
    from . import landscapes
    sec = cfg.section("landscape")
    try:
        return landscapes.builtin(sec["name"], **sec["params"])
    except CatalogError as exc:
        raise ConfigError(str(exc), line=cfg._ctx.line(("landscape", "name"))) from None
    except ArgumentError as exc:
        raise ConfigError(f"landscape parameters: {exc}",
                          line=cfg._ctx.line(("landscape", "params"))) from None


def build_schedule(cfg):
    from .sde import Schedule
    s = cfg.section("schedule")
    fam = s["family"]
    need = {"constant": ("gamma", "batch", "beta"),
            "exp_approach": ("eta_inf", "amplitude", "rate"),
            "step_decay": ("points", "beta")}[fam]
    for key in need:
        if s[key] is None:
            cfg.fail(("schedule", key), f"is required for family {fam!r}")
    extra = [k for k in ("gamma", "batch", "beta", "eta_inf", "amplitude", "rate", "points")
             if k in cfg.raw["schedule"] and k not in need
             and not (fam == "exp_approach" and k in ("gamma", "beta"))]
    if extra:
        cfg.fail(("schedule", extra[0]), f"not a parameter of family {fam!r}")
    try:
        if fam == "constant":
            if s["beta"] == 0 and cfg.kind not in ("simulate",):
                cfg.fail(("schedule", "beta"), "must be positive for this experiment")
            return Schedule.constant(s["gamma"], s["batch"], s["beta"])
        if fam == "exp_approach":
            return Schedule.exp_approach(s["eta_inf"], s["amplitude"], s["rate"],
                                         gamma=s["gamma"] or 1.0,
                                         beta=1.0 if s["beta"] is None else s["beta"])
        for i, p in enumerate(s["points"]):
            if len(p) != 3:
                cfg.fail(("schedule", "points", i), "each point is [t_start, gamma, batch]")
        return Schedule.step_decay(s["points"], s["beta"])
    except ArgumentError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"schedule: {exc}", line=cfg._ctx.line(("schedule",))) from None


def build_grid(cfg, phase=False, key=("grid", "axes")):
    from .fpe import Grid
    axes = cfg.data
    for k in key:
        axes = axes[k]
    for i, ax in enumerate(axes):
        if len(ax) != 3:
            cfg.fail(key + (i,), "each axis is [lower, upper, n_cells]")
        if ax[2] != int(ax[2]):
            cfg.fail(key + (i,), "n_cells must be an integer")
    try:
        return Grid(tuple((a, b, int(n)) for a, b, n in axes), phase=phase)
    except ArgumentError as exc:
        raise ConfigError(f"grid: {exc}", line=cfg._ctx.line(key)) from None


def _cross_validate(cfg):
    kind = cfg.kind
    land = build_landscape(cfg) if cfg.section("landscape") else None
    if cfg.section("schedule"):
        build_schedule(cfg)
    if cfg.section("grid"):
        phase = kind == "solve-vfp" or (kind == "msgd-rates")
        g = build_grid(cfg, phase=phase)
        want = 2 * land.dim if phase else land.dim
        if g.ndim != want:
            cfg.fail(("grid", "axes"), f"needs {want} axes for this experiment, got {g.ndim}")
    mom = cfg.section("momentum")
    if mom is not None and mom["beta"] == 0 and kind != "simulate":
        cfg.fail(("momentum", "beta"), "must be positive for this experiment")
    if kind == "simulate":
        s = cfg.section("simulate")
        if len(s["w0"]) != land.dim:
            cfg.fail(("simulate", "w0"), f"needs {land.dim} coordinates")
        msgd = s["mode"] in ("msgd_sde", "discrete_msgd")
        if msgd and mom is None:
            cfg.fail(("simulate", "mode"), "momentum modes need a 'momentum' section")
        if not msgd and cfg.section("schedule") is None:
            cfg.fail(("simulate", "mode"), "SGD modes need a 'schedule' section")
        if s["mode"].endswith("sde"):
            for key in ("dt", "t_end"):
                if s[key] is None:
                    cfg.fail(("simulate", key), f"is required for mode {s['mode']!r}")
        elif s["n_steps"] is None:
            cfg.fail(("simulate", "n_steps"), f"is required for mode {s['mode']!r}")
        if s["v0"] is not None and len(s["v0"]) != land.dim:
            cfg.fail(("simulate", "v0"), f"needs {land.dim} coordinates")
        for i, r in enumerate(s["regions"]):
            if len(r["center"]) != land.dim:
                cfg.fail(("simulate", "regions", i, "center"), f"needs {land.dim} coordinates")
        if s["mode"] == "msgd_sde" and not (0 < mom["xi"] < 1):
            cfg.fail(("momentum", "xi"), "must lie in (0, 1)")
    if kind in ("solve-vfp",) or (kind == "msgd-rates" and cfg.section("msgd_rates")
                                  and cfg.section("msgd_rates")["run_vfp"]):
        if land.dim != 1:
            cfg.fail(("landscape", "name"), "kinetic solves need a one-dimensional landscape")
        if kind == "msgd-rates":
            for name in ("grid", "vfp"):
                if cfg.section(name) is None:
                    cfg.fail(("msgd_rates", "run_vfp"), f"run_vfp needs a {name!r} section")
    if kind in ("kramers",):
        k = cfg.section("kramers")
        for key in ("from", "to"):
            if k[key] >= len(land.minima):
                cfg.fail(("kramers", key), f"{land.name} has {len(land.minima)} minima")
        if k["from"] == k["to"]:
            cfg.fail(("kramers", "to"), "must differ from 'from'")
        if k["saddle"] == "catalog" and not land.saddles:
            cfg.fail(("kramers", "saddle"), f"{land.name} has no catalogued saddle")
    if kind == "stationary":
        st = cfg.section("stationary") or {}
        if st.get("eta") is None and cfg.section("schedule") is None:
            cfg.fail(("stationary",), "needs 'stationary.eta' or a 'schedule' section")
        for i, m in enumerate(st.get("minima") or []):
            if m >= len(land.minima):
                cfg.fail(("stationary", "minima", i), f"{land.name} has {len(land.minima)} minima")
    if kind == "empirical":
        e = cfg.section("empirical")
        if e["loss"]["kind"] == "cross_entropy":
            if e["dataset"]["kind"] != "logistic":
                cfg.fail(("empirical", "loss", "kind"), "cross_entropy needs a logistic dataset")
            if e["loss"]["lam"] is None:
                cfg.fail(("empirical", "loss", "lam"), "is required for cross_entropy")
        if e["dataset"]["d"] > 50:
            cfg.fail(("empirical", "dataset", "d"), "must be <= 50")
        for i, r in enumerate(e["runs"]):
            if r["M"] > e["dataset"]["n"]:
                cfg.fail(("empirical", "runs", i, "M"), "must not exceed the dataset size")
            if r["optimizer"] == "msgd" and r["xi"] is None:
                cfg.fail(("empirical", "runs", i, "xi"), "is required for msgd")
        nm = e["noise_moments"]
        if nm is not None:
            if nm["M"] > e["dataset"]["n"]:
                cfg.fail(("empirical", "noise_moments", "M"), "must not exceed the dataset size")
            if nm["n_draws"] < 100:
                cfg.fail(("empirical", "noise_moments", "n_draws"), "must be >= 100")
            if nm["w"] is not None and len(nm["w"]) != e["dataset"]["d"]:
                cfg.fail(("empirical", "noise_moments", "w"), "length must equal dataset d")
    for sec_name in ("fpe", "vfp", "rates"):
        sec = cfg.section(sec_name)
        if sec is None:
            continue
        init = sec["initial"]
        dim = 2 * land.dim if sec_name == "vfp" else land.dim
        if init["kind"] in ("dirac", "gaussian") and init["center"] is not None \
                and len(init["center"]) != dim:
            cfg.fail((sec_name, "initial", "center"), f"needs {dim} coordinates")
        if init["kind"] == "gaussian" and init["std"] is None:
            cfg.fail((sec_name, "initial", "std"), "is required for a gaussian initial density")
        for key in ("t_end", "record_every"):
            n = sec[key] / sec["dt"]
            if abs(n - round(n)) > 1e-9 * max(1.0, n):
                cfg.fail((sec_name, key), "must be an integer multiple of dt")
