"""Scenario files: TOML with a closed schema.

Every key is validated against ``SCHEMA``; unknown keys, wrong types and
mutually exclusive options raise ScenarioParseError pointing at the line of
the offending key.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ScenarioParseError
from .histories import COMPLETIONS, VARIANTS
from .wavefield import MODES, FieldConfig, PacketParams, default_field

EXPERIMENTS = (
    "histories-report",
    "conditional-probabilities",
    "fringe-profile",
    "trajectory-bundle",
    "detector-sweep",
)

_NUM = (int, float)
_POINT = "point"
_EVENT = "event"
_REQUIRED = object()

# section -> key -> (type, default); array-of-table sections are flagged below
SCHEMA: dict[str, dict[str, tuple[Any, Any]]] = {
    "scenario": {
        "name": (str, _REQUIRED),
        "description": (str, ""),
        "claim": (str, _REQUIRED),
        "experiments": (list, _REQUIRED),
        "seed": (int, 0),
        "output_dir": (str, None),
    },
    "model": {
        "variant": (str, "plain"),
        "completion": (str, "gram_schmidt"),
        "tol": (_NUM, 1e-10),
        "check_tol": (_NUM, 1e-12),
    },
    "field": {
        "mode": (str, "coherent"),
        "sigma0": (_NUM, 2.0),
        "offset": (_NUM, None),
        "speed": (_POINT, None),
        "phase": (_NUM, 0.0),
        "center_c": (_POINT, None),
        "velocity_c": (_POINT, None),
        "center_d": (_POINT, None),
        "velocity_d": (_POINT, None),
    },
    "family": {
        "name": (str, _REQUIRED),
        "sets": (_EVENT, _REQUIRED),
        "expect_consistent": (bool, None),
        "expect_weights": (list, None),
        "expect_offdiag": (_NUM, None),
    },
    "conditional": {
        "family": (str, _REQUIRED),
        "given": (_EVENT, _REQUIRED),
        "condition": (_EVENT, _REQUIRED),
        "expect": (_NUM, None),
        "expect_error": (str, None),
    },
    "fringe": {
        "start": (_POINT, _REQUIRED),
        "end": (_POINT, _REQUIRED),
        "t": (_NUM, None),
        "n": (int, 601),
        "expect_spacing": (_NUM, None),
        "expect_nodes_min": (int, None),
        "expect_nodes_max": (int, None),
    },
    "bundle": {
        "n": (int, 2000),
        "t0": (_NUM, 0.0),
        "t1": (_NUM, 8.0),
        "sampler": (str, "sobol"),
        "assignment": (str, "mixture"),
        "n_out": (int, 401),
        "tol": (_NUM, 1e-8),
        "csv_trajectories": (int, 100),
        "svg_trajectories": (int, 80),
        "max_truncated_fraction": (_NUM, 0.01),
        "expect_axis_crossings": (int, None),
        "expect_c_to_d": (_NUM, None),
        "expect_c_to_c": (_NUM, None),
        "expect_split": (_NUM, None),
        "split_tol": (_NUM, 0.033),
        "max_undecided": (_NUM, 0.01),
        "expect_straight_dev": (_NUM, None),
    },
    "sweep": {
        "name": (str, _REQUIRED),
        "start": (_POINT, _REQUIRED),
        "end": (_POINT, _REQUIRED),
        "n": (int, 241),
        "aperture": (_NUM, 0.002),
        "time": (_NUM, None),
        "window": (_POINT, None),
        "node_tol": (_NUM, 1e-3),
        "histories_at_nodes": (bool, False),
        "expect_reference_which_path": (_NUM, None),
        "expect_nodes_min": (int, None),
        "expect_nodes_max": (int, None),
        "expect_spacing": (_NUM, None),
        "expect_variation_max": (_NUM, None),
    },
}
ARRAY_SECTIONS = ("family", "conditional", "sweep")
EXCLUSIVE = {
    "field": [({"offset", "speed"}, {"center_c", "velocity_c", "center_d", "velocity_d"})],
    "sweep": [({"time"}, {"window"})],
}


@dataclass
class Scenario:
    name: str
    description: str
    claim: str
    experiments: list[str]
    seed: int
    output_dir: Optional[str]
    model: dict
    field: dict
    families: list[dict] = field(default_factory=list)
    conditionals: list[dict] = field(default_factory=list)
    fringe: Optional[dict] = None
    bundle: Optional[dict] = None
    sweeps: list[dict] = field(default_factory=list)
    source: str = ""

    def field_config(self) -> FieldConfig:
        fs = self.field
        if fs["center_c"] is not None:
            c = PacketParams(tuple(fs["center_c"]), tuple(fs["velocity_c"]), fs["sigma0"], "c")
            d = PacketParams(tuple(fs["center_d"]), tuple(fs["velocity_d"]), fs["sigma0"], "d")
            w = 0.5**0.5
            return FieldConfig((c, d), fs["mode"], (w, w))
        return default_field(
            fs["mode"], fs["sigma0"],
            20.0 if fs["offset"] is None else fs["offset"],
            (10.0, 5.0) if fs["speed"] is None else tuple(fs["speed"]),
            fs["phase"],
        )


def _locate(text: str, section: str, key: Optional[str]) -> tuple[Optional[int], Optional[int]]:
    """1-based (line, column) of ``key`` inside ``[section]`` (or of the header)."""
    lines = text.splitlines()
    header = re.compile(r"^\s*\[\[?\s*" + re.escape(section) + r"\s*\]\]?\s*(#.*)?$")
    any_header = re.compile(r"^\s*\[")
    inside = section == ""
    for i, line in enumerate(lines, 1):
        if header.match(line):
            if key is None:
                return i, line.index("[") + 1
            inside = True
            continue
        if any_header.match(line):
            inside = False
            continue
        if inside and key is not None:
            m = re.match(r"^(\s*)(" + re.escape(key) + r"|\"" + re.escape(key) + r"\")\s*=", line)
            if m:
                return i, len(m.group(1)) + 1
    return None, None


def _err(text, msg, section, key=None):
    line, col = _locate(text, section, key)
    return ScenarioParseError(msg, line, col)


def _check_type(text, section, key, kind, value):
    def bad(what):
        return _err(text, f"[{section}] {key}: expected {what}, got {value!r}", section, key)

    if kind is _POINT:
        if not (isinstance(value, list) and len(value) == 2
                and all(isinstance(v, _NUM) and not isinstance(v, bool) for v in value)):
            raise bad("a pair of numbers")
        return [float(v) for v in value]
    if kind is _EVENT:
        if not isinstance(value, dict):
            raise bad("a table of time = name(s)")
        for t, names in value.items():
            ok = isinstance(names, str) or (isinstance(names, list) and all(isinstance(x, str) for x in names))
            if not ok:
                raise bad("projector names (string or list of strings)")
        return dict(value)
    if kind is _NUM:
        if isinstance(value, bool) or not isinstance(value, _NUM):
            raise bad("a number")
        return float(value)
    if kind is int and isinstance(value, bool):
        raise bad("an integer")
    if not isinstance(value, kind):
        raise bad(kind.__name__)
    return value


def _section(text, name, raw) -> dict:
    if not isinstance(raw, dict):
        raise _err(text, f"[{name}] must be a table", name)
    schema = SCHEMA[name]
    for key in raw:
        if key not in schema:
            raise _err(text, f"unknown key {key!r} in [{name}]; allowed: {sorted(schema)}", name, key)
    for first, second in EXCLUSIVE.get(name, []):
        a, b = first & raw.keys(), second & raw.keys()
        if a and b:
            key = sorted(b)[0]
            raise _err(text, f"[{name}] options {sorted(a)} and {sorted(b)} are mutually exclusive", name, key)
    out = {}
    for key, (kind, default) in schema.items():
        if key in raw:
            out[key] = _check_type(text, name, key, kind, raw[key])
        elif default is _REQUIRED:
            raise _err(text, f"[{name}] is missing required key {key!r}", name)
        else:
            out[key] = default
    return out


def _one_of(text, section, key, value, allowed):
    if value not in allowed:
        raise _err(text, f"[{section}] {key} must be one of {list(allowed)}, got {value!r}", section, key)


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        col = getattr(exc, "colno", None)
        if line is None:
            m = re.search(r"line (\d+), column (\d+)", str(exc))
            line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        msg = getattr(exc, "msg", str(exc))
        raise ScenarioParseError(f"{source}: {msg}", line, col) from None

    for name in raw:
        if name not in SCHEMA:
            raise _err(text, f"unknown section [{name}]; allowed: {sorted(SCHEMA)}", name)
        if name in ARRAY_SECTIONS and not isinstance(raw[name], list):
            raise _err(text, f"[{name}] must be written as [[{name}]] (array of tables)", name)
        if name not in ARRAY_SECTIONS and isinstance(raw[name], list):
            raise _err(text, f"[{name}] must be a single table", name)
    if "scenario" not in raw:
        raise ScenarioParseError(f"{source}: missing [scenario] section", 1, 1)

    head = _section(text, "scenario", raw["scenario"])
    for e in head["experiments"]:
        if e not in EXPERIMENTS:
            raise _err(text, f"unknown experiment {e!r}; choose from {list(EXPERIMENTS)}",
                       "scenario", "experiments")
    model = _section(text, "model", raw.get("model", {}))
    _one_of(text, "model", "variant", model["variant"], VARIANTS)
    _one_of(text, "model", "completion", model["completion"], COMPLETIONS)
    fld = _section(text, "field", raw.get("field", {}))
    _one_of(text, "field", "mode", fld["mode"], MODES)
    explicit = [fld[k] is not None for k in ("center_c", "velocity_c", "center_d", "velocity_d")]
    if any(explicit) and not all(explicit):
        raise _err(text, "explicit packets need all of center_c, velocity_c, center_d, velocity_d", "field")

    sc = Scenario(
        name=head["name"], description=head["description"], claim=head["claim"],
        experiments=list(head["experiments"]), seed=head["seed"], output_dir=head["output_dir"],
        model=model, field=fld, source=source,
    )
    sc.families = [_section(text, "family", t) for t in raw.get("family", [])]
    sc.conditionals = [_section(text, "conditional", t) for t in raw.get("conditional", [])]
    sc.sweeps = [_section(text, "sweep", t) for t in raw.get("sweep", [])]
    if "fringe" in raw:
        sc.fringe = _section(text, "fringe", raw["fringe"])
    if "bundle" in raw:
        sc.bundle = _section(text, "bundle", raw["bundle"])
        _one_of(text, "bundle", "sampler", sc.bundle["sampler"], ("sobol", "iid"))
        _one_of(text, "bundle", "assignment", sc.bundle["assignment"], ("mixture", "c", "d"))
    if sc.seed < 0 or sc.seed >= 2**64:
        raise _err(text, "seed must be an unsigned 64-bit integer", "scenario", "seed")

    names = [f["name"] for f in sc.families]
    if len(set(names)) != len(names):
        raise _err(text, "family names must be unique", "family")
    for c in sc.conditionals:
        if c["family"] not in names:
            raise _err(text, f"conditional refers to unknown family {c['family']!r}", "conditional", "family")
        if (c["expect"] is None) == (c["expect_error"] is None):
            raise _err(text, "give exactly one of expect and expect_error", "conditional")
    for s in sc.sweeps:
        if (s["time"] is None) == (s["window"] is None):
            raise _err(text, "sweep needs exactly one of time and window", "sweep")

    needs = {
        "histories-report": bool(sc.families),
        "conditional-probabilities": bool(sc.conditionals),
        "fringe-profile": sc.fringe is not None,
        "trajectory-bundle": sc.bundle is not None,
        "detector-sweep": bool(sc.sweeps),
    }
    for e in sc.experiments:
        if not needs[e]:
            raise _err(text, f"experiment {e!r} has no configuration section", "scenario", "experiments")
    return sc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioParseError(f"cannot read {path}: {exc.strerror}") from None
    return parse_scenario(text, str(path))
