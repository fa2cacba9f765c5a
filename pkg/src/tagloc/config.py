"""Scenario files.

A scenario is a YAML mapping. ``extends: other.yaml`` pulls in another file
(resolved next to the including file, then among the bundled scenarios) and
deep-merges this one on top. Angles are radians, lengths meters, times
integer epochs unless a key says otherwise.

Filter defaults are derived from the simulated sensor: the nominal
detector model and range noise match the sensor, process noise matches the
odometry noise, and the dependent share of measurement noise is
``ar1_rho ** 2``.
"""

from __future__ import annotations

import copy
import math
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .geometry import Pose2
from .initializer import InitConfig
from .localizer import FilterConfig
from .map_builder import TagMap
from .measurement import NoiseModel
from .sim import (
    DelayWindow,
    Kidnap,
    OdometryNoise,
    OutlierBurst,
    Scenario,
    SensorModel,
)


class ScenarioError(ValueError):
    """Malformed scenario or override; the message names the field."""


def bundled_path(name: str) -> Path:
    if not name.endswith((".yaml", ".yml")):
        name += ".yaml"
    return Path(str(resources.files("tagloc") / "scenarios" / name))


def _read_yaml(path: Path) -> dict:
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ScenarioError(f"{path}: file not found") from None
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ScenarioError(f"{path}: {where}: {e.problem}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: top level must be a mapping")
    return data


def deep_merge(base: dict, top: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in top.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_raw(path, _seen=None) -> dict:
    """Read a scenario file and resolve ``extends`` chains."""
    path = Path(path)
    if not path.exists() and not path.is_absolute() and path.parent == Path("."):
        path = bundled_path(path.name)
    _seen = set() if _seen is None else _seen
    key = path.resolve()
    if key in _seen:
        raise ScenarioError(f"{path}: circular 'extends'")
    _seen.add(key)
    data = _read_yaml(path)
    parent = data.pop("extends", None)
    if parent is None:
        return data
    ppath = path.parent / parent
    if not ppath.exists():
        ppath = bundled_path(parent)
    return deep_merge(load_raw(ppath, _seen), data)


def set_override(raw: dict, assignment: str) -> None:
    """Apply ``dotted.key=value``; the value is parsed as YAML."""
    if "=" not in assignment:
        raise ScenarioError(f"override {assignment!r} is not key=value")
    key, value = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = raw
    for p in parts[:-1]:
        nxt = node.setdefault(p, {})
        if not isinstance(nxt, dict):
            raise ScenarioError(f"override {key!r}: {p!r} is not a mapping")
        node = nxt
    try:
        node[parts[-1]] = yaml.safe_load(value)
    except yaml.YAMLError:
        raise ScenarioError(f"override {key!r}: cannot parse value {value!r}") from None


# -- field access with diagnostics --------------------------------------------

_MISSING = object()


def _get(d: dict, key: str, path: str, default=_MISSING):
    if key not in d:
        if default is _MISSING:
            raise ScenarioError(f"missing field '{path}{key}'")
        return default
    return d[key]


def _num(d: dict, key: str, path: str, default=_MISSING) -> float:
    v = _get(d, key, path, default)
    try:
        v = float(v)
    except (TypeError, ValueError):
        raise ScenarioError(f"field '{path}{key}' must be a number, got {v!r}") from None
    if not math.isfinite(v):
        raise ScenarioError(f"field '{path}{key}' must be finite")
    return v


def _int(d: dict, key: str, path: str, default=_MISSING) -> int:
    v = _num(d, key, path, default)
    if v != int(v):
        raise ScenarioError(f"field '{path}{key}' must be an integer, got {v}")
    return int(v)


def _section(d: dict, key: str, path: str) -> dict:
    v = d.get(key) or {}
    if not isinstance(v, dict):
        raise ScenarioError(f"field '{path}{key}' must be a mapping")
    return v


def _pose(v, path: str) -> Pose2:
    if isinstance(v, dict):
        try:
            return Pose2(float(v["x"]), float(v["y"]), float(v.get("theta", 0.0)))
        except (KeyError, TypeError, ValueError):
            raise ScenarioError(f"field '{path}' must have numeric x, y[, theta]") from None
    if isinstance(v, (list, tuple)) and len(v) in (2, 3):
        try:
            return Pose2(*(float(c) for c in v))
        except (TypeError, ValueError):
            pass
    raise ScenarioError(f"field '{path}' must be [x, y, theta] or a mapping")


def _diag(v, n: int, path: str) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape == (n,):
        a = np.diag(a)
    if a.shape != (n, n):
        raise ScenarioError(f"field '{path}' must be {n} diagonal entries or an {n}x{n} matrix")
    return a


def parse_tags(raw: dict) -> TagMap:
    entries: dict[int, Pose2] = {}

    def add(tid: int, pose: Pose2, where: str) -> None:
        if tid in entries:
            raise ScenarioError(f"{where}: duplicate tag id {tid}")
        entries[tid] = pose

    for i, t in enumerate(raw.get("tags") or []):
        where = f"tags[{i}]"
        if not isinstance(t, dict):
            raise ScenarioError(f"field '{where}' must be a mapping")
        add(_int(t, "id", where + "."), _pose(t, where), where)
    for i, line in enumerate(raw.get("tag_lines") or []):
        where = f"tag_lines[{i}]."
        a = _pose(_get(line, "from", where), where + "from")
        b = _pose(_get(line, "to", where), where + "to")
        spacing = _num(line, "spacing", where)
        facing = _num(line, "facing", where)
        tid = _int(line, "start_id", where)
        length = math.hypot(b.x - a.x, b.y - a.y)
        n = int(math.floor(length / spacing + 1e-9)) + 1
        for j in range(n):
            f = 0.0 if length == 0 else j * spacing / length
            add(tid + j, Pose2(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y), facing), where[:-1])
    if not entries:
        raise ScenarioError("missing field 'tags' (or 'tag_lines'): scenario has no tags")
    return TagMap(entries, {"origin": "scenario layout"})


def _noise_model(d: dict, path: str, base: NoiseModel | None = None) -> NoiseModel:
    base = base or NoiseModel()
    return NoiseModel(
        _num(d, "base_sigma_xy", path, base.base_sigma_xy),
        _num(d, "base_sigma_theta", path, base.base_sigma_theta),
        _num(d, "growth_distance", path, base.growth_distance),
        _num(d, "growth_angle", path, base.growth_angle),
    )


def _events(raw_events, duration: int) -> tuple:
    out = []
    for i, e in enumerate(raw_events or []):
        where = f"events[{i}]."
        if not isinstance(e, dict):
            raise ScenarioError(f"field 'events[{i}]' must be a mapping")
        kind = _get(e, "type", where)
        if kind == "kidnap":
            out.append(Kidnap(_int(e, "epoch", where), _pose(_get(e, "offset", where), where + "offset")))
        elif kind == "delay":
            out.append(
                DelayWindow(_int(e, "start", where, 0), _int(e, "end", where, duration), _int(e, "m", where))
            )
        elif kind == "outlier_burst":
            out.append(OutlierBurst(_int(e, "start", where), _int(e, "end", where), _num(e, "rate", where)))
        else:
            raise ScenarioError(f"field '{where}type': unknown event type {kind!r}")
    return tuple(out)


def scenario_from_dict(raw: dict) -> Scenario:
    name = str(raw.get("name", "scenario"))
    seed = _int(raw, "seed", "", 0)
    duration = _int(raw, "duration_epochs", "")
    dt = _num(raw, "dt", "")
    wps = _get(raw, "waypoints", "")
    if not isinstance(wps, list):
        raise ScenarioError("field 'waypoints' must be a list")
    waypoints = [_pose(w, f"waypoints[{i}]") for i, w in enumerate(wps)]
    motion = _section(raw, "motion", "")
    extr = _pose(raw.get("extrinsics", [0.0, 0.0, 0.0]), "extrinsics")

    sd = _section(raw, "sensor", "")
    sensor_noise = _noise_model(_section(sd, "noise", "sensor."), "sensor.noise.")
    try:
        sensor = SensorModel(
            fov_half_angle=_num(sd, "fov_half_angle", "sensor.", 1.0),
            max_range=_num(sd, "max_range", "sensor.", 6.0),
            min_range=_num(sd, "min_range", "sensor.", 0.3),
            max_view_angle=_num(sd, "max_view_angle", "sensor.", 1.3),
            alpha_min=_num(sd, "alpha_min", "sensor.", 0.05),
            noise=sensor_noise,
            ar1_rho=_num(sd, "ar1_rho", "sensor.", 0.0),
            range_sigma=_num(sd, "range_sigma", "sensor.", 0.05),
            partial_probability=_num(sd, "partial_probability", "sensor.", 0.0),
            partial_distance_gain=_num(sd, "partial_distance_gain", "sensor.", 0.0),
            partial_angle_gain=_num(sd, "partial_angle_gain", "sensor.", 0.0),
            outlier_rate=_num(sd, "outlier_rate", "sensor.", 0.0),
            outlier_magnitude=_num(sd, "outlier_magnitude", "sensor.", 1.0),
        )
    except ValueError as e:
        raise ScenarioError(f"sensor: {e}") from None

    od = _section(raw, "odometry", "")
    odo = OdometryNoise(_num(od, "sigma_d", "odometry.", 0.02), _num(od, "sigma_theta", "odometry.", 0.01))

    fd = _section(raw, "filter", "")
    try:
        init = InitConfig(
            _diag(fd.get("p0", [0.05**2, 0.05**2, 0.02**2]), 3, "filter.p0"),
            _int(fd, "kidnap_discard_limit", "filter.", 5),
        )
    except ValueError as e:
        raise ScenarioError(f"filter: {e}") from None
    share = fd.get("dependent_share")
    share = sensor.ar1_rho**2 if share is None else _num(fd, "dependent_share", "filter.")
    fcfg = FilterConfig(
        init=init,
        q=_diag(fd["q"], 2, "filter.q") if "q" in fd else odo.q,
        p_pre_ind=_diag(fd.get("p_pre_ind", [1e-6, 1e-6, 1e-7]), 3, "filter.p_pre_ind"),
        noise=_noise_model(_section(fd, "noise", "filter."), "filter.noise.", sensor_noise),
        range_sigma=_num(fd, "range_sigma", "filter.", sensor.range_sigma),
        dependent_share=share,
        soft_threshold=_num(fd, "soft_threshold", "filter.", 0.5),
        hard_threshold=_num(fd, "hard_threshold", "filter.", 3.0),
        screen_angle_weight=_num(fd, "screen_angle_weight", "filter.", 1.0),
        adaptive_angle_weight=_num(fd, "adaptive_angle_weight", "filter.", 1.0),
        r_min=_num(fd, "r_min", "filter.", 1e-4),
        d_min=_num(fd, "d_min", "filter.", 0.1),
        max_delay_epochs=_int(fd, "max_delay_epochs", "filter.", 200),
        extrinsics=extr,
    )
    if not 0.0 < fcfg.soft_threshold < fcfg.hard_threshold:
        raise ScenarioError("filter: thresholds must satisfy 0 < soft_threshold < hard_threshold")
    if not 0.0 <= share <= 1.0:
        raise ScenarioError("field 'filter.dependent_share' must lie in [0, 1]")

    try:
        return Scenario(
            name=name,
            seed=seed,
            duration_epochs=duration,
            dt=dt,
            waypoints=waypoints,
            tag_layout=parse_tags(raw),
            sensor=sensor,
            odometry=odo,
            speed=_num(motion, "speed", "motion.", 1.0),
            yaw_rate=_num(motion, "yaw_rate", "motion.", 0.8),
            loop=bool(motion.get("loop", False)),
            extrinsics=extr,
            events=_events(raw.get("events"), duration),
            filter=fcfg,
        )
    except ValueError as e:
        if isinstance(e, ScenarioError):
            raise
        raise ScenarioError(str(e)) from None


def load_scenario(path, overrides=(), seed: int | None = None) -> Scenario:
    raw = load_raw(path)
    for o in overrides:
        set_override(raw, o)
    if seed is not None:
        raw["seed"] = seed
    return scenario_from_dict(raw)


def scenario_with(raw: dict, **changes: Any) -> Scenario:
    """Build a scenario from ``raw`` with dotted-key changes (``filter__hard_threshold``)."""
    raw = copy.deepcopy(raw)
    for k, v in changes.items():
        node = raw
        parts = k.split("__")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = v
    return scenario_from_dict(raw)
