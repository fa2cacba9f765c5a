"""Readers and writers for streams, tag maps, mapping sessions and results.

Streams and results are CSV with a single header row whose column names
carry their units. Tag maps and mapping sessions are YAML. Floats are
written with ``repr`` so that reading a file back gives identical values;
an empty CSV cell means "absent".
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np
import yaml

from .geometry import Pose2
from .map_builder import MappingSession, Observation, TagMap
from .measurement import Complete, DistanceOnly, TagMeasurement
from .motion_model import Control
from .sim import Detection, Stream

TRUTH_FILE = "truth.csv"
ODOMETRY_FILE = "odometry.csv"
MEASUREMENTS_FILE = "measurements.csv"
STREAM_FILES = (TRUTH_FILE, ODOMETRY_FILE, MEASUREMENTS_FILE)

TRUTH_HEADER = ["epoch", "x_m", "y_m", "theta_rad"]
ODOMETRY_HEADER = ["epoch", "delta_d_m", "delta_theta_rad", "beta_rad", "dt_s"]
MEASUREMENT_HEADER = [
    "stamp",
    "arrival",
    "tag_id",
    "kind",
    "x_m",
    "y_m",
    "theta_rad",
    "range_m",
    "view_distance_m",
    "view_angle_rad",
    "outlier",
]
TRAJECTORY_HEADER = ["epoch", "x_m", "y_m", "theta_rad", "err_m"]


class InvalidInput(ValueError):
    """An input file is missing, malformed or inconsistent."""


def _f(v) -> str:
    if v is None:
        return ""
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_csv(path: Path, header) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise InvalidInput(f"{path}: file not found")
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        if r.fieldnames != list(header):
            raise InvalidInput(f"{path}: expected header {','.join(header)}")
        return list(r)


def _num(row: dict, key: str, path, line: int, optional: bool = False):
    v = row[key]
    if v == "" and optional:
        return None
    try:
        return float(v)
    except (TypeError, ValueError):
        raise InvalidInput(f"{path}: line {line}: column '{key}' is not a number: {v!r}") from None


# -- streams ------------------------------------------------------------------


def write_stream(stream: Stream, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / TRUTH_FILE,
        TRUTH_HEADER,
        ([k, _f(p.x), _f(p.y), _f(p.theta)] for k, p in enumerate(stream.truth)),
    )
    _write_csv(
        out / ODOMETRY_FILE,
        ODOMETRY_HEADER,
        (
            [k + 1, _f(u.delta_d), _f(u.delta_theta), _f(u.beta), _f(u.dt)]
            for k, u in enumerate(stream.odometry)
        ),
    )
    rows = []
    for d in stream.detections:
        m = d.measurement
        if m.is_complete:
            p = m.payload.pose_in_camera
            vals = ["complete", _f(p.x), _f(p.y), _f(p.theta), ""]
        else:
            vals = ["range", "", "", "", _f(m.payload.range)]
        rows.append(
            [m.stamp, d.arrival, m.tag_id, *vals, _f(m.view_distance), _f(m.view_angle), int(d.outlier)]
        )
    _write_csv(out / MEASUREMENTS_FILE, MEASUREMENT_HEADER, rows)
    return [out / f for f in STREAM_FILES]


def read_stream(in_dir) -> Stream:
    d = Path(in_dir)
    truth_rows = _read_csv(d / TRUTH_FILE, TRUTH_HEADER)
    truth = []
    for i, r in enumerate(truth_rows):
        if int(r["epoch"]) != i:
            raise InvalidInput(f"{d / TRUTH_FILE}: line {i + 2}: epochs must run 0, 1, 2, ...")
        truth.append(Pose2(*(_num(r, c, d / TRUTH_FILE, i + 2) for c in TRUTH_HEADER[1:])))
    n = len(truth)
    if n == 0:
        raise InvalidInput(f"{d / TRUTH_FILE}: no epochs")

    odo = []
    for i, r in enumerate(_read_csv(d / ODOMETRY_FILE, ODOMETRY_HEADER)):
        if int(r["epoch"]) != i + 1:
            raise InvalidInput(f"{d / ODOMETRY_FILE}: line {i + 2}: epochs must run 1, 2, ...")
        vals = [_num(r, c, d / ODOMETRY_FILE, i + 2) for c in ODOMETRY_HEADER[1:]]
        try:
            odo.append(Control(*vals))
        except ValueError as e:
            raise InvalidInput(f"{d / ODOMETRY_FILE}: line {i + 2}: {e}") from None
    if len(odo) != n - 1:
        raise InvalidInput(f"{d / ODOMETRY_FILE}: {len(odo)} controls for {n} truth epochs (need {n - 1})")

    dets = []
    path = d / MEASUREMENTS_FILE
    for i, r in enumerate(_read_csv(path, MEASUREMENT_HEADER)):
        line = i + 2
        try:
            stamp, arrival, tid = int(r["stamp"]), int(r["arrival"]), int(r["tag_id"])
        except ValueError:
            raise InvalidInput(f"{path}: line {line}: stamp, arrival and tag_id must be integers") from None
        if not 0 <= stamp <= arrival < n:
            raise InvalidInput(f"{path}: line {line}: need 0 <= stamp <= arrival < {n}")
        if r["kind"] == "complete":
            payload = Complete(Pose2(*(_num(r, c, path, line) for c in ("x_m", "y_m", "theta_rad"))))
        elif r["kind"] == "range":
            payload = DistanceOnly(_num(r, "range_m", path, line))
        else:
            raise InvalidInput(f"{path}: line {line}: kind must be 'complete' or 'range'")
        try:
            meas = TagMeasurement(
                tid,
                stamp,
                payload,
                _num(r, "view_distance_m", path, line),
                _num(r, "view_angle_rad", path, line),
            )
        except ValueError as e:
            raise InvalidInput(f"{path}: line {line}: {e}") from None
        dets.append(Detection(arrival, meas, r["outlier"] == "1"))
    return Stream(truth, odo, dets)


# -- tag maps and sessions ----------------------------------------------------


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer, bool, int)):
        return v if isinstance(v, bool) else int(v)
    return v


def write_tag_map(tag_map: TagMap, path) -> None:
    doc = {
        "tags": [
            {"id": int(t), "x": float(p.x), "y": float(p.y), "theta": float(p.theta)}
            for t, p in sorted(tag_map.entries.items())
        ],
        "source": _plain(tag_map.source),
    }
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False))


def read_tag_map(path) -> TagMap:
    path = Path(path)
    if not path.exists():
        raise InvalidInput(f"{path}: file not found")
    try:
        doc = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as e:
        raise InvalidInput(f"{path}: {e}") from None
    entries: dict[int, Pose2] = {}
    for i, t in enumerate(doc.get("tags") or []):
        try:
            tid = int(t["id"])
            pose = Pose2(float(t["x"]), float(t["y"]), float(t["theta"]))
        except (KeyError, TypeError, ValueError):
            raise InvalidInput(f"{path}: tags[{i}] needs numeric id, x, y, theta") from None
        if tid in entries:
            raise InvalidInput(f"{path}: duplicate tag id {tid}")
        entries[tid] = pose
    if not entries:
        raise InvalidInput(f"{path}: no tags")
    return TagMap(entries, dict(doc.get("source") or {}))


def write_session(session: MappingSession, path) -> None:
    doc = {
        "anchors": [
            {"epoch": int(k), "x": float(p.x), "y": float(p.y), "theta": float(p.theta)}
            for k, p in sorted(session.robot_poses.items())
        ],
        "observations": [
            {
                "epoch": int(o.epoch),
                "tag_id": int(o.tag_id),
                "x": float(o.relative_pose.x),
                "y": float(o.relative_pose.y),
                "theta": float(o.relative_pose.theta),
                "info": _plain(np.asarray(o.info)),
            }
            for o in session.observations
        ],
    }
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False, default_flow_style=None))


def read_session(path) -> MappingSession:
    path = Path(path)
    if not path.exists():
        raise InvalidInput(f"{path}: file not found")
    try:
        doc = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as e:
        raise InvalidInput(f"{path}: {e}") from None
    anchors = {}
    for i, a in enumerate(doc.get("anchors") or []):
        try:
            anchors[int(a["epoch"])] = Pose2(float(a["x"]), float(a["y"]), float(a["theta"]))
        except (KeyError, TypeError, ValueError):
            raise InvalidInput(f"{path}: anchors[{i}] needs numeric epoch, x, y, theta") from None
    obs = []
    for i, o in enumerate(doc.get("observations") or []):
        try:
            info = np.asarray(o.get("info", np.eye(3)), dtype=float)
            if info.shape == (3,):
                info = np.diag(info)
            if info.shape != (3, 3):
                raise ValueError
            obs.append(
                Observation(
                    int(o["epoch"]),
                    int(o["tag_id"]),
                    Pose2(float(o["x"]), float(o["y"]), float(o["theta"])),
                    info,
                )
            )
        except (KeyError, TypeError, ValueError):
            raise InvalidInput(
                f"{path}: observations[{i}] needs epoch, tag_id, x, y, theta and a 3x3 info"
            ) from None
    if not obs:
        raise InvalidInput(f"{path}: session has no observations")
    session = MappingSession(anchors, obs)
    try:
        session.validate()
    except ValueError as e:
        raise InvalidInput(f"{path}: {e}") from None
    return session


# -- results ------------------------------------------------------------------


def write_trajectory(path, estimates: np.ndarray, errors: np.ndarray) -> None:
    _write_csv(
        path,
        TRAJECTORY_HEADER,
        ([k, _f(e[0]), _f(e[1]), _f(e[2]), _f(err)] for k, (e, err) in enumerate(zip(estimates, errors))),
    )


def read_trajectory(path) -> tuple[np.ndarray, np.ndarray]:
    rows = _read_csv(path, TRAJECTORY_HEADER)
    est = np.array(
        [[np.nan if r[c] == "" else float(r[c]) for c in TRAJECTORY_HEADER[1:4]] for r in rows]
    ).reshape(-1, 3)
    err = np.array([np.nan if r["err_m"] == "" else float(r["err_m"]) for r in rows])
    return est, err


def write_table(path, header, rows) -> None:
    _write_csv(path, header, ([_f(v) if isinstance(v, float) else v for v in row] for row in rows))
