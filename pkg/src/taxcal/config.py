"""Rig and procedure configuration.

Configuration files are flat ``key = value`` text, one key per line, with
dotted namespaces (``ft.rate = 416.7``). Values are JSON literals (numbers,
booleans, strings, arrays), which keeps the format a strict subset of TOML.
``#`` starts a comment. Unknown keys, wrong types and out-of-range values are
rejected with the offending key and line number.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from taxcal.geometry import FingertipGeometry, Pose, as_vec3
from taxcal.sensor import DomeModel, MagnetModel

DEFAULT_FORCES = [
    [0.0, 0.0, -2.0],
    [0.0, 0.0, -4.0],
    [0.0, 0.0, -6.0],
    [0.0, 0.0, -8.0],
    [0.0, 0.0, -10.0],
    [2.0, 0.0, -5.0],
    [-2.0, 0.0, -5.0],
    [0.0, 2.0, -5.0],
    [0.0, -2.0, -5.0],
]

# Single source of truth for every key and its default; the type of each
# default is the type the key accepts.
DEFAULTS: dict[str, object] = {
    "sim.seed": 0,
    "grid.rows": 2,
    "grid.cols": 2,
    "grid.pitch": 4.7e-3,
    "fingertip.magnet_rest_height": 3.5e-3,
    "fingertip.dome_height": 5.0e-3,
    "fingertip.outer_dimensions": [8e-3, 7e-3, 4e-3],
    "fingertip.capture_radius": 1e-3,
    "fingertip.mount_translation": [0.0, 0.0, 0.03],
    "fingertip.mount_rotvec": [0.0, 0.0, 0.0],
    "magnet.moment": 1.0e-3,
    "magnet.axis": [0.0, 0.0, 1.0],
    "magnet.height": 1.0e-3,
    "magnet.diameter": 1.5e-3,
    "magnet.tilt_gain": 0.0,
    "dome.stiffness": [6000.0, 6000.0, 12000.0],
    "dome.max_displacement": [0.8e-3, 0.8e-3, 1.5e-3],
    "dome.hysteresis_tau": 0.0,
    "hall.rate": 100.0,
    "hall.noise_sigma": 0.01,
    "hall.offset": [0.0, 0.0, 0.0],
    "hall.lsb": 1.5e-4,
    "hall.full_scale": 50.0,
    "ft.rate": 416.7,
    "ft.noise_sigma": 0.05,
    "probe.tip": [0.40, 0.10, 0.05],
    "probe.direction": [0.0, 0.0, 1.0],
    "probe.contact_stiffness": 1.0e5,
    "procedure.probe_guess": [0.4008, 0.0994, 0.0512],
    "procedure.standoff": 0.01,
    "procedure.approach_speed": 5e-3,
    "procedure.travel_speed": 0.05,
    "procedure.contact_threshold": 1.0,
    "procedure.baseline_window": 50,
    "procedure.penetration_correction": True,
    "procedure.use_true_probe": False,
    "procedure.force_gain": 1e-4,
    "procedure.force_rate": 1.0,
    "procedure.settle_time": 0.5,
    "schedule.forces": DEFAULT_FORCES,
    "schedule.holds": [2.0] * len(DEFAULT_FORCES),
    "workspace.min": [0.0, -0.6, 0.0],
    "workspace.max": [0.8, 0.6, 0.7],
}

VEC3_KEYS = {k for k, v in DEFAULTS.items() if isinstance(v, list) and len(v) == 3 and not isinstance(v[0], list)}


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.message = message
        self.key = key
        self.line = line


def _coerce(key: str, value, line: int | None):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError("expected true or false", key, line)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError("expected an integer", key, line)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("expected a number", key, line)
        return float(value)
    if key in VEC3_KEYS:
        if not (isinstance(value, list) and len(value) == 3
                and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
            raise ConfigError("expected an array of 3 numbers", key, line)
        return [float(v) for v in value]
    if key == "schedule.forces":
        if not (isinstance(value, list) and all(isinstance(r, list) and len(r) == 3 for r in value)):
            raise ConfigError("expected an array of [fx, fy, fz] triples", key, line)
        return [[float(v) for v in r] for r in value]
    if key == "schedule.holds":
        if not (isinstance(value, list) and all(isinstance(v, (int, float)) for v in value)):
            raise ConfigError("expected an array of numbers", key, line)
        return [float(v) for v in value]
    raise ConfigError("unsupported key type", key, line)  # pragma: no cover


def parse_config_text(text: str) -> dict:
    """Parse flat config text into a {key: value} dict (overrides only)."""
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, _, rhs = line.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError("unknown key", key, lineno)
        if key in values:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", key, lineno)
        try:
            value = json.loads(rhs.strip())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid value: {exc.msg}", key, lineno) from None
        values[key] = _coerce(key, value, lineno)
        lines[key] = lineno
    # semantic validation needs the merged view, but reports the source line
    try:
        RigConfig(values)
    except ConfigError as exc:
        if exc.key in lines and exc.line is None:
            raise ConfigError(exc.message, exc.key, lines[exc.key]) from None
        raise
    return values


def format_config(values: dict) -> str:
    out = ["# taxcal rig configuration (flat keys, JSON values)"]
    section = None
    for key in DEFAULTS:
        head = key.split(".", 1)[0]
        if head != section:
            out.append("")
            section = head
        out.append(f"{key} = {json.dumps(values[key])}")
    return "\n".join(out) + "\n"


class RigConfig:
    """All simulator and procedure parameters, built from flat keys.

    ``RigConfig()`` gives the defaults; pass a dict of overrides to change
    individual keys. ``values`` always holds the complete flat mapping.
    """

    def __init__(self, overrides: dict | None = None):
        values = {k: (list(v) if isinstance(v, list) else v) for k, v in DEFAULTS.items()}
        for key, value in (overrides or {}).items():
            if key not in DEFAULTS:
                raise ConfigError("unknown key", key)
            values[key] = _coerce(key, value, None)
        self.values = values
        self._build()

    def _build(self):
        v = self.values
        for key in ("hall.rate", "ft.rate", "probe.contact_stiffness", "procedure.approach_speed",
                    "procedure.travel_speed", "procedure.standoff", "procedure.contact_threshold",
                    "procedure.force_gain", "procedure.force_rate", "hall.full_scale"):
            if not v[key] > 0:
                raise ConfigError("must be positive", key)
        for key in ("hall.noise_sigma", "ft.noise_sigma", "hall.lsb", "procedure.settle_time"):
            if not v[key] >= 0:
                raise ConfigError("must be >= 0", key)
        if v["grid.rows"] < 1 or v["grid.cols"] < 1:
            raise ConfigError("grid needs at least one row and column", "grid.rows")
        if v["procedure.baseline_window"] < 1:
            raise ConfigError("must be >= 1", "procedure.baseline_window")
        direction = np.asarray(v["probe.direction"], dtype=float)
        if np.linalg.norm(direction) < 1e-9:
            raise ConfigError("probe direction must be a non-zero vector", "probe.direction")
        if len(v["schedule.forces"]) != len(v["schedule.holds"]):
            raise ConfigError("schedule.forces and schedule.holds must have equal length", "schedule.holds")
        if any(h < 0 for h in v["schedule.holds"]):
            raise ConfigError("hold durations must be >= 0", "schedule.holds")
        if np.any(np.asarray(v["workspace.min"]) >= np.asarray(v["workspace.max"])):
            raise ConfigError("workspace.min must be below workspace.max on every axis", "workspace.max")

        rotvec = np.asarray(v["fingertip.mount_rotvec"], dtype=float)
        angle = float(np.linalg.norm(rotvec))
        mount = (Pose.from_axis_angle(rotvec / angle, angle, v["fingertip.mount_translation"])
                 if angle > 0 else Pose.from_translation(v["fingertip.mount_translation"]))
        try:
            self.fingertip = FingertipGeometry.from_grid(
                rows=v["grid.rows"], cols=v["grid.cols"], pitch=v["grid.pitch"],
                magnet_rest_height=v["fingertip.magnet_rest_height"],
                dome_height=v["fingertip.dome_height"],
                outer_dimensions=v["fingertip.outer_dimensions"],
                capture_radius=v["fingertip.capture_radius"], mount=mount)
        except ValueError as exc:
            raise ConfigError(str(exc), "fingertip.outer_dimensions") from None
        axis = np.asarray(v["magnet.axis"], dtype=float)
        if np.linalg.norm(axis) < 1e-9:
            raise ConfigError("magnet axis must be non-zero", "magnet.axis")
        try:
            self.magnet = MagnetModel(v["magnet.moment"], axis / np.linalg.norm(axis),
                                      v["magnet.height"], v["magnet.diameter"], v["magnet.tilt_gain"])
        except ValueError as exc:
            raise ConfigError(str(exc), "magnet.moment") from None
        try:
            self.dome = DomeModel(v["dome.stiffness"], v["dome.max_displacement"], v["dome.hysteresis_tau"])
        except ValueError as exc:
            raise ConfigError(str(exc), "dome.stiffness") from None

        self.hall_rate = v["hall.rate"]
        self.ft_rate = v["ft.rate"]
        self.hall_noise_sigma = v["hall.noise_sigma"]
        self.hall_offset = as_vec3(v["hall.offset"])
        self.hall_lsb = v["hall.lsb"]
        self.hall_full_scale = v["hall.full_scale"]
        self.ft_noise_sigma = v["ft.noise_sigma"]
        self.probe_tip_true = as_vec3(v["probe.tip"])
        self.probe_direction = direction / np.linalg.norm(direction)
        self.contact_stiffness = v["probe.contact_stiffness"]
        self.probe_guess = as_vec3(v["procedure.probe_guess"])
        self.standoff = v["procedure.standoff"]
        self.approach_speed = v["procedure.approach_speed"]
        self.travel_speed = v["procedure.travel_speed"]
        self.contact_threshold = v["procedure.contact_threshold"]
        self.baseline_window = v["procedure.baseline_window"]
        self.penetration_correction = v["procedure.penetration_correction"]
        self.use_true_probe = v["procedure.use_true_probe"]
        self.force_gain = v["procedure.force_gain"]
        self.force_rate = v["procedure.force_rate"]
        self.settle_time = v["procedure.settle_time"]
        self.force_schedule = [(np.asarray(f), h) for f, h in zip(v["schedule.forces"], v["schedule.holds"])]
        self.workspace_min = as_vec3(v["workspace.min"])
        self.workspace_max = as_vec3(v["workspace.max"])
        self.rng_seed = v["sim.seed"]

    def with_overrides(self, overrides: dict) -> RigConfig:
        merged = dict(self.values)
        merged.update(overrides)
        return RigConfig(merged)

    def to_text(self) -> str:
        return format_config(self.values)

    @classmethod
    def from_text(cls, text: str) -> RigConfig:
        return cls(parse_config_text(text))

    @classmethod
    def load(cls, path) -> RigConfig:
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8", newline="\n")

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def __repr__(self) -> str:
        changed = {k: v for k, v in self.values.items() if v != DEFAULTS[k]}
        return f"RigConfig({changed})"
