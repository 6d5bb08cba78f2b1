"""Three-touch probe localization and press planning.

The robot touches the probe with the front, side and top faces of the
fingertip. Each touch is detected from the F/T stream and pins the probe tip
to the plane of the touched face; intersecting the three planes gives the tip
position in the base frame.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from taxcal.geometry import FACES, FingertipGeometry, Pose, as_vec3, compose, facing_rotation, invert, rotate_vector, transform_point

log = logging.getLogger(__name__)

MAX_CONDITION = 1e8
# side and top first: they fix the guess along the grid plane so the front
# touch lands between the domes rather than on one
TOUCH_ORDER = ("side", "top", "front")


class DegenerateGeometryError(ValueError):
    """Touch planes do not intersect in a single well-defined point."""


@dataclass(frozen=True)
class ContactEvent:
    t: float
    flange_pose_at_contact: Pose
    approach_direction: np.ndarray
    face: str
    penetration: float = 0.0  # estimated depth past the face at detection [m]

    def __post_init__(self):
        if self.face not in FACES:
            raise ValueError(f"face must be one of {FACES}, got {self.face!r}")
        d = as_vec3(self.approach_direction, "approach_direction")
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("approach_direction must be a unit vector")
        object.__setattr__(self, "approach_direction", d)


@dataclass(frozen=True)
class ProbeEstimate:
    tip_position: np.ndarray
    residual: float


def detect_contact(ft, baseline_window: int, threshold: float):
    """Timestamp of the first sample deviating more than ``threshold`` from the baseline.

    ``ft`` is a sequence of :class:`~taxcal.sensor.FtSample` or a
    :class:`~taxcal.acquisition.TimeSeries`. The baseline is the mean of the
    first ``baseline_window`` samples. Returns None when never exceeded.
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    t, f = _as_arrays(ft)
    if len(t) < baseline_window:
        raise ValueError(f"stream has {len(t)} samples, shorter than baseline window {baseline_window}")
    baseline = f[:baseline_window].mean(axis=0)
    hits = np.flatnonzero(np.linalg.norm(f - baseline, axis=1) > threshold)
    return float(t[hits[0]]) if hits.size else None


def _as_arrays(ft):
    if hasattr(ft, "timestamps"):
        return np.asarray(ft.timestamps), np.asarray(ft.values).reshape(-1, 3)
    ft = list(ft)
    if not ft:
        return np.zeros(0), np.zeros((0, 3))
    return np.array([s.t for s in ft]), np.array([s.f for s in ft])


class ContactDetector:
    """Online form of :func:`detect_contact`, fed one sample at a time."""

    def __init__(self, baseline_window: int, threshold: float):
        self.baseline_window = baseline_window
        self.threshold = threshold
        self._sum = np.zeros(3)
        self._count = 0
        self.baseline = None

    def update(self, f) -> float | None:
        """Return the excess force magnitude when contact is detected, else None."""
        f = np.asarray(f, dtype=float)
        if self.baseline is None:
            self._sum += f
            self._count += 1
            if self._count == self.baseline_window:
                self.baseline = self._sum / self._count
                excess = float(np.linalg.norm(f - self.baseline))
                return excess if excess > self.threshold else None
            return None
        excess = float(np.linalg.norm(f - self.baseline))
        return excess if excess > self.threshold else None


def face_plane(event: ContactEvent, geometry: FingertipGeometry):
    """Base-frame plane ``(normal, offset)`` with ``normal @ tip == offset``."""
    fingertip = compose(event.flange_pose_at_contact, geometry.mount)
    n_local = geometry.face_normal(event.face)
    normal = rotate_vector(fingertip, n_local)
    point = transform_point(fingertip, geometry.face_offset(event.face) * n_local)
    point = point - event.penetration * event.approach_direction
    return normal, float(normal @ point)


def localize_probe(events, geometry: FingertipGeometry, probe_direction=None) -> ProbeEstimate:
    """Intersect the three touched face planes.

    ``probe_direction`` is optional; the probe tip is modelled as a point so
    only its unit norm is checked.
    """
    events = list(events)
    if len(events) != 3:
        raise ValueError(f"need exactly 3 contact events, got {len(events)}")
    if len({e.face for e in events}) != 3:
        raise ValueError("contact events must cover three distinct faces")
    if probe_direction is not None:
        d = as_vec3(probe_direction, "probe_direction")
        if abs(np.linalg.norm(d) - 1.0) > 1e-6:
            raise ValueError("probe_direction must be a unit vector")
    planes = [face_plane(e, geometry) for e in events]
    a = np.array([p[0] for p in planes])
    b = np.array([p[1] for p in planes])
    dirs = np.array([e.approach_direction for e in events])
    if np.linalg.cond(dirs) > MAX_CONDITION or np.linalg.cond(a) > MAX_CONDITION:
        raise DegenerateGeometryError("approach directions / face normals are not linearly independent")
    tip = np.linalg.solve(a, b)
    residual = float(np.max(np.abs(a @ tip - b)))
    return ProbeEstimate(tip, residual)


def plan_taxel_press(estimate: ProbeEstimate, geometry: FingertipGeometry, taxel: int, probe_direction) -> Pose:
    """Flange pose putting ``taxel``'s dome apex on the probe tip, sensing face toward the probe."""
    taxel = geometry.check_taxel(taxel)
    rot = facing_rotation(probe_direction)
    origin = np.asarray(estimate.tip_position, dtype=float) - rot @ geometry.taxel_positions[taxel]
    fingertip = Pose.from_matrix(rot, origin)
    return compose(fingertip, invert(geometry.mount))


def touch_and_localize(rig, faces=TOUCH_ORDER):
    """Run the three-touch procedure on a simulated rig.

    Starts from ``config.probe_guess`` (the operator's rough placement), and
    for each face approaches along the face normal at ``approach_speed`` until
    the F/T reading leaves the baseline by more than ``contact_threshold``.
    After each touch the guess is projected onto the measured plane so later
    touches aim better. Returns ``(ProbeEstimate, [ContactEvent, ...])``.
    """
    from taxcal.rig import ProcedureError

    cfg = rig.config
    geo = rig.geometry
    rot = facing_rotation(cfg.probe_direction)
    guess = cfg.probe_guess.copy()
    dt = 1.0 / cfg.ft_rate
    events = []
    for face in faces:
        n_local = geo.face_normal(face)
        normal = rot @ n_local
        origin = guess - rot @ geo.touch_point(face) - cfg.standoff * normal
        start = rig.flange_for_fingertip(Pose.from_matrix(rot, origin))
        goal = rig.flange_for_fingertip(Pose.from_matrix(rot, origin + 2 * cfg.standoff * normal))
        rig.move_to(start, cfg.travel_speed)

        detector = ContactDetector(cfg.baseline_window, cfg.contact_threshold)
        event = None
        while event is None:
            res = rig.step_toward(goal, cfg.approach_speed, dt)
            for sample, pose in zip(res.ft, res.ft_poses):
                excess = detector.update(sample.f)
                if excess is not None:
                    depth = excess / cfg.contact_stiffness if cfg.penetration_correction else 0.0
                    event = ContactEvent(sample.t, pose, normal, face, depth)
                    break
            if event is None and np.array_equal(rig.flange_pose.translation, goal.translation):
                raise ProcedureError(f"no contact found on the {face} face within {2 * cfg.standoff} m of travel")
        log.info("phase=touch face=%s t=%.4f pose=%s", face, event.t, event.flange_pose_at_contact.format())
        events.append(event)
        n_base, offset = face_plane(event, geo)
        guess = guess + (offset - n_base @ guess) * n_base
        rig.move_to(start, cfg.approach_speed, check_contact=False)

    estimate = localize_probe(events, geo, cfg.probe_direction)
    log.info("phase=localized tip=%s residual=%.3g", np.array2string(estimate.tip_position, precision=6), estimate.residual)
    return estimate, events
