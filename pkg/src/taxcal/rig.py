"""Virtual robot, probe and wrist F/T sensor.

The rig moves a Cartesian flange pose (no joint model) against a rigid probe
whose tip is a point at ``config.probe_tip_true``. Contact is penalty based:
when the probe tip is inside the fingertip body, or seated under a dome apex,
the fingertip receives ``contact_stiffness * penetration``. Dome contacts load
only that taxel's dome model; the F/T sensor sees the total force.

Time advances in calls to :meth:`Rig.step_toward`. Inside a step the rig
sub-steps exactly onto every sample instant of both streams, so F/T samples
land at ``k / ft_rate`` and Hall samples at ``j / hall_rate``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from taxcal.config import RigConfig
from taxcal.geometry import FingertipGeometry, Pose, compose, facing_rotation, interpolate, invert
from taxcal.sensor import FtSample, HallSample, apply_readout, dome_displacement, hall_fields

log = logging.getLogger(__name__)

_EPS_T = 1e-12


class TaxelUnreachableError(RuntimeError):
    pass


class ProcedureError(RuntimeError):
    pass


@dataclass(frozen=True)
class RigState:
    flange_pose: Pose
    dome_states: np.ndarray
    clock: float


@dataclass
class StepResult:
    state: RigState
    ft: list[FtSample]
    hall: list[HallSample]
    ft_poses: list[Pose]


@dataclass
class RawLog:
    """Dual-rate recording: F/T samples plus Hall samples of the recorded taxels."""

    hall: list[HallSample] = field(default_factory=list)
    ft: list[FtSample] = field(default_factory=list)

    def extend(self, other: RawLog) -> None:
        self.hall.extend(other.hall)
        self.ft.extend(other.ft)

    @property
    def taxels(self) -> list[int]:
        return sorted({s.taxel for s in self.hall})

    def __len__(self) -> int:
        return len(self.hall) + len(self.ft)


def contact_forces(geometry: FingertipGeometry, probe_local, stiffness: float):
    """Penalty forces for a point probe at ``probe_local`` (fingertip frame).

    Returns ``(total, per_dome)``: the net force on the fingertip and the
    (n, 3) forces carried by each dome, both in the fingertip frame.
    """
    px, py, pz = (float(v) for v in probe_local)
    per_dome = np.zeros((geometry.n_taxels, 3))
    tx = ty = tz = 0.0

    # dome seats: bilateral laterally (the probe tip cups the dome), unilateral normally
    best, best_lat = -1, geometry.capture_radius
    for i, (ax, ay, az) in enumerate(geometry.taxel_positions.tolist()):
        if pz < az:
            lat = math.hypot(px - ax, py - ay)
            if lat < best_lat:
                best, best_lat = i, lat
    if best >= 0:
        ax, ay, az = geometry.taxel_positions[best]
        fx, fy, fz = stiffness * (px - ax), stiffness * (py - ay), stiffness * (pz - az)
        per_dome[best] = (fx, fy, fz)
        tx, ty, tz = fx, fy, fz

    hx, hy, hz = geometry.outer_dimensions.tolist()
    if abs(px) < hx and abs(py) < hy and abs(pz) < hz:
        # push out through the face of least penetration
        depths = (hx - px, hx + px, hy - py, hy + py, hz - pz, hz + pz)
        j = min(range(6), key=depths.__getitem__)
        push = stiffness * depths[j] * (-1.0 if j % 2 == 0 else 1.0)
        if j < 2:
            tx += push
        elif j < 4:
            ty += push
        else:
            tz += push
    return np.array([tx, ty, tz]), per_dome


class Rig:
    """Simulated robot + fingertip + probe with its own seeded RNG."""

    def __init__(self, config: RigConfig, seed: int | None = None, initial_pose: Pose | None = None):
        self.config = config
        self.geometry = config.fingertip
        self.rng = np.random.default_rng(config.rng_seed if seed is None else seed)
        self._probe_tip = config.probe_tip_true
        self._frame_quat = None
        self._mount_inv = invert(self.geometry.mount)
        if initial_pose is None:
            tip = config.probe_guess + 3 * config.standoff * config.probe_direction
            initial_pose = self.flange_for_fingertip(Pose.from_matrix(facing_rotation(config.probe_direction), tip))
        self._set_flange(initial_pose)
        self.dome_states = np.zeros((self.geometry.n_taxels, 3))
        self.clock = 0.0
        self._ft_index = 0
        self._hall_index = 0
        self.recording: set[int] = set()
        self.log = RawLog()
        self.last_ft = FtSample(0.0, np.zeros(3))

    # frames -----------------------------------------------------------------
    def _set_flange(self, pose: Pose) -> None:
        self.flange_pose = pose
        if self._frame_quat is None or not np.array_equal(pose.quat, self._frame_quat):
            tip = compose(pose, self.geometry.mount)
            self._tip_rot_t = tip.rotation.T
            self._mount_offset = tip.translation - pose.translation
            self._frame_quat = pose.quat
        self._tip_pos = pose.translation + self._mount_offset
        self._contact = contact_forces(self.geometry, self._tip_rot_t @ (self._probe_tip - self._tip_pos),
                                       self.config.contact_stiffness)

    def fingertip_pose(self, flange: Pose | None = None) -> Pose:
        return compose(self.flange_pose if flange is None else flange, self.geometry.mount)

    def flange_for_fingertip(self, fingertip: Pose) -> Pose:
        return compose(fingertip, self._mount_inv)

    @property
    def state(self) -> RigState:
        return RigState(self.flange_pose, self.dome_states.copy(), self.clock)

    def probe_in_fingertip(self, flange: Pose | None = None) -> np.ndarray:
        if flange is None:
            return self._tip_rot_t @ (self._probe_tip - self._tip_pos)
        ft = self.fingertip_pose(flange)
        return ft.rotation.T @ (self._probe_tip - ft.translation)

    def contact(self, flange: Pose | None = None):
        """``(total, per_dome)`` contact forces at the current (or given) flange pose."""
        if flange is None:
            return self._contact
        return contact_forces(self.geometry, self.probe_in_fingertip(flange), self.config.contact_stiffness)

    # stepping ---------------------------------------------------------------
    def _advance(self, t: float, target: Pose, speed: float) -> None:
        h = t - self.clock
        if h <= 0:
            return
        cur = self.flange_pose
        delta = target.translation - cur.translation
        dist = math.sqrt(float(delta @ delta))
        same_rot = np.array_equal(cur.quat, target.quat)
        if dist > 0 or not same_rot:
            frac = 1.0 if dist <= speed * h else speed * h / dist
            if frac >= 1:
                self._set_flange(target)
            elif same_rot:
                self._set_flange(Pose._trusted(cur.quat, cur.translation + frac * delta))
            else:
                self._set_flange(interpolate(cur, target, frac))
        _, per_dome = self._contact
        self.dome_states, _ = dome_displacement(self.config.dome, per_dome, self.dome_states, h)
        self.clock = t

    def step_toward(self, target: Pose, speed: float, dt: float) -> StepResult:
        """Move the flange linearly toward ``target`` at ``speed`` for ``dt`` seconds."""
        if not (speed > 0 and dt > 0):
            raise ValueError("speed and dt must be positive")
        cfg = self.config
        end = self.clock + dt
        ft_out, hall_out, poses = [], [], []
        while True:
            t_ft = self._ft_index / cfg.ft_rate
            t_hall = self._hall_index / cfg.hall_rate
            t_next = min(t_ft, t_hall)
            if t_next > end + _EPS_T:
                break
            self._advance(t_next, target, speed)
            force = self._contact[0]
            if t_ft == t_next:
                f = force + (self.rng.normal(0.0, cfg.ft_noise_sigma, 3) if cfg.ft_noise_sigma > 0 else 0.0)
                sample = FtSample(t_ft, f)
                ft_out.append(sample)
                poses.append(self.flange_pose)
                self.last_ft = sample
                self._ft_index += 1
            if t_hall == t_next:
                if self.recording:
                    b = hall_fields(self.geometry, cfg.magnet, self.dome_states)
                    for taxel in sorted(self.recording):
                        hall_out.append(HallSample(t_hall, taxel, apply_readout(b[taxel], cfg, self.rng)))
                self._hall_index += 1
        self._advance(end, target, speed)
        self.log.ft.extend(ft_out)
        self.log.hall.extend(hall_out)
        return StepResult(self.state, ft_out, hall_out, poses)

    def move_to(self, target: Pose, speed: float, check_contact: bool = True) -> None:
        """Travel to ``target``; raises if an unexpected contact occurs on the way."""
        dt = 1.0 / self.config.ft_rate
        limit = self.config.contact_threshold
        while not (np.array_equal(self.flange_pose.translation, target.translation)
                   and np.array_equal(self.flange_pose.quat, target.quat)):
            res = self.step_toward(target, speed, dt)
            if check_contact and any(np.linalg.norm(s.f) > 20 * limit for s in res.ft):
                raise ProcedureError(f"unexpected contact while travelling at t={self.clock:.4f}")

    def dwell(self, duration: float) -> None:
        dt = 1.0 / self.config.ft_rate
        end = self.clock + duration
        while self.clock < end - _EPS_T:
            self.step_toward(self.flange_pose, 1.0, min(dt, end - self.clock))

    def check_workspace(self, pose: Pose, what: str = "target") -> None:
        p = pose.translation
        if np.any(p < self.config.workspace_min) or np.any(p > self.config.workspace_max):
            raise TaxelUnreachableError(f"{what} flange position {p.tolist()} is outside the workspace box")


def setpoint_profile(schedule, force_rate: float, settle_time: float):
    """Piecewise-linear force setpoint: ramp at ``force_rate`` to each target, hold, finally ramp to zero.

    Returns a list of ``(t_start, t_end, f_start, f_end)`` segments starting at t = 0.
    """
    segments = []
    t, prev = 0.0, np.zeros(3)
    targets = [(np.asarray(f, dtype=float), float(h)) for f, h in schedule]
    targets.append((np.zeros(3), settle_time))
    for f, hold in targets:
        ramp = float(np.max(np.abs(f - prev))) / force_rate
        if ramp > 0:
            segments.append((t, t + ramp, prev, f))
            t += ramp
        if hold > 0:
            segments.append((t, t + hold, f, f))
            t += hold
        prev = f
    return segments


def _setpoint_at(segments, t: float) -> np.ndarray:
    for t0, t1, f0, f1 in segments:
        if t <= t1:
            if t1 == t0:
                return f1
            a = max(0.0, (t - t0) / (t1 - t0))
            return f0 + a * (f1 - f0)
    return segments[-1][3]


def press_schedule(rig: Rig, taxel: int, schedule=None, press_pose: Pose | None = None) -> RawLog:
    """Press ``taxel``'s dome into the probe and track ``schedule`` with a P force controller.

    ``press_pose`` is the planned flange pose placing the dome apex on the
    probe tip (see :func:`taxcal.localization.plan_taxel_press`). Without it
    the ground-truth probe position is used, a simulator-only shortcut.
    Returns the F/T and Hall samples recorded during this press.
    """
    cfg = rig.config
    taxel = rig.geometry.check_taxel(taxel)
    schedule = cfg.force_schedule if schedule is None else list(schedule)
    if not schedule:
        return RawLog()
    if press_pose is None:
        from taxcal.localization import ProbeEstimate, plan_taxel_press
        truth = ProbeEstimate(cfg.probe_tip_true.copy(), 0.0)
        press_pose = plan_taxel_press(truth, rig.geometry, taxel, cfg.probe_direction)
    approach = compose(Pose.from_translation(cfg.standoff * cfg.probe_direction), press_pose)
    rig.check_workspace(press_pose, f"taxel {taxel} press")
    rig.check_workspace(approach, f"taxel {taxel} approach")

    rig.move_to(approach, cfg.travel_speed)
    n_ft, n_hall = len(rig.log.ft), len(rig.log.hall)
    rig.recording = {taxel}
    log.info("phase=press taxel=%d t=%.4f pose=%s", taxel, rig.clock, press_pose.format())
    rig.move_to(press_pose, cfg.approach_speed, check_contact=False)

    segments = setpoint_profile(schedule, cfg.force_rate, cfg.settle_time)
    t0 = rig.clock
    duration = segments[-1][1]
    dt = 1.0 / cfg.ft_rate
    while rig.clock - t0 < duration - _EPS_T:
        setpoint = _setpoint_at(segments, rig.clock - t0)
        err = rig.last_ft.f - setpoint
        ft_pose = rig.fingertip_pose()
        move_local = cfg.force_gain * err * dt
        move = ft_pose.rotation @ move_local
        dist = float(np.linalg.norm(move))
        target = Pose._trusted(rig.flange_pose.quat, rig.flange_pose.translation + move)
        rig.step_toward(target, dist / dt if dist > 0 else 1.0, dt)

    rig.move_to(approach, cfg.approach_speed, check_contact=False)
    rig.recording = set()
    log.info("phase=release taxel=%d t=%.4f", taxel, rig.clock)
    return RawLog(rig.log.hall[n_hall:], rig.log.ft[n_ft:])
