import numpy as np
import pytest

from taxcal.config import RigConfig
from taxcal.geometry import FingertipGeometry, Pose
from taxcal.rig import (ProcedureError, Rig, TaxelUnreachableError, contact_forces, press_schedule,
                        setpoint_profile)

QUIET = {"hall.noise_sigma": 0.0, "ft.noise_sigma": 0.0}


def test_contact_free_far_from_body():
    total, per_dome = contact_forces(FingertipGeometry.from_grid(), np.array([0, 0, 0.02]), 1e5)
    assert np.all(total == 0) and np.all(per_dome == 0)


def test_contact_on_dome_and_face():
    geo = FingertipGeometry.from_grid()
    apex = geo.taxel_positions[2]
    total, per_dome = contact_forces(geo, apex + [0, 0, -1e-4], 1e5)
    # probe pushes the dome down; the fingertip feels the reaction
    assert np.allclose(per_dome[2], [0, 0, -10.0])
    assert np.allclose(np.delete(per_dome, 2, axis=0), 0)
    assert np.allclose(total, [0, 0, -10.0])
    total, per_dome = contact_forces(geo, np.array([7.9e-3, 0, 0]), 1e5)
    assert np.allclose(total, [-10.0, 0, 0]) and np.all(per_dome == 0)


def test_sample_clocks_are_exact_grids():
    rig = Rig(RigConfig(QUIET), 0)
    res = rig.step_toward(rig.flange_pose, 1.0, 0.5)
    t_ft = np.array([s.t for s in res.ft])
    assert np.allclose(t_ft, np.arange(len(t_ft)) / 416.7, rtol=0, atol=1e-15)
    assert len(t_ft) == 209  # 0 .. 208/416.7 <= 0.5
    assert rig.clock == pytest.approx(0.5)


def test_setpoint_profile_ramps_and_holds():
    segs = setpoint_profile([([0, 0, -2.0], 1.0)], force_rate=1.0, settle_time=0.5)
    spans = [(round(a, 9), round(b, 9)) for a, b, _, _ in segs]
    assert spans == [(0, 2), (2, 3), (3, 5), (5, 5.5)]


def test_press_tracks_setpoint():
    cfg = RigConfig({**QUIET, "schedule.forces": [[0, 0, -4.0]], "schedule.holds": [2.0]})
    rig = Rig(cfg, 0)
    log = press_schedule(rig, 1)
    f = np.array([s.f for s in log.ft])
    t = np.array([s.t for s in log.ft])
    # 2 s approach, 4 s ramp, then the hold
    hold = f[(t > t[0] + 7.0) & (t < t[0] + 7.9)]
    assert np.allclose(hold.mean(axis=0), [0, 0, -4.0], atol=0.05)
    assert log.taxels == [1]
    hall_t = np.array([s.t for s in log.hall])
    assert np.allclose(hall_t * 100, np.round(hall_t * 100), atol=1e-9)


def test_empty_schedule_records_nothing():
    rig = Rig(RigConfig(QUIET), 0)
    assert len(press_schedule(rig, 0, [])) == 0


def test_unreachable_press_pose():
    cfg = RigConfig({**QUIET, "probe.tip": [0.85, 0.1, 0.05]})
    with pytest.raises(TaxelUnreachableError):
        press_schedule(Rig(cfg, 0), 0)


def test_unexpected_contact_raises():
    cfg = RigConfig(QUIET)
    rig = Rig(cfg, 0)
    through = Pose(rig.flange_pose.quat, cfg.probe_tip_true + [0, 0, 0.001])
    with pytest.raises(ProcedureError):
        rig.move_to(through, 0.05)


def test_seeded_rigs_are_reproducible():
    cfg = RigConfig({"schedule.forces": [[0, 0, -2.0]], "schedule.holds": [0.5]})
    a, b = press_schedule(Rig(cfg, 4), 0), press_schedule(Rig(cfg, 4), 0)
    assert all(np.array_equal(x.b, y.b) for x, y in zip(a.hall, b.hall))
    assert all(np.array_equal(x.f, y.f) for x, y in zip(a.ft, b.ft))
