import logging

import numpy as np
import pytest

from taxcal.acquisition import TimeSeries
from taxcal.config import RigConfig
from taxcal.geometry import FingertipGeometry, Pose, compose, facing_rotation
from taxcal.localization import (ContactDetector, ContactEvent, DegenerateGeometryError, ProbeEstimate,
                                 detect_contact, face_plane, localize_probe, plan_taxel_press, touch_and_localize)
from taxcal.rig import Rig
from taxcal.sensor import FtSample

GEO = FingertipGeometry.from_grid()


def events_for(tip, rot=np.eye(3)):
    """Exact contact events for a fingertip with rotation ``rot`` touching ``tip`` with each face."""
    out = []
    for face in ("front", "side", "top"):
        n = GEO.face_normal(face)
        origin = tip - rot @ (GEO.face_offset(face) * n)
        out.append(ContactEvent(0.0, Pose.from_matrix(rot, origin), rot @ n, face))
    return out


def test_localize_exact_planes():
    tip = np.array([0.41, -0.02, 0.07])
    est = localize_probe(events_for(tip), GEO)
    assert np.allclose(est.tip_position, tip, atol=1e-15) and est.residual < 1e-15
    rot = facing_rotation([0.2, -0.1, 1.0])
    assert np.allclose(localize_probe(events_for(tip, rot), GEO).tip_position, tip, atol=1e-12)


def test_penetration_shifts_plane():
    ev = events_for(np.zeros(3))[0]
    deep = ContactEvent(ev.t, ev.flange_pose_at_contact, ev.approach_direction, ev.face, 1e-4)
    _, off0 = face_plane(ev, GEO)
    _, off1 = face_plane(deep, GEO)
    assert off1 == pytest.approx(off0 - 1e-4)


def test_event_validation():
    with pytest.raises(ValueError):
        ContactEvent(0.0, Pose(), [0, 0, 2], "front")
    with pytest.raises(ValueError):
        ContactEvent(0.0, Pose(), [0, 0, 1], "bottom")
    ev = events_for(np.zeros(3))
    with pytest.raises(ValueError):
        localize_probe(ev[:2], GEO)
    with pytest.raises(ValueError):
        localize_probe([ev[0], ev[0], ev[1]], GEO)


def test_degenerate_directions_rejected():
    ev = events_for(np.zeros(3))
    flipped = compose(ev[2].flange_pose_at_contact, Pose.from_axis_angle([0, 1, 0], -np.pi / 2))
    bad = [ev[0], ev[1], ContactEvent(0.0, flipped, ev[0].approach_direction, "top")]
    with pytest.raises(DegenerateGeometryError):
        localize_probe(bad, GEO)


def test_detect_contact_batch_and_online():
    f = np.zeros((200, 3))
    f[120:, 2] = -1.5
    t = np.arange(200) / 416.7
    assert detect_contact(TimeSeries(t, f), 50, 1.0) == t[120]
    assert detect_contact([FtSample(a, b) for a, b in zip(t, f)], 50, 1.0) == t[120]
    assert detect_contact(TimeSeries(t, np.zeros((200, 3))), 50, 1.0) is None
    det = ContactDetector(50, 1.0)
    hits = [det.update(x) for x in f]
    assert hits.index(next(h for h in hits if h is not None)) == 120
    with pytest.raises(ValueError):
        detect_contact(TimeSeries(t, f), 50, 0.0)


def test_plan_press_puts_apex_on_tip():
    est = ProbeEstimate(np.array([0.4, 0.1, 0.05]), 0.0)
    for taxel in range(4):
        flange = plan_taxel_press(est, GEO, taxel, [0, 0, 1])
        fingertip = compose(flange, GEO.mount)
        apex = fingertip.rotation @ GEO.taxel_positions[taxel] + fingertip.translation
        assert np.allclose(apex, est.tip_position, atol=1e-15)


def test_touch_procedure_logs_phases(caplog):
    cfg = RigConfig({"hall.noise_sigma": 0.0, "ft.noise_sigma": 0.0})
    with caplog.at_level(logging.INFO, logger="taxcal"):
        est, events = touch_and_localize(Rig(cfg, 0))
    assert [e.face for e in events] == ["side", "top", "front"]
    msgs = [r.getMessage() for r in caplog.records]
    assert sum(m.startswith("phase=touch face=") for m in msgs) == 3
    assert any(m.startswith("phase=localized") for m in msgs)
    assert np.allclose(est.tip_position, cfg.probe_tip_true, atol=1e-9)


def test_penetration_correction_matters():
    cfg = RigConfig({"hall.noise_sigma": 0.0, "ft.noise_sigma": 0.0, "procedure.penetration_correction": False})
    est, _ = touch_and_localize(Rig(cfg, 0))
    err = np.linalg.norm(est.tip_position - cfg.probe_tip_true)
    # uncorrected planes sit about threshold / stiffness past each face
    assert 1e-6 < err < 1e-4
