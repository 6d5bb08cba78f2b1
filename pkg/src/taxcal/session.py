"""End-to-end simulated calibration session: localize the probe, then press every taxel."""

from __future__ import annotations

from dataclasses import dataclass

from taxcal.config import RigConfig
from taxcal.localization import ContactEvent, ProbeEstimate, plan_taxel_press, touch_and_localize
from taxcal.rig import RawLog, Rig, press_schedule


@dataclass
class SessionResult:
    log: RawLog
    estimate: ProbeEstimate | None
    events: list[ContactEvent]
    rig: Rig


def simulate_session(config: RigConfig, seed: int | None = None, taxels=None) -> SessionResult:
    """Run touch-localize-press on a fresh rig.

    With ``procedure.use_true_probe`` the three touches are skipped and the
    presses are planned from the ground-truth probe position.
    """
    rig = Rig(config, seed)
    geo = config.fingertip
    if config.use_true_probe:
        estimate, events = ProbeEstimate(config.probe_tip_true.copy(), 0.0), []
    else:
        estimate, events = touch_and_localize(rig)
    for taxel in (range(geo.n_taxels) if taxels is None else taxels):
        pose = plan_taxel_press(estimate, geo, taxel, config.probe_direction)
        press_schedule(rig, taxel, config.force_schedule, pose)
    return SessionResult(rig.log, estimate, events, rig)
