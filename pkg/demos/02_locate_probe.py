# Finding the probe.
#
# The fingertip is bolted to a robot flange; a rigid probe stands somewhere in
# front of it. The robot touches the probe with three faces of the fingertip.
# Each touch pins the probe tip to one plane, and three planes meet in a
# point. The F/T sensor tells us when a touch happens.

import logging

import numpy as np

from taxcal.config import RigConfig
from taxcal.localization import touch_and_localize
from taxcal.rig import Rig

logging.basicConfig(level=logging.INFO, format="%(message)s")

cfg = RigConfig()
print("true tip      ", cfg.probe_tip_true)
print("operator guess", cfg.probe_guess, "(off by", np.round((cfg.probe_guess - cfg.probe_tip_true) * 1e3, 2), "mm)")

rig = Rig(cfg, seed=0)
estimate, events = touch_and_localize(rig)
err = np.linalg.norm(estimate.tip_position - cfg.probe_tip_true)
print(f"\nestimate {estimate.tip_position}  error {err * 1e6:.2f} um with default noise")

for e in events:
    print(f"  {e.face:5s} t={e.t:7.3f} s  penetration estimate {e.penetration * 1e6:.2f} um")

# without correcting for how far the probe sank in before the threshold tripped
cfg2 = cfg.with_overrides({"procedure.penetration_correction": False})
est2, _ = touch_and_localize(Rig(cfg2, seed=0))
print(f"\nuncorrected error {np.linalg.norm(est2.tip_position - cfg.probe_tip_true) * 1e6:.2f} um")

# a tilted probe works the same way
cfg3 = cfg.with_overrides({"probe.direction": [0.2, -0.1, 1.0]})
est3, _ = touch_and_localize(Rig(cfg3, seed=1))
print(f"tilted probe error {np.linalg.norm(est3.tip_position - cfg.probe_tip_true) * 1e6:.2f} um")
