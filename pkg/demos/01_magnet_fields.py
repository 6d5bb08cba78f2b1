# What the Hall sensors see.
#
# Each taxel is a silicone dome with a magnet inside, sitting above a 3-axis
# Hall sensor. Pressing the dome moves the magnet; the sensor reads the change
# in flux density. All four magnets add up at every sensor, so a press on one
# taxel also nudges its neighbours.

import numpy as np

from taxcal.geometry import FingertipGeometry
from taxcal.sensor import DomeModel, MagnetModel, dome_displacement, hall_fields

np.set_printoptions(precision=4, suppress=True)

geo = FingertipGeometry.from_grid()   # 2x2 grid, 4.7 mm pitch
magnet = MagnetModel()                # 1e-3 A*m^2 along +z
dome = DomeModel()

print("dome apexes [mm]\n", geo.taxel_positions * 1e3)

rest = hall_fields(geo, magnet, np.zeros((4, 3)))
print("\nfield at rest [mT] (one row per sensor)\n", rest)

# press taxel 1 straight down with increasing force
print("\nnormal press on taxel 1")
for fz in (0, -2, -4, -6, -8, -10):
    disp = np.zeros((4, 3))
    disp[1], _ = dome_displacement(dome, [0, 0, fz])
    b = hall_fields(geo, magnet, disp)
    print(f"  Fz={fz:4d} N  own={b[1]}  neighbour 0={b[0] - rest[0]}")

# shear shows up mostly in Bx / By
disp = np.zeros((4, 3))
disp[1], _ = dome_displacement(dome, [2, 0, -5])
print("\nshear (+2, 0, -5) N on taxel 1, change at own sensor:", hall_fields(geo, magnet, disp)[1] - rest[1])

# hysteresis: the dome lags a step in force
slow = DomeModel(hysteresis_tau=0.3)
state = np.zeros(3)
print("\nstep to -6 N with tau = 0.3 s")
for k in range(1, 61):
    state, _ = dome_displacement(slow, [0, 0, -6], state, 0.01)
    if k % 10 == 0:
        print(f"  t={k * 0.01:.1f} s  dz={state[2] * 1e3:.4f} mm (steady state -0.5)")
