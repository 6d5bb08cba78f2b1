"""Physics of one fingertip: dome compliance, magnet dipoles, Hall and F/T readouts.

Chain for a single taxel: contact force -> dome displacement (spring with
saturation and an optional first-order lag) -> magnet pose -> point-dipole
field summed over every magnet at each Hall sensor -> offset, noise,
quantization and full-scale clipping.

Field values are in millitesla, forces in newtons, lengths in metres.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from taxcal.geometry import FingertipGeometry, as_vec3

MU0_OVER_4PI = 1e-7  # T*m/A
TESLA_TO_MT = 1e3


class DipoleSingularityError(ValueError):
    """Field requested at (or within 1 um of) the dipole itself."""


@dataclass(frozen=True)
class MagnetModel:
    moment_magnitude: float = 1.0e-3  # A*m^2
    moment_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    height: float = 1.0e-3
    diameter: float = 1.5e-3
    tilt_gain: float = 0.0  # rad of axis tilt per metre of lateral displacement

    def __post_init__(self):
        axis = as_vec3(self.moment_axis, "moment_axis")
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ValueError("moment_axis must have unit norm")
        if not self.moment_magnitude > 0:
            raise ValueError("moment_magnitude must be positive")
        if not (self.height > 0 and self.diameter > 0):
            raise ValueError("magnet dimensions must be positive")
        object.__setattr__(self, "moment_axis", axis)

    def moment(self, displacement=None) -> np.ndarray:
        """Moment vector [A*m^2], tilted by lateral ``displacement`` when tilt_gain != 0."""
        if displacement is None or self.tilt_gain == 0.0:
            return self.moment_magnitude * self.moment_axis
        d = np.asarray(displacement, dtype=float)
        axis = self.moment_axis + self.tilt_gain * np.array([d[0], d[1], 0.0])
        return self.moment_magnitude * axis / np.linalg.norm(axis)


@dataclass(frozen=True)
class DomeModel:
    stiffness: np.ndarray = field(default_factory=lambda: np.array([6000.0, 6000.0, 12000.0]))
    max_displacement: np.ndarray = field(default_factory=lambda: np.array([0.8e-3, 0.8e-3, 1.5e-3]))
    hysteresis_tau: float = 0.0

    def __post_init__(self):
        k = as_vec3(self.stiffness, "stiffness")
        dmax = as_vec3(self.max_displacement, "max_displacement")
        if np.any(k <= 0):
            raise ValueError("dome stiffness components must be positive")
        if np.any(dmax <= 0):
            raise ValueError("dome max_displacement components must be positive")
        if not self.hysteresis_tau >= 0:
            raise ValueError("hysteresis_tau must be >= 0")
        object.__setattr__(self, "stiffness", k)
        object.__setattr__(self, "max_displacement", dmax)


@dataclass(frozen=True, slots=True)
class HallSample:
    t: float
    taxel: int
    b: np.ndarray  # mT


@dataclass(frozen=True, slots=True)
class FtSample:
    t: float
    f: np.ndarray  # N, force on the fingertip expressed in the fingertip frame


def dome_displacement(dome: DomeModel, applied_force, state=None, dt: float = 0.0):
    """Advance one dome by ``dt`` under a constant ``applied_force``.

    Returns ``(displacement, new_state)``; the state is the displacement
    itself. Without hysteresis the steady-state value is returned directly.
    With ``hysteresis_tau > 0`` the displacement relaxes toward steady state
    with an explicit first-order step ``d += (dt / tau) * (d_ss - d)``.
    """
    f = np.asarray(applied_force, dtype=float)
    d_ss = np.clip(f / dome.stiffness, -dome.max_displacement, dome.max_displacement)
    tau = dome.hysteresis_tau
    if tau == 0.0:
        return d_ss, d_ss
    if not dt > 0:
        raise ValueError("dt must be positive when hysteresis is enabled")
    d = np.zeros(3) if state is None else np.asarray(state, dtype=float)
    alpha = min(dt / tau, 1.0)
    d = d + alpha * (d_ss - d)
    return d, d


def dipole_field(magnet_pos, moment, query) -> np.ndarray:
    """Point-dipole flux density [mT] at ``query`` (shape (3,) or (n, 3))."""
    r = np.asarray(query, dtype=float) - np.asarray(magnet_pos, dtype=float)
    m = np.asarray(moment, dtype=float)
    dist = np.linalg.norm(r, axis=-1, keepdims=True)
    if np.any(dist <= 1e-6):
        raise DipoleSingularityError("query point coincides with the dipole position")
    r_hat = r / dist
    m_dot_r = np.sum(r_hat * m, axis=-1, keepdims=True)
    b = MU0_OVER_4PI * (3.0 * m_dot_r * r_hat - m) / dist**3
    return b * TESLA_TO_MT


def magnet_positions(geometry: FingertipGeometry, displacements) -> np.ndarray:
    return geometry.magnet_rest_positions + np.asarray(displacements, dtype=float).reshape(-1, 3)


def hall_fields(geometry: FingertipGeometry, magnet: MagnetModel, displacements) -> np.ndarray:
    """Noise-free field [mT] at every Hall sensor, summed over all magnets. Shape (n, 3)."""
    disp = np.asarray(displacements, dtype=float).reshape(-1, 3)
    pos = magnet_positions(geometry, disp)
    halls = geometry.hall_positions
    total = np.zeros_like(halls)
    for j in range(geometry.n_taxels):
        total += dipole_field(pos[j], magnet.moment(disp[j]), halls)
    return total


def apply_readout(b_true, rig, rng: np.random.Generator | None) -> np.ndarray:
    """Offset, Gaussian noise, LSB quantization and full-scale clipping."""
    b = np.asarray(b_true, dtype=float) + rig.hall_offset
    if rig.hall_noise_sigma > 0:
        b = b + rng.normal(0.0, rig.hall_noise_sigma, size=b.shape)
    if rig.hall_lsb > 0:
        b = np.round(b / rig.hall_lsb) * rig.hall_lsb
    return np.clip(b, -rig.hall_full_scale, rig.hall_full_scale)


def hall_reading(rig, taxel: int, true_force, state=None, dt: float = 0.0,
                 rng: np.random.Generator | None = None, t: float = 0.0):
    """Simulate one Hall readout of ``taxel``.

    ``true_force`` is either the force on ``taxel`` alone (shape (3,), every
    other dome unloaded) or per-taxel forces of shape (n, 3). ``state`` holds
    the (n, 3) dome displacements carried between calls for hysteresis.
    Returns ``(HallSample, new_state)``.
    """
    geo = rig.fingertip
    taxel = geo.check_taxel(taxel)
    n = geo.n_taxels
    forces = np.asarray(true_force, dtype=float)
    if forces.shape == (3,):
        full = np.zeros((n, 3))
        full[taxel] = forces
        forces = full
    if forces.shape != (n, 3):
        raise ValueError(f"true_force must have shape (3,) or ({n}, 3)")
    prev = np.zeros((n, 3)) if state is None else np.asarray(state, dtype=float)
    new_state = np.empty((n, 3))
    for i in range(n):
        new_state[i], _ = dome_displacement(rig.dome, forces[i], prev[i], dt)
    b = hall_fields(geo, rig.magnet, new_state)[taxel]
    return HallSample(t, taxel, apply_readout(b, rig, rng)), new_state


def ft_reading(true_force, sigma: float, rng: np.random.Generator | None = None, t: float = 0.0) -> FtSample:
    f = np.asarray(true_force, dtype=float)
    if sigma > 0:
        f = f + rng.normal(0.0, sigma, size=3)
    return FtSample(t, f)
