"""Rigid transforms and the fingertip geometric model.

Frames used throughout the package:

* base: the robot base frame; the probe tip and its direction live here.
* flange: the robot tool flange; this is what the rig moves.
* fingertip: origin at the PCB centre, +z normal to the PCB pointing out of
  the sensing face, +x along the taxel-grid rows. The fingertip is rigidly
  attached to the flange through ``FingertipGeometry.mount``.

Faces of the fingertip body used for probe localization are the +z face
("front", the sensing face), the +y face ("side") and the +x face ("top").
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

FACES = ("front", "side", "top")
FACE_AXIS = {"top": 0, "side": 1, "front": 2}


def as_vec3(v, name: str = "vector") -> np.ndarray:
    """Return ``v`` as a finite float64 array of shape (3,)."""
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (3,):
        raise ValueError(f"{name} must have 3 components, got shape {np.shape(v)}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite, got {a.tolist()}")
    return a


def _quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def _quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _matrix_to_quat(m: np.ndarray) -> np.ndarray:
    # Shepperd's method, branch on the largest diagonal term for stability.
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = 2.0 * np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    q = np.asarray(q)
    return q / np.linalg.norm(q)


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform stored as a unit quaternion (w, x, y, z) and a translation [m].

    ``Pose`` maps points from its child frame into its parent frame:
    ``p_parent = R @ p_child + t``. The quaternion is renormalized on
    construction so long composition chains do not drift off the unit sphere.
    """

    quat: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.quat, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n < 1e-12:
            raise ValueError("quaternion must be finite and non-zero")
        q = q / n
        # canonical sign: first non-zero component positive
        nz = np.flatnonzero(q)
        if q[nz[0]] < 0:
            q = -q
        object.__setattr__(self, "quat", q)
        object.__setattr__(self, "translation", as_vec3(self.translation, "translation"))

    @classmethod
    def _trusted(cls, quat: np.ndarray, translation: np.ndarray) -> Pose:
        # internal fast path: caller guarantees a unit, canonical quaternion and finite (3,) translation
        p = object.__new__(cls)
        object.__setattr__(p, "quat", quat)
        object.__setattr__(p, "translation", translation)
        return p

    @classmethod
    def identity(cls) -> Pose:
        return cls()

    @classmethod
    def from_translation(cls, t) -> Pose:
        return cls(translation=t)

    @classmethod
    def from_matrix(cls, rotation, translation=(0.0, 0.0, 0.0)) -> Pose:
        r = np.asarray(rotation, dtype=float)
        if r.shape != (3, 3):
            raise ValueError("rotation matrix must be 3x3")
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-9) or np.linalg.det(r) < 0:
            raise ValueError("rotation matrix must be orthonormal with det +1")
        return cls(_matrix_to_quat(r), translation)

    @classmethod
    def from_axis_angle(cls, axis, angle: float, translation=(0.0, 0.0, 0.0)) -> Pose:
        axis = as_vec3(axis, "axis")
        axis = axis / np.linalg.norm(axis)
        half = 0.5 * angle
        return cls(np.concatenate([[np.cos(half)], np.sin(half) * axis]), translation)

    @cached_property
    def rotation(self) -> np.ndarray:
        """3x3 rotation matrix."""
        return _quat_to_matrix(self.quat)

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 representation."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def __matmul__(self, other: Pose) -> Pose:
        return compose(self, other)

    def __repr__(self) -> str:
        q = ", ".join(f"{v:.6g}" for v in self.quat)
        t = ", ".join(f"{v:.6g}" for v in self.translation)
        return f"Pose(quat=[{q}], translation=[{t}])"

    def isclose(self, other: Pose, atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, atol=atol)
            and np.allclose(self.translation, other.translation, atol=atol)
        )

    def format(self) -> str:
        """Compact text form used in procedure log lines."""
        t = ",".join(f"{v:.6f}" for v in self.translation)
        q = ",".join(f"{v:.6f}" for v in self.quat)
        return f"[{t}|{q}]"


def compose(a: Pose, b: Pose) -> Pose:
    """Return the pose that applies ``b`` first, then ``a``."""
    q = _quat_mul(a.quat, b.quat)
    t = a.rotation @ b.translation + a.translation
    return Pose(q, t)


def invert(p: Pose) -> Pose:
    q = p.quat * np.array([1.0, -1.0, -1.0, -1.0])
    r_t = p.rotation.T
    return Pose(q, -(r_t @ p.translation))


def transform_point(p: Pose, v) -> np.ndarray:
    """Map a point (or an (n, 3) array of points) from child to parent frame."""
    v = np.asarray(v, dtype=float)
    return v @ p.rotation.T + p.translation


def rotate_vector(p: Pose, v) -> np.ndarray:
    """Rotate a direction (no translation)."""
    return np.asarray(v, dtype=float) @ p.rotation.T


def interpolate(a: Pose, b: Pose, fraction: float) -> Pose:
    """Linear translation and spherical rotation interpolation between two poses."""
    if fraction <= 0.0:
        return a
    if fraction >= 1.0:
        return b
    qa, qb = a.quat, b.quat
    d = float(np.dot(qa, qb))
    if d < 0:
        qb, d = -qb, -d
    if d > 0.9995:
        q = qa + fraction * (qb - qa)
    else:
        theta = np.arccos(d)
        q = (np.sin((1 - fraction) * theta) * qa + np.sin(fraction * theta) * qb) / np.sin(theta)
    t = a.translation + fraction * (b.translation - a.translation)
    return Pose(q, t)


def facing_rotation(direction) -> np.ndarray:
    """Rotation whose +z axis is anti-parallel to ``direction``.

    Used to orient the fingertip so its sensing face looks at a probe that
    points along ``direction``. The x axis is the projection of base +x (base
    +y when that is degenerate), so the result is deterministic.
    """
    d = as_vec3(direction, "direction")
    norm = np.linalg.norm(d)
    if norm < 1e-12:
        raise ValueError("direction must be non-zero")
    z = -d / norm
    ref = np.array([1.0, 0.0, 0.0])
    if abs(z @ ref) > 0.9:
        ref = np.array([0.0, 1.0, 0.0])
    x = ref - (ref @ z) * z
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


@dataclass(frozen=True, eq=False)
class FingertipGeometry:
    """Rigid geometry of the fingertip, all positions in the fingertip frame [m].

    ``taxel_positions`` are the dome apexes; ``hall_positions`` lie on the PCB
    (z = 0); magnets rest ``magnet_rest_height`` above their Hall sensor.
    ``outer_dimensions`` are the half-extents (x, y, z) of the body box, so
    the top, side and front faces sit at x, y and z = +outer_dimensions.
    """

    taxel_positions: np.ndarray
    hall_positions: np.ndarray
    magnet_rest_height: float
    outer_dimensions: np.ndarray
    grid_rows: int = 2
    grid_cols: int = 2
    capture_radius: float = 1e-3
    mount: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        taxels = np.asarray(self.taxel_positions, dtype=float).reshape(-1, 3)
        halls = np.asarray(self.hall_positions, dtype=float).reshape(-1, 3)
        n = self.grid_rows * self.grid_cols
        if taxels.shape[0] != n or halls.shape[0] != n:
            raise ValueError(f"expected {n} taxels for a {self.grid_rows}x{self.grid_cols} grid")
        if self.magnet_rest_height <= 0:
            raise ValueError("magnet_rest_height must be positive (magnet above its Hall sensor)")
        dims = as_vec3(self.outer_dimensions, "outer_dimensions")
        if np.any(dims <= 0):
            raise ValueError("outer_dimensions must be positive")
        if np.any(taxels[:, 2] <= dims[2]):
            raise ValueError("dome apexes must protrude beyond the front face")
        if np.any(np.abs(taxels[:, :2]) + self.capture_radius > dims[:2]):
            raise ValueError("domes must lie inside the front face outline")
        object.__setattr__(self, "taxel_positions", taxels)
        object.__setattr__(self, "hall_positions", halls)
        object.__setattr__(self, "outer_dimensions", dims)

    @classmethod
    def from_grid(
        cls,
        rows: int = 2,
        cols: int = 2,
        pitch: float = 4.7e-3,
        magnet_rest_height: float = 3.5e-3,
        dome_height: float = 5.0e-3,
        outer_dimensions=(8e-3, 7e-3, 4e-3),
        capture_radius: float = 1e-3,
        mount: Pose | None = None,
    ) -> FingertipGeometry:
        """Regular grid centred on the PCB; taxel id = row * cols + col."""
        if rows < 1 or cols < 1:
            raise ValueError("grid must have at least one row and one column")
        ids = np.arange(rows * cols)
        r, c = np.divmod(ids, cols)
        x = (c - (cols - 1) / 2.0) * pitch
        y = (r - (rows - 1) / 2.0) * pitch
        halls = np.column_stack([x, y, np.zeros_like(x)])
        taxels = halls + np.array([0.0, 0.0, dome_height])
        return cls(
            taxel_positions=taxels,
            hall_positions=halls,
            magnet_rest_height=magnet_rest_height,
            outer_dimensions=outer_dimensions,
            grid_rows=rows,
            grid_cols=cols,
            capture_radius=capture_radius,
            mount=mount if mount is not None else Pose.identity(),
        )

    @property
    def n_taxels(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def magnet_rest_positions(self) -> np.ndarray:
        return self.hall_positions + np.array([0.0, 0.0, self.magnet_rest_height])

    def check_taxel(self, taxel: int) -> int:
        if not (0 <= int(taxel) < self.n_taxels):
            raise IndexError(f"taxel {taxel} out of range 0..{self.n_taxels - 1}")
        return int(taxel)

    def face_normal(self, face: str) -> np.ndarray:
        n = np.zeros(3)
        n[FACE_AXIS[face]] = 1.0
        return n

    def face_offset(self, face: str) -> float:
        return float(self.outer_dimensions[FACE_AXIS[face]])

    def touch_point(self, face: str) -> np.ndarray:
        """Aim point on ``face`` for a localization touch.

        Side and top faces are aimed at their centre. The front face carries
        the domes, so the aim point is the candidate with the largest
        clearance to every dome (the face centre for a 2x2 grid).
        """
        axis = FACE_AXIS[face]
        if face != "front":
            p = np.zeros(3)
            p[axis] = self.outer_dimensions[axis]
            return p
        hx, hy, hz = self.outer_dimensions
        best, best_clear = None, -np.inf
        for fx in (0.0, 0.5, -0.5):
            for fy in (0.0, 0.5, -0.5):
                cand = np.array([fx * hx, fy * hy, hz])
                clear = np.min(np.hypot(*(self.taxel_positions[:, :2] - cand[:2]).T))
                if clear > best_clear + 1e-12:
                    best, best_clear = cand, clear
        return best
