"""SE(3) rigid motions and small rotation utilities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

Array = NDArray[np.float64]

ORTHONORMALITY_TOL = 1e-9


def _as_f64(x) -> Array:
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64))


@dataclass(frozen=True, slots=True)
class RigidTransform:
    """Proper rigid motion p -> R p + t, with R orthonormal and det(R) = +1."""

    rotation: Array
    translation: Array

    def __post_init__(self):
        rot = _as_f64(self.rotation)
        trans = _as_f64(self.translation).reshape(3)
        if rot.shape != (3, 3):
            raise ValueError("rotation must be a 3x3 matrix")
        err = float(np.abs(rot.T @ rot - np.eye(3)).max())
        if not err < ORTHONORMALITY_TOL:
            raise ValueError(f"rotation not orthonormal, |R'R - I|_inf = {err:.3e}")
        if np.linalg.det(rot) <= 0.0:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix) -> "RigidTransform":
        """Build from a 3x4 or 4x4 homogeneous matrix."""
        m = _as_f64(matrix)
        if m.shape not in ((3, 4), (4, 4)):
            raise ValueError("expected a 3x4 or 4x4 matrix")
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> Array:
        """4x4 homogeneous form."""
        out = np.eye(4)
        out[:3, :3] = self.rotation
        out[:3, 3] = self.translation
        return out

    def flat_3x4(self) -> Array:
        """Row-major 12-vector of the top 3x4 block, the serialization order."""
        return self.as_matrix()[:3, :].reshape(-1)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self @ other)(p) = self(other(p))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        rot_inv = self.rotation.T
        return RigidTransform(rot_inv, -rot_inv @ self.translation)

    def apply(self, points) -> Array:
        """Map an (N, 3) array (or a single 3-vector) through the motion."""
        pts = _as_f64(points)
        single = pts.ndim == 1
        out = pts.reshape(-1, 3) @ self.rotation.T + self.translation
        return out[0] if single else out

    def apply_to_normals(self, normals) -> Array:
        """Rotate direction vectors, ignoring translation."""
        n = _as_f64(normals)
        single = n.ndim == 1
        out = n.reshape(-1, 3) @ self.rotation.T
        return out[0] if single else out


def rotation_angle(rotation) -> float:
    """Angle of a rotation matrix in [0, pi], from the trace, clamped."""
    rot = _as_f64(rotation)
    c = (np.trace(rot) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def rotation_from_quaternion(q) -> Array:
    """Rotation matrix from a (w, x, y, z) quaternion, normalized internally."""
    q = _as_f64(q).reshape(4)
    q = q / np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotation_about_axis(axis, angle: float) -> Array:
    """Rodrigues rotation about a (not necessarily unit) axis."""
    a = _as_f64(axis).reshape(3)
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return np.eye(3)
    a = a / norm
    k = skew(a)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def skew(v) -> Array:
    x, y, z = _as_f64(v).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_exp(w) -> Array:
    """Exponential map from an so(3) vector to a rotation matrix."""
    w = _as_f64(w).reshape(3)
    theta = float(np.linalg.norm(w))
    if theta < 1e-12:
        return np.eye(3) + skew(w)
    return rotation_about_axis(w / theta, theta)


def random_rotation(rng: np.random.Generator) -> Array:
    """Uniform random rotation via a normalized Gaussian quaternion."""
    q = rng.normal(size=4)
    return rotation_from_quaternion(q)


def random_rigid_transform(
    rng: np.random.Generator,
    max_translation: float = 1.0,
    max_angle: float = np.pi,
) -> RigidTransform:
    """Random rigid motion, rotation angle bounded by max_angle."""
    axis = rng.normal(size=3)
    angle = rng.uniform(0.0, max_angle)
    rot = rotation_about_axis(axis, angle)
    t = rng.uniform(-max_translation, max_translation, size=3)
    return RigidTransform(rot, t)
