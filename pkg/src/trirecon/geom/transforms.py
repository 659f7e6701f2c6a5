"""Rigid transforms with uniform scale, the common currency of all geometry here."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-9


def yaw_matrix(yaw: float) -> np.ndarray:
    """Rotation about the +z (gravity) axis by `yaw` radians."""
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class RigidScaleTransform:
    """x -> scale * rotation @ x + translation (uniform scale, right-handed rotation)."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))
        object.__setattr__(self, "scale", float(self.scale))
        if self.rotation.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > 1e-6:
            raise ValueError(f"rotation not orthonormal (err={err:.3g})")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @staticmethod
    def identity() -> "RigidScaleTransform":
        return RigidScaleTransform()

    @staticmethod
    def from_yaw(yaw: float, translation=(0.0, 0.0, 0.0), scale: float = 1.0) -> "RigidScaleTransform":
        return RigidScaleTransform(yaw_matrix(yaw), np.asarray(translation, dtype=np.float64), scale)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (..., 3) array of points."""
        p = np.asarray(points, dtype=np.float64)
        return self.scale * (p @ self.rotation.T) + self.translation

    def apply_direction(self, dirs: np.ndarray) -> np.ndarray:
        """Rotate (and scale) direction vectors; no translation."""
        return self.scale * (np.asarray(dirs, dtype=np.float64) @ self.rotation.T)

    def inverse(self) -> "RigidScaleTransform":
        r_inv = self.rotation.T
        s_inv = 1.0 / self.scale
        return RigidScaleTransform(r_inv, -s_inv * (r_inv @ self.translation), s_inv)

    def compose(self, other: "RigidScaleTransform") -> "RigidScaleTransform":
        """self after other: (self ∘ other)(x) = self(other(x))."""
        return RigidScaleTransform(
            self.rotation @ other.rotation,
            self.scale * (self.rotation @ other.translation) + self.translation,
            self.scale * other.scale,
        )

    def to_matrix(self) -> np.ndarray:
        """Homogeneous 4x4 matrix (row-major convention, acts on column vectors)."""
        m = np.eye(4)
        m[:3, :3] = self.scale * self.rotation
        m[:3, 3] = self.translation
        return m

    @staticmethod
    def from_matrix(m: np.ndarray) -> "RigidScaleTransform":
        m = np.asarray(m, dtype=np.float64)
        sr = m[:3, :3]
        scale = float(np.cbrt(np.linalg.det(sr)))
        return RigidScaleTransform(sr / scale, m[:3, 3], scale)

    def is_rigid(self, tol: float = 1e-12) -> bool:
        return abs(self.scale - 1.0) <= tol

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "scale": self.scale,
        }

    @staticmethod
    def from_dict(d: dict) -> "RigidScaleTransform":
        return RigidScaleTransform(np.array(d["rotation"]), np.array(d["translation"]), d["scale"])
