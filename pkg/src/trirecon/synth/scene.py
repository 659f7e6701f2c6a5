"""Scene layout: non-overlapping floor placements of generated objects."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geom import RigidScaleTransform, Shape, shape_bounds
from ..metrics.boxes import OrientedBox
from ..seeding import derive_rng
from .generators import CATEGORIES, gen_shape

# rough world footprint targets per category (longest-axis size, meters)
_WORLD_SIZE = {
    "chair": (0.8, 1.1),
    "sofa": (1.6, 2.2),
    "table": (1.2, 1.8),
    "cabinet": (1.0, 2.0),
    "bed": (1.9, 2.2),
    "shelf": (1.2, 2.0),
}

MAX_REJECTIONS = 10_000


@dataclass(frozen=True)
class ObjectInstance:
    shape: Shape  # canonical space, AABB in [-0.5, 0.5]^3
    pose: RigidScaleTransform  # canonical -> world (yaw + uniform scale + shift)
    category: str

    def world_box(self) -> OrientedBox:
        lo, hi = shape_bounds(self.shape)
        center_c = (lo + hi) / 2
        size_c = hi - lo
        yaw = float(np.arctan2(self.pose.rotation[1, 0], self.pose.rotation[0, 0]))
        return OrientedBox(self.pose.apply(center_c), self.pose.scale * size_c, yaw)

    def world_shape(self) -> Shape:
        return self.shape.transformed(self.pose)


@dataclass(frozen=True)
class SceneSpec:
    instances: tuple
    floor_extent: float  # scene occupies [-e/2, e/2]^2 on the floor
    seed: int


def _aabb_of_box(box: OrientedBox):
    c = box.corners()
    return c.min(axis=0), c.max(axis=0)


def _aabbs_overlap(a, b, margin=0.0):
    (alo, ahi), (blo, bhi) = a, b
    return bool(np.all(ahi + margin > blo) and np.all(bhi + margin > alo))


def place_scene(n_objects: int, seed: int, floor_extent: float = 6.0, categories=CATEGORIES) -> SceneSpec:
    """Rejection-sample non-overlapping floor placements; deterministic per seed."""
    if n_objects < 1:
        raise ValueError("n_objects must be >= 1")
    rng = derive_rng(seed, "place_scene")
    instances = []
    aabbs = []
    rejections = 0
    for i in range(n_objects):
        while True:
            # redraw everything per attempt so an oversized draw cannot wedge
            category = categories[int(rng.integers(len(categories)))]
            shape = gen_shape(category, int(rng.integers(2**31)))
            lo, hi = shape_bounds(shape)
            size_lo, size_hi = _WORLD_SIZE[category]
            scale = float(rng.uniform(size_lo, size_hi))  # longest canonical axis is 1
            yaw = float(rng.uniform(-np.pi, np.pi))
            limit = max(floor_extent / 2 - 0.6 * scale, 0.2)
            x, y = rng.uniform(-limit, limit, 2)
            # rest the object on the floor plane z=0
            z = -scale * lo[2]
            pose = RigidScaleTransform.from_yaw(yaw, (x, y, z), scale)
            inst = ObjectInstance(shape, pose, category)
            aabb = _aabb_of_box(inst.world_box())
            if not any(_aabbs_overlap(aabb, other, margin=0.05) for other in aabbs):
                instances.append(inst)
                aabbs.append(aabb)
                break
            rejections += 1
            if rejections > MAX_REJECTIONS:
                raise RuntimeError(f"scene placement failed after {MAX_REJECTIONS} rejections")
    return SceneSpec(tuple(instances), floor_extent, seed)
