"""Procedural furniture-like shape generators, one recipe per category.

Shapes are built in a canonical z-up frame from boxes/cylinders/ellipsoids and
then rescaled so the bounding box is centered at the origin with the longest
axis spanning exactly [-0.5, 0.5]. Deterministic per (category, seed).
"""

from __future__ import annotations

import numpy as np

from ..geom import BOX, CYLINDER, ELLIPSOID, Primitive, RigidScaleTransform, Shape
from ..seeding import derive_rng

CATEGORIES = ("chair", "sofa", "table", "cabinet", "bed", "shelf")


def _prim(kind, params, pos=(0, 0, 0), yaw=0.0):
    return Primitive(kind, params, RigidScaleTransform.from_yaw(yaw, pos))


def _legs(rng, x, y, z0, z1, radius):
    """Four legs at (+-x, +-y); cylinders or square boxes, one style per shape."""
    round_legs = rng.random() < 0.6
    half = (z1 - z0) / 2
    zc = (z0 + z1) / 2
    out = []
    for sx in (-1, 1):
        for sy in (-1, 1):
            if round_legs:
                out.append(_prim(CYLINDER, (radius, half), (sx * x, sy * y, zc)))
            else:
                out.append(_prim(BOX, (radius, radius, half), (sx * x, sy * y, zc)))
    return out


def _gen_table(rng):
    w = rng.uniform(0.9, 1.8)
    d = rng.uniform(0.6, 1.1)
    h = rng.uniform(0.65, 0.8)
    top_t = rng.uniform(0.03, 0.07)
    leg_r = rng.uniform(0.025, 0.06)
    inset = leg_r + rng.uniform(0.02, 0.08)
    prims = [_prim(BOX, (w / 2, d / 2, top_t / 2), (0, 0, h - top_t / 2))]
    prims += _legs(rng, w / 2 - inset, d / 2 - inset, 0.0, h - top_t, leg_r)
    return prims


def _gen_chair(rng):
    w = rng.uniform(0.4, 0.55)
    d = rng.uniform(0.4, 0.52)
    seat_h = rng.uniform(0.4, 0.5)
    seat_t = rng.uniform(0.04, 0.08)
    back_h = rng.uniform(0.35, 0.55)
    back_t = rng.uniform(0.03, 0.06)
    leg_r = rng.uniform(0.02, 0.04)
    prims = [_prim(BOX, (w / 2, d / 2, seat_t / 2), (0, 0, seat_h - seat_t / 2))]
    prims.append(_prim(BOX, (w / 2, back_t / 2, back_h / 2), (0, -d / 2 + back_t / 2, seat_h + back_h / 2)))
    prims += _legs(rng, w / 2 - leg_r * 1.5, d / 2 - leg_r * 1.5, 0.0, seat_h - seat_t, leg_r)
    return prims


def _gen_sofa(rng):
    w = rng.uniform(1.4, 2.2)
    d = rng.uniform(0.8, 1.0)
    base_h = rng.uniform(0.35, 0.45)
    back_h = rng.uniform(0.3, 0.45)
    back_t = rng.uniform(0.15, 0.22)
    arm_w = rng.uniform(0.12, 0.2)
    arm_h = rng.uniform(0.15, 0.3)
    prims = [_prim(BOX, (w / 2, d / 2, base_h / 2), (0, 0, base_h / 2))]
    prims.append(_prim(BOX, (w / 2, back_t / 2, back_h / 2), (0, -d / 2 + back_t / 2, base_h + back_h / 2)))
    for sx in (-1, 1):
        prims.append(
            _prim(BOX, (arm_w / 2, d / 2, arm_h / 2), (sx * (w / 2 - arm_w / 2), 0, base_h + arm_h / 2))
        )
    if rng.random() < 0.5:  # seat cushions as soft ellipsoids
        n_cush = int(rng.integers(2, 4))
        cw = (w - 2 * arm_w) / n_cush
        for i in range(n_cush):
            cx = -w / 2 + arm_w + cw * (i + 0.5)
            prims.append(
                _prim(ELLIPSOID, (cw * 0.45, d * 0.4, 0.07), (cx, 0.02, base_h + 0.03))
            )
    return prims


def _gen_cabinet(rng):
    w = rng.uniform(0.6, 1.4)
    d = rng.uniform(0.35, 0.6)
    h = rng.uniform(0.9, 1.9)
    prims = [_prim(BOX, (w / 2, d / 2, h / 2), (0, 0, h / 2))]
    if rng.random() < 0.5:  # plinth base
        ph = rng.uniform(0.04, 0.1)
        prims.append(_prim(BOX, (w / 2 * 0.9, d / 2 * 0.9, ph / 2), (0, 0, -ph / 2 + 0.001)))
    if rng.random() < 0.5:  # protruding top board
        tt = rng.uniform(0.02, 0.05)
        prims.append(_prim(BOX, (w / 2 + 0.02, d / 2 + 0.02, tt / 2), (0, 0, h + tt / 2)))
    return prims


def _gen_bed(rng):
    w = rng.uniform(1.0, 1.9)
    d = rng.uniform(1.9, 2.2)
    base_h = rng.uniform(0.25, 0.4)
    mat_h = rng.uniform(0.15, 0.25)
    head_h = rng.uniform(0.3, 0.7)
    head_t = rng.uniform(0.04, 0.1)
    prims = [
        _prim(BOX, (w / 2, d / 2, base_h / 2), (0, 0, base_h / 2)),
        _prim(BOX, (w / 2 * 0.97, d / 2 * 0.97, mat_h / 2), (0, 0, base_h + mat_h / 2)),
        _prim(BOX, (w / 2, head_t / 2, head_h / 2), (0, -d / 2 + head_t / 2, base_h + head_h / 2)),
    ]
    if rng.random() < 0.4:  # pillow
        prims.append(
            _prim(ELLIPSOID, (w * 0.22, 0.18, 0.06), (0, -d / 2 + 0.3, base_h + mat_h + 0.03))
        )
    return prims


def _gen_shelf(rng):
    w = rng.uniform(0.6, 1.2)
    d = rng.uniform(0.25, 0.45)
    h = rng.uniform(1.0, 2.0)
    side_t = rng.uniform(0.02, 0.04)
    n_boards = int(rng.integers(3, 6))
    board_t = rng.uniform(0.02, 0.04)
    prims = []
    for sx in (-1, 1):
        prims.append(_prim(BOX, (side_t / 2, d / 2, h / 2), (sx * (w / 2 - side_t / 2), 0, h / 2)))
    for i in range(n_boards):
        z = (i / (n_boards - 1)) * (h - board_t) + board_t / 2
        prims.append(_prim(BOX, (w / 2 - side_t, d / 2, board_t / 2), (0, 0, z)))
    if rng.random() < 0.5:  # back panel
        prims.append(_prim(BOX, (w / 2, side_t / 2, h / 2), (0, -d / 2 + side_t / 2, h / 2)))
    return prims


_GENERATORS = {
    "table": _gen_table,
    "chair": _gen_chair,
    "sofa": _gen_sofa,
    "cabinet": _gen_cabinet,
    "bed": _gen_bed,
    "shelf": _gen_shelf,
}


def _canonicalize(prims) -> Shape:
    """Recenter and rescale so the AABB is origin-centered with max extent 1."""
    shape = Shape(tuple(prims))
    from ..geom.shapes import shape_bounds

    lo, hi = shape_bounds(shape)
    center = (lo + hi) / 2
    s = 1.0 / float((hi - lo).max())
    norm = RigidScaleTransform(np.eye(3), -s * center, s)
    return shape.transformed(norm)


def gen_shape(category: str, seed: int) -> Shape:
    """Deterministic category-plausible shape, canonicalized to [-0.5, 0.5]^3."""
    if category not in _GENERATORS:
        raise ValueError(f"unknown category {category!r}; valid: {CATEGORIES}")
    rng = derive_rng(seed, "gen_shape", category)
    return _canonicalize(_GENERATORS[category](rng))
