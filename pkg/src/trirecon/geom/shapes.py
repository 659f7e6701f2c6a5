"""Analytic CSG-union shapes: exact occupancy, surface sampling, ray casting.

Primitives (box, cylinder, ellipsoid) live in their own local frame and carry a
RigidScaleTransform into shape space. A Shape is a flat union of primitives.
Everything here is the oracle the learned modules are tested against, so the
point-membership and intersection tests are exact up to floating point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .transforms import RigidScaleTransform, yaw_matrix

BOX = "box"
CYLINDER = "cylinder"
ELLIPSOID = "ellipsoid"

_PARAM_COUNT = {BOX: 3, CYLINDER: 2, ELLIPSOID: 3}


@dataclass(frozen=True)
class Primitive:
    """kind: box(hx,hy,hz) | cylinder(radius,half_height) | ellipsoid(rx,ry,rz).

    Cylinders are axis-aligned with local +z. All parameters are half-extents
    or radii and must be positive.
    """

    kind: str
    params: tuple
    transform: RigidScaleTransform = field(default_factory=RigidScaleTransform.identity)

    def __post_init__(self):
        if self.kind not in _PARAM_COUNT:
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        if len(self.params) != _PARAM_COUNT[self.kind]:
            raise ValueError(f"{self.kind} takes {_PARAM_COUNT[self.kind]} params")
        if any(v <= 0 for v in self.params):
            raise ValueError(f"degenerate {self.kind}: params must be positive, got {self.params}")


@dataclass(frozen=True)
class Shape:
    """Union of transformed primitives."""

    primitives: tuple

    def __post_init__(self):
        prims = tuple(self.primitives)
        if len(prims) < 1:
            raise ValueError("shape needs at least one primitive")
        object.__setattr__(self, "primitives", prims)

    def transformed(self, t: RigidScaleTransform) -> "Shape":
        return Shape(tuple(Primitive(p.kind, p.params, t.compose(p.transform)) for p in self.primitives))

    def to_dict(self) -> dict:
        return {
            "primitives": [
                {"kind": p.kind, "params": list(p.params), "transform": p.transform.to_dict()}
                for p in self.primitives
            ]
        }

    @staticmethod
    def from_dict(d: dict) -> "Shape":
        return Shape(
            tuple(
                Primitive(p["kind"], tuple(p["params"]), RigidScaleTransform.from_dict(p["transform"]))
                for p in d["primitives"]
            )
        )


def _local_inside(prim: Primitive, local: np.ndarray) -> np.ndarray:
    x, y, z = local[..., 0], local[..., 1], local[..., 2]
    if prim.kind == BOX:
        hx, hy, hz = prim.params
        return (np.abs(x) <= hx) & (np.abs(y) <= hy) & (np.abs(z) <= hz)
    if prim.kind == CYLINDER:
        r, hh = prim.params
        return (x * x + y * y <= r * r) & (np.abs(z) <= hh)
    rx, ry, rz = prim.params
    return (x / rx) ** 2 + (y / ry) ** 2 + (z / rz) ** 2 <= 1.0


def occupancy(shape: Shape, points: np.ndarray) -> np.ndarray:
    """Exact point-in-union test. points: (..., 3). Returns boolean array (...)."""
    p = np.asarray(points, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    inside = np.zeros(p.shape[:-1], dtype=bool)
    for prim in shape.primitives:
        local = prim.transform.inverse().apply(p)
        inside |= _local_inside(prim, local)
    return inside[0] if single else inside


def _grid_1d(lo: float, hi: float, spacing: float) -> np.ndarray:
    """Inclusive endpoint grid with step <= spacing."""
    n = max(1, int(np.ceil((hi - lo) / spacing)))
    return np.linspace(lo, hi, n + 1)


def _box_surface(params, spacing):
    hx, hy, hz = params
    pts, nrm = [], []
    for axis, h in ((0, hx), (1, hy), (2, hz)):
        a1, a2 = [i for i in range(3) if i != axis]
        h1 = (hx, hy, hz)[a1]
        h2 = (hx, hy, hz)[a2]
        u, v = np.meshgrid(_grid_1d(-h1, h1, spacing), _grid_1d(-h2, h2, spacing), indexing="ij")
        for sign in (-1.0, 1.0):
            face = np.zeros(u.shape + (3,))
            face[..., axis] = sign * h
            face[..., a1] = u
            face[..., a2] = v
            n = np.zeros(3)
            n[axis] = sign
            pts.append(face.reshape(-1, 3))
            nrm.append(np.broadcast_to(n, pts[-1].shape).copy())
    return np.concatenate(pts), np.concatenate(nrm)


def _cylinder_surface(params, spacing):
    r, hh = params
    pts, nrm = [], []
    # lateral wall
    n_ang = max(3, int(np.ceil(2 * np.pi * r / spacing)))
    ang = np.linspace(0.0, 2 * np.pi, n_ang, endpoint=False)
    zs = _grid_1d(-hh, hh, spacing)
    a, z = np.meshgrid(ang, zs, indexing="ij")
    wall = np.stack([r * np.cos(a), r * np.sin(a), z], axis=-1).reshape(-1, 3)
    wall_n = np.stack([np.cos(a), np.sin(a), np.zeros_like(a)], axis=-1).reshape(-1, 3)
    pts.append(wall)
    nrm.append(wall_n)
    # caps: concentric rings plus center point
    radii = _grid_1d(0.0, r, spacing)
    for sign in (-1.0, 1.0):
        cap_pts = [np.array([[0.0, 0.0, sign * hh]])]
        for rr in radii[1:]:
            m = max(3, int(np.ceil(2 * np.pi * rr / spacing)))
            aa = np.linspace(0.0, 2 * np.pi, m, endpoint=False)
            cap_pts.append(np.stack([rr * np.cos(aa), rr * np.sin(aa), np.full_like(aa, sign * hh)], axis=-1))
        cap = np.concatenate(cap_pts)
        pts.append(cap)
        n = np.zeros_like(cap)
        n[:, 2] = sign
        nrm.append(n)
    return np.concatenate(pts), np.concatenate(nrm)


def _ellipsoid_surface(params, spacing):
    rx, ry, rz = params
    r_max = max(params)
    n_lat = max(2, int(np.ceil(np.pi * r_max / spacing)))
    thetas = np.linspace(0.0, np.pi, n_lat + 1)
    pts = [np.array([[0.0, 0.0, rz]]), np.array([[0.0, 0.0, -rz]])]
    for th in thetas[1:-1]:
        ring_r = np.sin(th) * max(rx, ry)
        m = max(3, int(np.ceil(2 * np.pi * ring_r / spacing)))
        aa = np.linspace(0.0, 2 * np.pi, m, endpoint=False)
        pts.append(
            np.stack(
                [rx * np.sin(th) * np.cos(aa), ry * np.sin(th) * np.sin(aa), np.full_like(aa, rz * np.cos(th))],
                axis=-1,
            )
        )
    p = np.concatenate(pts)
    # outward normal of the implicit surface (x/rx)^2+(y/ry)^2+(z/rz)^2=1
    n = p / np.array([rx * rx, ry * ry, rz * rz])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    return p, n


_SURFACE_FN = {BOX: _box_surface, CYLINDER: _cylinder_surface, ELLIPSOID: _ellipsoid_surface}


def sample_surface(shape: Shape, spacing: float, seed: int = 0, jitter: float = 0.0):
    """Sample points on the union boundary with nearest-neighbor spacing <= `spacing`.

    Each primitive face is covered by a grid (boundary nodes included) at the
    requested spacing; samples buried inside the union (occupied just outside
    along the outward normal) are discarded so the result lies on the true
    boundary. `jitter` (fraction of spacing, < 0.5) stratified-perturbs
    interior grid nodes, deterministic per seed.

    Returns (points (N,3), normals (N,3)) in shape space.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    rng = np.random.default_rng(seed)
    all_pts, all_nrm = [], []
    for prim in shape.primitives:
        local_spacing = spacing / prim.transform.scale
        pts, nrm = _SURFACE_FN[prim.kind](prim.params, local_spacing)
        if jitter > 0.0:
            # tangential jitter keeps points on planar faces but not on curved
            # ones; keep it small and re-rely on the boundary filter below.
            pts = pts + rng.uniform(-jitter, jitter, pts.shape) * local_spacing
        world_pts = prim.transform.apply(pts)
        world_nrm = nrm @ prim.transform.rotation.T
        all_pts.append(world_pts)
        all_nrm.append(world_nrm)
    pts = np.concatenate(all_pts)
    nrm = np.concatenate(all_nrm)
    # drop samples buried inside the union: just-outside probe must be free
    probe = spacing / 10.0
    keep = ~occupancy(shape, pts + probe * nrm)
    return pts[keep], nrm[keep]


def _primitive_bounds(prim: Primitive):
    t = prim.transform
    r = t.rotation
    s = t.scale
    if prim.kind == BOX:
        h = np.asarray(prim.params)
        extent = s * (np.abs(r) @ h)
    elif prim.kind == CYLINDER:
        rad, hh = prim.params
        # support function of a z-capped disc along each world axis
        lateral = rad * np.sqrt(r[:, 0] ** 2 + r[:, 1] ** 2)
        extent = s * (lateral + hh * np.abs(r[:, 2]))
    else:
        radii = np.asarray(prim.params)
        extent = s * np.sqrt((r**2 @ radii**2))
    return t.translation - extent, t.translation + extent


def shape_bounds(shape: Shape):
    """Exact axis-aligned bounds (lo, hi) of the union (analytic, per primitive)."""
    los, his = zip(*(_primitive_bounds(p) for p in shape.primitives))
    return np.min(los, axis=0), np.max(his, axis=0)


def normalize_to_unit(points: np.ndarray):
    """Center the AABB at the origin and scale the longest axis to [-0.5, 0.5].

    Uniform (aspect-preserving) scale. Returns (points', transform) where
    transform maps the input points onto the output.
    """
    p = np.asarray(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] < 2:
        raise ValueError("need at least 2 points")
    lo, hi = p.min(axis=0), p.max(axis=0)
    extent = float((hi - lo).max())
    if extent < 1e-12:
        raise ValueError("degenerate extent")
    center = (lo + hi) / 2.0
    s = 1.0 / extent
    t = RigidScaleTransform(np.eye(3), -s * center, s)
    return t.apply(p), t


def apply_augmentation(points: np.ndarray, rot_deg: float, scale: float, shift) -> np.ndarray:
    """Yaw-rotate, then uniformly scale, then shift. Matches the train-time jitter."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    t = RigidScaleTransform(yaw_matrix(np.deg2rad(rot_deg)), np.asarray(shift, dtype=np.float64), scale)
    return t.apply(points)


def augmentation_transform(rot_deg: float, scale: float, shift) -> RigidScaleTransform:
    if scale <= 0:
        raise ValueError("scale must be positive")
    return RigidScaleTransform(yaw_matrix(np.deg2rad(rot_deg)), np.asarray(shift, dtype=np.float64), scale)


# ---------------------------------------------------------------------------
# analytic ray casting (used by the depth renderer)

_NO_HIT = np.inf


def _ray_box(o, d, params):
    """Slab test. o,d: (N,3) local rays. Returns t of first hit (inf = miss)."""
    h = np.asarray(params)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-h - o) / d
        t2 = (h - o) / d
    # handle rays parallel to a slab: if origin outside that slab, no hit
    parallel = np.abs(d) < 1e-300
    lo = np.where(parallel, -np.inf, np.minimum(t1, t2))
    hi = np.where(parallel, np.inf, np.maximum(t1, t2))
    outside_parallel = parallel & (np.abs(o) > h)
    lo = np.where(outside_parallel, np.inf, lo)
    t_in = lo.max(axis=-1)
    t_out = hi.min(axis=-1)
    t = np.where((t_in <= t_out) & (t_in > 1e-9), t_in, _NO_HIT)
    # origin inside: first boundary going forward
    inside = (t_in <= 1e-9) & (t_out > 1e-9)
    return np.where(inside, t_out, t)


def _ray_cylinder(o, d, params):
    r, hh = params
    ox, oy, oz = o[..., 0], o[..., 1], o[..., 2]
    dx, dy, dz = d[..., 0], d[..., 1], d[..., 2]
    a = dx * dx + dy * dy
    b = 2 * (ox * dx + oy * dy)
    c = ox * ox + oy * oy - r * r
    disc = b * b - 4 * a * c
    t_best = np.full(o.shape[:-1], _NO_HIT)
    ok = (disc >= 0) & (a > 1e-300)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    for sign in (-1.0, 1.0):
        t = np.where(ok, (-b + sign * sq) / (2 * np.where(a > 1e-300, a, 1.0)), _NO_HIT)
        z = oz + t * dz
        valid = ok & (t > 1e-9) & (np.abs(z) <= hh)
        t_best = np.where(valid & (t < t_best), t, t_best)
    # caps
    for zc in (-hh, hh):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (zc - oz) / dz
        x = ox + t * dx
        y = oy + t * dy
        valid = (np.abs(dz) > 1e-300) & (t > 1e-9) & (x * x + y * y <= r * r)
        t_best = np.where(valid & (t < t_best), t, t_best)
    return t_best


def _ray_ellipsoid(o, d, params):
    radii = np.asarray(params)
    os_ = o / radii
    ds = d / radii
    a = (ds * ds).sum(axis=-1)
    b = 2 * (os_ * ds).sum(axis=-1)
    c = (os_ * os_).sum(axis=-1) - 1.0
    disc = b * b - 4 * a * c
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t0 = (-b - sq) / (2 * a)
    t1 = (-b + sq) / (2 * a)
    t = np.where(ok & (t0 > 1e-9), t0, np.where(ok & (t1 > 1e-9), t1, _NO_HIT))
    return t


_RAY_FN = {BOX: _ray_box, CYLINDER: _ray_cylinder, ELLIPSOID: _ray_ellipsoid}


def _local_normal(prim: Primitive, local: np.ndarray) -> np.ndarray:
    x, y, z = local[..., 0], local[..., 1], local[..., 2]
    if prim.kind == BOX:
        h = np.asarray(prim.params)
        rel = np.abs(local) / h
        axis = rel.argmax(axis=-1)
        n = np.zeros_like(local)
        idx = np.arange(local.shape[0])
        n[idx, axis] = np.sign(local[idx, axis])
        return n
    if prim.kind == CYLINDER:
        r, hh = prim.params
        on_cap = np.abs(np.abs(z) - hh) < np.abs(np.sqrt(np.maximum(x * x + y * y, 0.0)) - r)
        n = np.stack([x, y, np.zeros_like(z)], axis=-1)
        norm = np.linalg.norm(n, axis=-1, keepdims=True)
        n = np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)
        cap_n = np.zeros_like(n)
        cap_n[..., 2] = np.sign(z)
        return np.where(on_cap[..., None], cap_n, n)
    radii = np.asarray(prim.params)
    n = local / (radii * radii)
    norm = np.linalg.norm(n, axis=-1, keepdims=True)
    return np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)


def ray_cast(shape: Shape, origins: np.ndarray, dirs: np.ndarray):
    """First-hit ray cast against the union.

    origins, dirs: (N,3) in shape space; dirs need not be unit length (the
    returned t is in units of |dirs|). Returns (t (N,), normals (N,3)); misses
    get t=inf and zero normal. Normals point outward from the hit primitive.
    """
    o = np.asarray(origins, dtype=np.float64)
    d = np.asarray(dirs, dtype=np.float64)
    n_rays = o.shape[0]
    t_best = np.full(n_rays, _NO_HIT)
    normals = np.zeros((n_rays, 3))
    for prim in shape.primitives:
        inv = prim.transform.inverse()
        lo = inv.apply(o)
        ld = inv.apply_direction(d)
        t = _RAY_FN[prim.kind](lo, ld, prim.params)
        better = t < t_best
        if better.any():
            hit_local = lo[better] + t[better, None] * ld[better]
            n_local = _local_normal(prim, hit_local)
            normals[better] = n_local @ prim.transform.rotation.T
            t_best = np.where(better, t, t_best)
    return t_best, normals
