"""Scene-level occupancy labels (surface-shell voxels) and scan voxelization.

Labels follow the sampled-surface recipe: every instance surface is densely
sampled (spacing at most half the voxel size), each sample marks its containing
voxel, samples outside the grid are dropped. The result is a shell, not a
solid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geom import sample_surface


@dataclass(frozen=True)
class GridSpec:
    origin: np.ndarray  # (3,) world position of voxel (0,0,0) corner
    voxel_size: float
    dims: tuple  # (nx, ny, nz)

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(3))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        if any(d <= 0 for d in self.dims):
            raise ValueError("dims must be positive")

    def voxel_indices(self, points: np.ndarray):
        """floor((p - origin)/voxel) per axis; also returns an in-bounds mask."""
        rel = (np.asarray(points, dtype=np.float64) - self.origin) / self.voxel_size
        idx = np.floor(rel).astype(np.int64)
        ok = np.all((idx >= 0) & (idx < np.array(self.dims)), axis=-1)
        return idx, ok

    def voxel_centers(self) -> np.ndarray:
        nx, ny, nz = self.dims
        ax = [self.origin[i] + (np.arange(self.dims[i]) + 0.5) * self.voxel_size for i in range(3)]
        g = np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1)
        return g.reshape(-1, 3)


@dataclass
class SceneOccupancyGrid:
    spec: GridSpec
    occupied: np.ndarray  # (nx, ny, nz) bool

    def count(self) -> int:
        return int(self.occupied.sum())


def paper_scale_grid(origin=(0.0, 0.0, 0.0)) -> GridSpec:
    """The reference full-scale layout: 384x384x96 voxels at 4 cm."""
    return GridSpec(np.asarray(origin), 0.04, (384, 384, 96))


def gen_occupancy_labels(scene, spec: GridSpec, spacing: float | None = None) -> SceneOccupancyGrid:
    """Mark voxels containing surface samples of every placed instance.

    `scene` is any object with an `instances` sequence of placed shapes
    (see synth.scene.SceneSpec)."""
    if spacing is None:
        spacing = spec.voxel_size / 2.0
    if spacing > spec.voxel_size / 2.0 + 1e-12:
        raise ValueError("sampling spacing must be <= voxel_size/2")
    occ = np.zeros(spec.dims, dtype=bool)
    for inst in scene.instances:
        # canonical-space spacing chosen so world spacing equals `spacing`
        pts, _ = sample_surface(inst.shape, spacing / inst.pose.scale)
        world = inst.pose.apply(pts)
        idx, ok = spec.voxel_indices(world)
        idx = idx[ok]
        if len(idx):
            occ[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    return SceneOccupancyGrid(spec, occ)


def voxelize_scan(points: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Per-voxel (count, mean offset xyz) features over the label grid frame.

    Returns (4, nx, ny, nz) float32; offsets are relative to voxel centers in
    units of the voxel size, zero for empty voxels.
    """
    nx, ny, nz = spec.dims
    feats = np.zeros((4, nx, ny, nz), dtype=np.float32)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        return feats
    idx, ok = spec.voxel_indices(points)
    idx = idx[ok]
    pts = points[ok]
    if len(idx) == 0:
        return feats
    flat = np.ravel_multi_index((idx[:, 0], idx[:, 1], idx[:, 2]), spec.dims)
    count = np.bincount(flat, minlength=nx * ny * nz).astype(np.float64)
    centers = spec.origin + (idx + 0.5) * spec.voxel_size
    off = (pts - centers) / spec.voxel_size
    sums = np.zeros((nx * ny * nz, 3))
    for a in range(3):
        sums[:, a] = np.bincount(flat, weights=off[:, a], minlength=nx * ny * nz)
    nonzero = count > 0
    mean_off = np.zeros_like(sums)
    mean_off[nonzero] = sums[nonzero] / count[nonzero, None]
    feats[0] = count.reshape(spec.dims)
    feats[1:] = np.moveaxis(mean_off.reshape(nx, ny, nz, 3), -1, 0)
    return feats


# ---------------------------------------------------------------------------
# file format: text header + bit-packed payload

_MAGIC = "OCCGRID 1"


def save_occupancy(path, grid: SceneOccupancyGrid):
    spec = grid.spec
    header = "\n".join(
        [
            _MAGIC,
            "origin " + " ".join(repr(float(v)) for v in spec.origin),
            f"voxel_size {spec.voxel_size!r}",
            "dims " + " ".join(str(d) for d in spec.dims),
            f"occupied_count {grid.count()}",
            "end_header",
        ]
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii") + b"\n")
        f.write(np.packbits(grid.occupied.reshape(-1)).tobytes())


def load_occupancy(path) -> SceneOccupancyGrid:
    with open(path, "rb") as f:
        if f.readline().strip().decode() != _MAGIC:
            raise ValueError("not an occupancy grid file")
        fields = {}
        while True:
            line = f.readline().strip().decode()
            if line == "end_header":
                break
            key, _, rest = line.partition(" ")
            fields[key] = rest
        dims = tuple(int(v) for v in fields["dims"].split())
        n = int(np.prod(dims))
        bits = np.unpackbits(np.frombuffer(f.read(), dtype=np.uint8), count=n)
    spec = GridSpec(
        np.array([float(v) for v in fields["origin"].split()]),
        float(fields["voxel_size"]),
        dims,
    )
    grid = SceneOccupancyGrid(spec, bits.astype(bool).reshape(dims))
    if grid.count() != int(fields["occupied_count"]):
        raise ValueError("occupancy payload does not match header count")
    return grid
