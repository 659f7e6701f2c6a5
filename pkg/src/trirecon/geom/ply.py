"""Binary little-endian PLY point-cloud and mesh I/O."""

from __future__ import annotations

import numpy as np


def save_ply(path, points: np.ndarray, normals: np.ndarray | None = None, faces: np.ndarray | None = None):
    points = np.asarray(points, dtype="<f4")
    if normals is not None:
        normals = np.asarray(normals, dtype="<f4")
        if normals.shape != points.shape:
            raise ValueError("normals must match points")
        norms = np.linalg.norm(normals.astype(np.float64), axis=1)
        if len(norms) and np.abs(norms - 1.0).max() > 1e-5:
            raise ValueError("normals must be unit length")
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {len(points)}"]
    header += [f"property float {c}" for c in "xyz"]
    if normals is not None:
        header += [f"property float n{c}" for c in "xyz"]
    if faces is not None:
        faces = np.asarray(faces, dtype="<i4")
        header += [f"element face {len(faces)}", "property list uchar int vertex_indices"]
    header.append("end_header")
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        vert = points if normals is None else np.hstack([points, normals])
        f.write(vert.astype("<f4").tobytes())
        if faces is not None:
            rec = np.empty(len(faces), dtype=[("n", "u1"), ("idx", "<i4", (3,))])
            rec["n"] = 3
            rec["idx"] = faces
            f.write(rec.tobytes())


def load_ply(path):
    """Returns (points, normals_or_None, faces_or_None). Binary LE files only."""
    with open(path, "rb") as f:
        if f.readline().strip() != b"ply":
            raise ValueError("not a PLY file")
        if b"binary_little_endian" not in f.readline():
            raise ValueError("only binary little-endian PLY supported")
        n_vert = n_face = 0
        props = []
        element = None
        while True:
            line = f.readline().strip()
            if line == b"end_header":
                break
            parts = line.split()
            if parts[0] == b"element":
                element = parts[1]
                if element == b"vertex":
                    n_vert = int(parts[2])
                elif element == b"face":
                    n_face = int(parts[2])
            elif parts[0] == b"property" and element == b"vertex":
                props.append(parts[2].decode())
        has_normals = "nx" in props
        width = len(props)
        vert = np.frombuffer(f.read(4 * width * n_vert), dtype="<f4").reshape(n_vert, width)
        points = vert[:, :3].astype(np.float64)
        normals = vert[:, 3:6].astype(np.float64) if has_normals else None
        faces = None
        if n_face:
            rec = np.frombuffer(f.read(n_face * (1 + 12)), dtype=[("n", "u1"), ("idx", "<i4", (3,))])
            faces = rec["idx"].astype(np.int64)
    return points, normals, faces
