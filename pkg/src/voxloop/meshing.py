"""Isosurface extraction and physically scaled Wavefront OBJ export.

Masks are lifted to a {0,1} scalar field and contoured at iso 0.5; regions
that stay clear of the grid boundary come out watertight. Vertices live in
voxel index space until scaled by the volume's spacing, which is what
makes the exported geometry true to physical size.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from skimage import measure

from .errors import VoxloopError
from .volume import MaskVolume, Volume


@dataclass
class TriMesh:
    vertices: np.ndarray  # (n, 3) float64
    triangles: np.ndarray  # (m, 3) int32, indices into vertices
    name: str = ""

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles):
            if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
                raise VoxloopError("triangle indices out of range")
            degenerate = (
                (self.triangles[:, 0] == self.triangles[:, 1])
                | (self.triangles[:, 1] == self.triangles[:, 2])
                | (self.triangles[:, 0] == self.triangles[:, 2])
            )
            if degenerate.any():
                raise VoxloopError("mesh contains triangles with repeated vertex indices")
        if len(self.vertices) and not np.isfinite(self.vertices).all():
            raise VoxloopError("mesh contains non-finite vertex coordinates")

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0


def _empty_mesh(name: str) -> TriMesh:
    return TriMesh(
        vertices=np.zeros((0, 3), np.float64),
        triangles=np.zeros((0, 3), np.int64),
        name=name,
    )


def marching_cubes(field: np.ndarray, iso: float, name: str = "") -> TriMesh:
    """Contour a scalar grid at `iso`; vertices are in voxel coordinates.

    A field the iso level never crosses yields an empty mesh rather than
    an error.
    """
    field = np.asarray(field)
    if field.ndim != 3 or min(field.shape) < 2:
        raise VoxloopError(f"marching cubes needs a 3D grid with dims >= 2, got {field.shape}")
    if not np.isfinite(iso):
        raise VoxloopError(f"iso level must be finite, got {iso}")
    fmin = float(field.min())
    fmax = float(field.max())
    if not fmin <= iso <= fmax or fmin == fmax:
        return _empty_mesh(name)
    verts, faces, _normals, _values = measure.marching_cubes(
        field.astype(np.float32), level=iso
    )
    keep = (
        (faces[:, 0] != faces[:, 1])
        & (faces[:, 1] != faces[:, 2])
        & (faces[:, 0] != faces[:, 2])
    )
    return TriMesh(vertices=verts, triangles=faces[keep], name=name)


def mask_to_mesh(mask, name: str = "") -> TriMesh:
    """Lift a binary mask to {0,1} and contour at 0.5."""
    bits = mask.bits if isinstance(mask, MaskVolume) else np.asarray(mask)
    label = name or (mask.target_name if isinstance(mask, MaskVolume) else "")
    return marching_cubes(bits.astype(np.float32), 0.5, name=label)


def scale_mesh(mesh: TriMesh, spacing: tuple[float, float, float]) -> TriMesh:
    """Map voxel coordinates to millimeters: (x, y, z) -> (x*sx, y*sy, z*sz)."""
    sx, sy, sz = (float(s) for s in spacing)
    if min(sx, sy, sz) <= 0:
        raise VoxloopError(f"spacing must be positive, got {spacing}")
    return TriMesh(
        vertices=mesh.vertices * np.array([sx, sy, sz]),
        triangles=mesh.triangles.copy(),
        name=mesh.name,
    )


def context_surface(volume: Volume, threshold: float) -> TriMesh:
    """Anatomy surface at an intensity threshold, scaled to millimeters."""
    mesh = marching_cubes(volume.intensities, threshold, name=f"context@{threshold:g}")
    return scale_mesh(mesh, volume.spacing)


def signed_volume(mesh: TriMesh) -> float:
    """Enclosed volume of a closed mesh: |sum of det(v0, v1, v2) / 6|."""
    if mesh.is_empty:
        return 0.0
    v0 = mesh.vertices[mesh.triangles[:, 0]]
    v1 = mesh.vertices[mesh.triangles[:, 1]]
    v2 = mesh.vertices[mesh.triangles[:, 2]]
    return abs(float(np.einsum("ij,ij->i", v0, np.cross(v1, v2)).sum()) / 6.0)


def is_watertight(mesh: TriMesh) -> bool:
    """Every undirected edge must belong to exactly two triangles."""
    if mesh.is_empty:
        return False
    edges = np.concatenate(
        [mesh.triangles[:, [0, 1]], mesh.triangles[:, [1, 2]], mesh.triangles[:, [2, 0]]]
    )
    edges = np.sort(edges, axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return bool((counts == 2).all())


def write_obj(mesh: TriMesh, path) -> Path:
    """ASCII OBJ, LF endings: `v x y z` (6 decimals) and 1-based `f i j k`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for x, y, z in mesh.vertices:
        lines.append(f"v {x:.6f} {y:.6f} {z:.6f}")
    for a, b, c in mesh.triangles:
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))
    return path


def read_obj(path, name: str = "") -> TriMesh:
    path = Path(path)
    verts = []
    faces = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            try:
                verts.append([float(p) for p in parts[1:4]])
            except ValueError as e:
                raise VoxloopError(f"{path.name}:{lineno}: bad vertex: {e}") from e
        elif parts[0] == "f":
            try:
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
            except ValueError as e:
                raise VoxloopError(f"{path.name}:{lineno}: bad face: {e}") from e
    return TriMesh(
        vertices=np.array(verts, np.float64).reshape(-1, 3),
        triangles=np.array(faces, np.int64).reshape(-1, 3),
        name=name or path.stem,
    )


def scale_and_export(mesh: TriMesh, spacing: tuple[float, float, float], path) -> Path:
    """Scale to millimeters and write; reading the file back reproduces the
    scaled vertices to 1e-4 mm."""
    return write_obj(scale_mesh(mesh, spacing), path)
