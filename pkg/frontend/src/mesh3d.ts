// Minimal orthographic mesh projection for the review pane: yaw/pitch
// orbit, painter-sorted triangles, flat shading. Inputs are in mm, so the
// zoom factor is px per mm and feeds the scale bar directly.

import type { ObjMesh } from './obj.js';
import { meshBounds } from './obj.js';

export interface Camera {
  yaw: number; // radians around the vertical axis
  pitch: number; // radians around the screen-horizontal axis
  zoom: number; // px per mm
}

export interface ScreenTriangle {
  points: [number, number][]; // 2D canvas coords, one per corner
  depth: number;
  shade: number; // 0..1 flat-shading factor
}

export function meshCenter(mesh: ObjMesh): number[] {
  const { min, max } = meshBounds(mesh);
  return [0, 1, 2].map((axis) => (min[axis] + max[axis]) / 2);
}

export function fitZoom(mesh: ObjMesh, width: number, height: number, fill = 0.7): number {
  const { min, max } = meshBounds(mesh);
  const span = Math.max(max[0] - min[0], max[1] - min[1], max[2] - min[2]);
  if (!(span > 0)) return 1;
  return (Math.min(width, height) * fill) / span;
}

export function projectMesh(
  mesh: ObjMesh,
  camera: Camera,
  width: number,
  height: number,
  center: number[],
): ScreenTriangle[] {
  const cosY = Math.cos(camera.yaw);
  const sinY = Math.sin(camera.yaw);
  const cosP = Math.cos(camera.pitch);
  const sinP = Math.sin(camera.pitch);
  const v = mesh.vertices;
  const count = v.length / 3;

  const sx = new Float64Array(count);
  const sy = new Float64Array(count);
  const sz = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    const x = v[i * 3] - center[0];
    const y = v[i * 3 + 1] - center[1];
    const z = v[i * 3 + 2] - center[2];
    // yaw about z (volume axial axis), then pitch about the screen x axis
    const rx = x * cosY - y * sinY;
    const ry = x * sinY + y * cosY;
    const rz = z;
    const py = ry * cosP - rz * sinP;
    const pz = ry * sinP + rz * cosP;
    sx[i] = width / 2 + rx * camera.zoom;
    sy[i] = height / 2 - pz * camera.zoom;
    sz[i] = py; // depth toward the viewer
  }

  const out: ScreenTriangle[] = [];
  const t = mesh.triangles;
  for (let i = 0; i < t.length; i += 3) {
    const a = t[i];
    const b = t[i + 1];
    const c = t[i + 2];
    const ux = sx[b] - sx[a];
    const uy = sy[b] - sy[a];
    const uz = sz[b] - sz[a];
    const wx = sx[c] - sx[a];
    const wy = sy[c] - sy[a];
    const wz = sz[c] - sz[a];
    // screen-space normal; its z component doubles as the light term
    const nz = ux * wy - uy * wx;
    const nx = uy * wz - uz * wy;
    const ny = uz * wx - ux * wz;
    const norm = Math.hypot(nx, ny, nz);
    const shade = norm > 0 ? 0.35 + 0.65 * Math.abs(nz) / norm : 0.35;
    out.push({
      points: [
        [sx[a], sy[a]],
        [sx[b], sy[b]],
        [sx[c], sy[c]],
      ],
      depth: (sz[a] + sz[b] + sz[c]) / 3,
      shade,
    });
  }
  out.sort((p, q) => p.depth - q.depth);
  return out;
}

// Scale bar: the longest 1-2-5 series length in mm whose screen size stays
// within maxPx at the current zoom.
export function scaleBarFor(pxPerMm: number, maxPx: number): { mm: number; px: number } {
  if (!(pxPerMm > 0) || !(maxPx > 0)) {
    return { mm: 0, px: 0 };
  }
  let best = { mm: 0, px: 0 };
  for (let decade = -3; decade <= 4; decade++) {
    for (const step of [1, 2, 5]) {
      const mm = step * 10 ** decade;
      const px = mm * pxPerMm;
      if (px <= maxPx && px > best.px) {
        best = { mm, px };
      }
    }
  }
  return best;
}
