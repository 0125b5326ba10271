// Wavefront OBJ subset reader for the server's mesh exports, plus the
// volume integral shown in the info panel. Coordinates arrive in mm.

export interface ObjMesh {
  vertices: Float64Array; // xyz triples
  triangles: Uint32Array; // vertex index triples, 0-based
  name: string | null;
}

export function parseObj(text: string): ObjMesh {
  const vertices: number[] = [];
  const triangles: number[] = [];
  let name: string | null = null;

  for (const rawLine of text.split('\n')) {
    const line = rawLine.trim();
    if (line === '' || line.startsWith('#')) continue;
    const parts = line.split(/\s+/);
    const type = parts[0];
    if (type === 'v') {
      vertices.push(parseFloat(parts[1]), parseFloat(parts[2]), parseFloat(parts[3]));
    } else if (type === 'f') {
      // f entries are 1-based and may carry /vt/vn suffixes; polygons with
      // more than three corners are fanned from the first.
      const corners = parts.slice(1).map((p) => parseInt(p.split('/')[0], 10) - 1);
      for (let i = 1; i + 1 < corners.length; i++) {
        triangles.push(corners[0], corners[i], corners[i + 1]);
      }
    } else if (type === 'o' || type === 'g') {
      name = parts[1] ?? null;
    }
  }

  const vertexCount = vertices.length / 3;
  for (const idx of triangles) {
    if (idx < 0 || idx >= vertexCount) {
      throw new Error(`face references vertex ${idx + 1} of ${vertexCount}`);
    }
  }
  return {
    vertices: Float64Array.from(vertices),
    triangles: Uint32Array.from(triangles),
    name,
  };
}

// Magnitude of the signed volume: sum of tetrahedron determinants against
// the origin. Matches the server's figure for any closed mesh.
export function meshVolume(mesh: ObjMesh): number {
  const v = mesh.vertices;
  const t = mesh.triangles;
  let total = 0;
  for (let i = 0; i < t.length; i += 3) {
    const a = t[i] * 3;
    const b = t[i + 1] * 3;
    const c = t[i + 2] * 3;
    const cx = v[b + 1] * v[c + 2] - v[b + 2] * v[c + 1];
    const cy = v[b + 2] * v[c] - v[b] * v[c + 2];
    const cz = v[b] * v[c + 1] - v[b + 1] * v[c];
    total += v[a] * cx + v[a + 1] * cy + v[a + 2] * cz;
  }
  return Math.abs(total) / 6;
}

export function meshBounds(mesh: ObjMesh): { min: number[]; max: number[] } {
  const min = [Infinity, Infinity, Infinity];
  const max = [-Infinity, -Infinity, -Infinity];
  const v = mesh.vertices;
  for (let i = 0; i < v.length; i += 3) {
    for (let axis = 0; axis < 3; axis++) {
      const value = v[i + axis];
      if (value < min[axis]) min[axis] = value;
      if (value > max[axis]) max[axis] = value;
    }
  }
  return { min, max };
}
