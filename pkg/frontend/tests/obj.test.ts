import { readFileSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';
import { describe, expect, it } from 'vitest';
import { meshBounds, meshVolume, parseObj } from '../src/obj.js';
import { fitZoom, meshCenter, projectMesh, scaleBarFor } from '../src/mesh3d.js';

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), 'fixtures');

// 2x2x2 cube about the origin, outward-wound
const CUBE = `
v -1 -1 -1
v 1 -1 -1
v 1 1 -1
v -1 1 -1
v -1 -1 1
v 1 -1 1
v 1 1 1
v -1 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
`;

describe('parseObj', () => {
  it('reads vertices and 1-based faces', () => {
    const mesh = parseObj(CUBE);
    expect(mesh.vertices.length).toBe(24);
    expect(mesh.triangles.length).toBe(36);
    expect(meshBounds(mesh)).toEqual({ min: [-1, -1, -1], max: [1, 1, 1] });
  });

  it('accepts v/vt/vn face syntax and object names', () => {
    const mesh = parseObj('o blob\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3\n');
    expect(mesh.name).toBe('blob');
    expect(Array.from(mesh.triangles)).toEqual([0, 1, 2]);
  });

  it('rejects out-of-range face indices', () => {
    expect(() => parseObj('v 0 0 0\nf 1 2 3\n')).toThrow('vertex');
  });
});

describe('meshVolume', () => {
  it('integrates the cube exactly', () => {
    expect(meshVolume(parseObj(CUBE))).toBeCloseTo(8, 10);
  });

  it('matches the service figure for the ellipsoid export within 1%', () => {
    const mesh = parseObj(readFileSync(join(FIXTURES, 'ellipsoid.obj'), 'utf-8'));
    const report = JSON.parse(readFileSync(join(FIXTURES, 'ellipsoid.json'), 'utf-8'));
    const server = report.volumes.lesion_mm3 as number;
    const client = meshVolume(mesh);
    expect(mesh.triangles.length).toBeGreaterThan(0);
    expect(Math.abs(client - server) / server).toBeLessThan(0.01);
  });
});

describe('projection', () => {
  it('maps +x to screen right and +z to screen up at rest pose', () => {
    const mesh = parseObj('v 0 0 0\nv 1 0 0\nv 0 0 1\nf 1 2 3\n');
    const [tri] = projectMesh(mesh, { yaw: 0, pitch: 0, zoom: 10 }, 200, 200, [0, 0, 0]);
    const [origin, px, pz] = tri.points;
    expect(px[0]).toBeCloseTo(origin[0] + 10, 9);
    expect(px[1]).toBeCloseTo(origin[1], 9);
    expect(pz[1]).toBeCloseTo(origin[1] - 10, 9);
  });

  it('orders triangles back to front', () => {
    const mesh = parseObj(
      'v 0 -5 0\nv 1 -5 0\nv 0 -5 1\nv 0 5 0\nv 1 5 0\nv 0 5 1\nf 4 5 6\nf 1 2 3\n',
    );
    const tris = projectMesh(mesh, { yaw: 0, pitch: 0, zoom: 1 }, 100, 100, [0, 0, 0]);
    expect(tris[0].depth).toBeLessThan(tris[1].depth);
  });

  it('centers and fits the cube', () => {
    const mesh = parseObj(CUBE);
    expect(meshCenter(mesh)).toEqual([0, 0, 0]);
    // span 2 mm into 70% of a 100 px viewport
    expect(fitZoom(mesh, 100, 200)).toBeCloseTo(35, 9);
  });
});

describe('scaleBarFor', () => {
  it('picks the longest 1-2-5 length that fits', () => {
    expect(scaleBarFor(10, 120)).toEqual({ mm: 10, px: 100 });
    expect(scaleBarFor(3, 100)).toEqual({ mm: 20, px: 60 });
    expect(scaleBarFor(250, 150)).toEqual({ mm: 0.5, px: 125 });
  });

  it('degrades to an empty bar on nonsense zooms', () => {
    expect(scaleBarFor(0, 100)).toEqual({ mm: 0, px: 0 });
    expect(scaleBarFor(10, 0)).toEqual({ mm: 0, px: 0 });
  });
});
