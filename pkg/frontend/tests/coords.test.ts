import { describe, expect, it } from 'vitest';
import { canvasToPixel, fitTransform, pixelToCanvas } from '../src/coords.js';

// Deterministic jitter source so the sweep cases never flake.
function lcg(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state * 1664525 + 1013904223) >>> 0;
    return state / 2 ** 32;
  };
}

describe('fitTransform', () => {
  it('doubles a 256 slice into a 512 canvas with no margin', () => {
    const t = fitTransform(256, 256, 512, 512);
    expect(t.scale).toBe(2);
    expect(t.offsetX).toBe(0);
    expect(t.offsetY).toBe(0);
  });

  it('letterboxes a wide canvas symmetrically', () => {
    const t = fitTransform(256, 256, 612, 512);
    expect(t.scale).toBe(2);
    expect(t.offsetX).toBe(50);
    expect(t.offsetY).toBe(0);
  });
});

describe('canvasToPixel', () => {
  it('maps the displayed center of a 256x256 slice shown at 512x512 to (128,128)', () => {
    const t = fitTransform(256, 256, 512, 512);
    expect(canvasToPixel(t, 256, 256)).toEqual({ x: 128, y: 128 });
  });

  it('returns null for margin clicks and pixels for edge clicks', () => {
    const t = fitTransform(256, 256, 612, 512);
    expect(canvasToPixel(t, 49.9, 300)).toBeNull();
    expect(canvasToPixel(t, 50, 300)?.x).toBe(0);
    expect(canvasToPixel(t, 561.9, 300)?.x).toBe(255);
    expect(canvasToPixel(t, 562, 300)).toBeNull();
    expect(canvasToPixel(t, 300, -0.1)).toBeNull();
    expect(canvasToPixel(t, 300, 512)).toBeNull();
  });

  it('hits every pixel of a small grid exactly through its cell center', () => {
    const t = fitTransform(16, 12, 200, 300);
    for (let y = 0; y < 12; y++) {
      for (let x = 0; x < 16; x++) {
        const { cx, cy } = pixelToCanvas(t, x, y);
        expect(canvasToPixel(t, cx, cy)).toEqual({ x, y });
      }
    }
  });
});

describe('round trip', () => {
  it('is identity within 0.5 px at any zoom', () => {
    const rand = lcg(7);
    for (const [w, h, cw, ch] of [
      [256, 256, 512, 512],
      [256, 256, 365, 401],
      [100, 140, 1024, 768],
      [512, 512, 300, 300],
    ]) {
      const t = fitTransform(w, h, cw, ch);
      for (let i = 0; i < 200; i++) {
        const cx = t.offsetX + rand() * w * t.scale;
        const cy = t.offsetY + rand() * h * t.scale;
        const pixel = canvasToPixel(t, cx, cy);
        expect(pixel).not.toBeNull();
        const back = pixelToCanvas(t, pixel!.x, pixel!.y);
        // error measured in slice pixels
        expect(Math.abs(back.cx - cx) / t.scale).toBeLessThanOrEqual(0.5);
        expect(Math.abs(back.cy - cy) / t.scale).toBeLessThanOrEqual(0.5);
        expect(canvasToPixel(t, back.cx, back.cy)).toEqual(pixel);
      }
    }
  });
});
