// Slice compositing: grayscale base with the mask blended in red at fixed
// opacity. The toggle only affects rendering; mask data is never touched.

export const MASK_OPACITY = 0.4;
export const POSITIVE_COLOR = '#27c93f';
export const NEGATIVE_COLOR = '#e5383b';

export function compositeSlice(
  gray: Uint8ClampedArray | Uint8Array,
  width: number,
  height: number,
  mask: Uint8Array | null,
  overlayVisible: boolean,
): Uint8ClampedArray<ArrayBuffer> {
  const size = width * height;
  if (gray.length !== size) {
    throw new Error(`expected ${size} gray pixels, got ${gray.length}`);
  }
  if (mask !== null && mask.length !== size) {
    throw new Error(`expected ${size} mask pixels, got ${mask.length}`);
  }
  const out = new Uint8ClampedArray(size * 4);
  const keep = 1 - MASK_OPACITY;
  for (let i = 0; i < size; i++) {
    const g = gray[i];
    let r = g;
    let gb = g;
    if (overlayVisible && mask !== null && mask[i]) {
      r = Math.round(g * keep + 255 * MASK_OPACITY);
      gb = Math.round(g * keep);
    }
    const o = i * 4;
    out[o] = r;
    out[o + 1] = gb;
    out[o + 2] = gb;
    out[o + 3] = 255;
  }
  return out;
}
