// Display <-> slice-pixel mapping. Pixel (x, y) occupies the canvas cell
// [offset + x*scale, offset + (x+1)*scale); its display anchor is the cell
// center, so the round trip pixel -> canvas -> pixel is exact and
// canvas -> pixel -> canvas lands within half a pixel at any zoom.

export interface SliceTransform {
  imageW: number;
  imageH: number;
  scale: number; // canvas units per slice pixel
  offsetX: number;
  offsetY: number;
}

export function fitTransform(
  imageW: number,
  imageH: number,
  canvasW: number,
  canvasH: number,
): SliceTransform {
  const scale = Math.min(canvasW / imageW, canvasH / imageH);
  return {
    imageW,
    imageH,
    scale,
    offsetX: (canvasW - imageW * scale) / 2,
    offsetY: (canvasH - imageH * scale) / 2,
  };
}

// Inverse of the display scaling, rounded to the nearest pixel. Clicks in
// the margin (outside the drawn image rectangle) return null.
export function canvasToPixel(
  t: SliceTransform,
  cx: number,
  cy: number,
): { x: number; y: number } | null {
  const u = (cx - t.offsetX) / t.scale;
  const v = (cy - t.offsetY) / t.scale;
  if (u < 0 || v < 0 || u >= t.imageW || v >= t.imageH) {
    return null;
  }
  const x = Math.min(t.imageW - 1, Math.max(0, Math.round(u - 0.5)));
  const y = Math.min(t.imageH - 1, Math.max(0, Math.round(v - 0.5)));
  return { x, y };
}

export function pixelToCanvas(
  t: SliceTransform,
  x: number,
  y: number,
): { cx: number; cy: number } {
  return {
    cx: t.offsetX + (x + 0.5) * t.scale,
    cy: t.offsetY + (y + 0.5) * t.scale,
  };
}
