// Optional pointer filter: the same exponential blend the session applies
// to direction streams, ported to the cursor position that a click samples.
// Off by default; enabling it steadies click placement during fixation.

export const SMOOTHING_ALPHA = 0.2;

export class PointerSmoother {
  enabled = false;

  private sx = NaN;
  private sy = NaN;

  constructor(private alpha: number = SMOOTHING_ALPHA) {}

  feed(x: number, y: number): { x: number; y: number } {
    if (!this.enabled) {
      return { x, y };
    }
    if (Number.isNaN(this.sx)) {
      this.sx = x;
      this.sy = y;
    } else {
      this.sx = (1 - this.alpha) * this.sx + this.alpha * x;
      this.sy = (1 - this.alpha) * this.sy + this.alpha * y;
    }
    return { x: this.sx, y: this.sy };
  }

  reset(): void {
    this.sx = NaN;
    this.sy = NaN;
  }
}
