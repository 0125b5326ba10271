// Wire protocol mirror: one JSON object per WebSocket text frame,
// {kind, session_id, seq, payload}. The server sends exactly one terminal
// reply per request seq; propagation_update frames are pushes that arrive
// before their propagate's terminal propagation_done.

export type Polarity = 'positive' | 'negative';

export interface Frame {
  kind: string;
  session_id: string | null;
  seq: number;
  payload: Record<string, unknown>;
}

export interface PixelPayload {
  width: number;
  height: number;
  pixels: string; // base64 row-major uint8
}

export interface MaskPayload {
  width: number;
  height: number;
  rle: number[]; // run lengths, first run counts zeros
}

export interface ReferenceInfo {
  record_id: string;
  slice_index: number;
  has_pathology: boolean;
  thumbnail_ref: string | null;
}

export interface GuidancePayload {
  mode: string;
  text: string;
  positive_ref: string;
  negative_ref: string;
  provider: string;
}

export interface SlicePayload {
  slice_index: number;
  extent: number;
  window: [number, number];
  image: PixelPayload;
  mask: MaskPayload | null;
  references?: { positive: ReferenceInfo; negative: ReferenceInfo } | null;
}

export interface StreamStep {
  slice_index: number;
  direction: string;
  ordinal: number;
  iou_vs_previous: number | null;
  mask_area: number;
  mask: MaskPayload;
}

export function decodePixels(payload: PixelPayload): Uint8ClampedArray {
  const raw = atob(payload.pixels);
  const expected = payload.width * payload.height;
  if (raw.length !== expected) {
    throw new Error(`pixel payload holds ${raw.length} bytes for a ${payload.width}x${payload.height} image`);
  }
  const out = new Uint8ClampedArray(expected);
  for (let i = 0; i < expected; i++) {
    out[i] = raw.charCodeAt(i);
  }
  return out;
}

export function decodeMask(payload: MaskPayload): Uint8Array {
  const size = payload.width * payload.height;
  let total = 0;
  for (const run of payload.rle) {
    if (run < 0) throw new Error('mask run lengths must be non-negative');
    total += run;
  }
  if (total !== size) {
    throw new Error(`mask runs sum to ${total}, expected ${size}`);
  }
  const out = new Uint8Array(size);
  let pos = 0;
  let bit = 0;
  for (const run of payload.rle) {
    if (bit) out.fill(1, pos, pos + run);
    pos += run;
    bit ^= 1;
  }
  return out;
}

// Writer half of the browser WebSocket; incoming text reaches the session
// through handleMessage, so tests can drive frames in directly.
export interface SocketLike {
  send(data: string): void;
  close(): void;
}

interface PendingRequest {
  resolve: (frame: Frame) => void;
  reject: (err: Error) => void;
}

export class SessionSocket {
  sessionId: string | null = null;
  onPush: ((frame: Frame) => void) | null = null;
  // Frames addressed to no live request: unparseable-frame errors (seq -1)
  // and anything arriving after its requester gave up.
  onStray: ((frame: Frame) => void) | null = null;

  private seq = 0;
  private pending = new Map<number, PendingRequest>();

  constructor(private socket: SocketLike) {}

  handleMessage(data: string): void {
    this.dispatch(JSON.parse(data) as Frame);
  }

  // Resolves with the terminal frame for this request, which may be an
  // error frame; callers inspect frame.kind rather than catching.
  request(kind: string, payload: Record<string, unknown> = {}): Promise<Frame> {
    const seq = ++this.seq;
    const frame: Frame = { kind, session_id: this.sessionId, seq, payload };
    return new Promise((resolve, reject) => {
      this.pending.set(seq, { resolve, reject });
      this.socket.send(JSON.stringify(frame));
    });
  }

  close(): void {
    this.socket.close();
    for (const entry of this.pending.values()) {
      entry.reject(new Error('socket closed'));
    }
    this.pending.clear();
  }

  private dispatch(frame: Frame): void {
    if (frame.kind === 'propagation_update') {
      this.onPush?.(frame);
      return;
    }
    const entry = this.pending.get(frame.seq);
    if (!entry) {
      this.onStray?.(frame);
      return;
    }
    this.pending.delete(frame.seq);
    if (frame.kind === 'open_session' && frame.session_id) {
      this.sessionId = frame.session_id;
    }
    entry.resolve(frame);
  }
}
