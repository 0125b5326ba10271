// Client-side session state. Everything here is reconstructible from the
// frame log: replies and pushes mutate the view, nothing else does, and no
// segmentation logic runs on this side of the socket.

import type {
  Frame,
  GuidancePayload,
  MaskPayload,
  Polarity,
  ReferenceInfo,
  SlicePayload,
  StreamStep,
} from './protocol.js';
import type { SliceTransform } from './coords.js';
import { canvasToPixel } from './coords.js';

export const CONTEXTUALIZE = 'Contextualize';
export const EXPLORE = 'Explore';
export const COMMAND_PENDING = 'CommandPending';
export const SEEDED = 'Seeded';
export const PROPAGATING = 'Propagating';
export const REVIEW = 'Review';
export const COMPLETED = 'Completed';

// Mirror of the server's per-kind state gate; button availability follows
// this table exactly, so e.g. navigation is disabled while Seeded.
export const CONTROL_STATES: Record<string, string[]> = {
  navigate: [EXPLORE, REVIEW],
  submit_command: [EXPLORE, COMMAND_PENDING],
  confirm_command: [COMMAND_PENDING],
  add_prompt: [SEEDED, REVIEW],
  clear_prompts: [SEEDED, REVIEW],
  refine: [SEEDED, REVIEW],
  propagate: [SEEDED],
  reseed: [REVIEW],
  complete: [REVIEW],
  request_mesh: [COMPLETED],
};

export interface PromptEcho {
  x: number;
  y: number;
  polarity: Polarity;
  sequence: number;
}

export interface ReferencePair {
  positive: ReferenceInfo;
  negative: ReferenceInfo;
}

export interface PropagationSummary {
  seedSliceIndex: number;
  haltReasons: Record<string, string>;
  acceptedSlices: number[];
  totalVoxels: number;
  iouTrace: { sliceIndex: number; direction: string; iou: number | null; accepted: boolean }[];
  error: string | null;
}

export interface MeshInfo {
  files: Record<string, string>;
  volumes: Record<string, number>;
  contextThreshold: number;
  lesionWatertight: boolean;
}

interface StatusFields {
  session_id?: string;
  state?: string;
  active_slice?: number;
  target?: string | null;
  pending_prompts?: number;
  confirmed_points?: number;
  clear_events?: number;
}

export class SessionView {
  sessionId: string | null = null;
  state: string = CONTEXTUALIZE;
  activeSlice = 0;
  extent = 0;
  dims: number[] | null = null;
  spacing: number[] | null = null;
  target: string | null = null;
  pendingPrompts = 0;
  confirmedPoints = 0;
  clearEvents = 0;

  overlayVisible = true;
  connected = false;

  slice: SlicePayload | null = null;
  promptEcho: PromptEcho[] = [];
  guidance: GuidancePayload | null = null;
  guidanceDisabled = false;
  references: ReferencePair | null = null;
  warning: string | null = null;
  lastError: { code: string; message: string; request_kind?: string } | null = null;
  challenge: string | null = null;
  sessionFiles: Record<string, string> | null = null;
  meshInfo: MeshInfo | null = null;

  // Streaming propagation. steps holds updates in arrival order; a skipped
  // ordinal marks a stream gap and flags the view for a state resync.
  streamSteps: StreamStep[] = [];
  streamMask: MaskPayload | null = null;
  resyncNeeded = false;
  report: PropagationSummary | null = null;

  // Grayscale payloads already seen, keyed by slice index, so the display
  // can follow the stream even though updates carry masks only.
  readonly sliceImages = new Map<number, SlicePayload['image']>();

  allows(kind: string): boolean {
    const states = CONTROL_STATES[kind];
    if (!states) return this.state !== PROPAGATING;
    return states.includes(this.state);
  }

  get navigationEnabled(): boolean {
    return this.allows('navigate');
  }

  applyFrame(frame: Frame): void {
    const payload = frame.payload ?? {};
    switch (frame.kind) {
      case 'error':
        this.lastError = payload as unknown as { code: string; message: string; request_kind?: string };
        return;
      case 'propagation_update':
        this.applyStreamStep(payload as unknown as StreamStep);
        return;
      default:
        break;
    }

    this.lastError = null;
    this.applyStatus(payload as StatusFields);

    switch (frame.kind) {
      case 'open_session': {
        this.dims = (payload.dims as number[]) ?? null;
        this.spacing = (payload.spacing as number[]) ?? null;
        this.guidanceDisabled = Boolean(payload.guidance_disabled);
        this.warning = (payload.warning as string) ?? null;
        this.applyGuidance(payload);
        this.applySlice(payload.slice as SlicePayload | undefined);
        this.connected = true;
        break;
      }
      case 'navigate':
      case 'refine':
        this.applySlice(payload.slice as SlicePayload | undefined);
        break;
      case 'confirm_command': {
        this.applyGuidance(payload);
        this.applySlice(payload.slice as SlicePayload | undefined);
        if (payload.seeded === false) {
          this.warning = (payload.reply as string) ?? null;
        }
        break;
      }
      case 'add_prompt': {
        const accepted = payload.accepted as PromptEcho | undefined;
        if (accepted) this.promptEcho.push(accepted);
        break;
      }
      case 'propagate':
      case 'propagation_done': {
        this.report = summarizeReport(payload);
        this.streamMask = null;
        break;
      }
      case 'complete': {
        if (payload.confirmed === false) {
          this.challenge = (payload.challenge as string) ?? null;
        } else {
          this.challenge = null;
          this.sessionFiles = (payload.files as Record<string, string>) ?? null;
        }
        break;
      }
      case 'request_mesh': {
        this.meshInfo = {
          files: (payload.files as Record<string, string>) ?? {},
          volumes: (payload.volumes as Record<string, number>) ?? {},
          contextThreshold: Number(payload.context_threshold),
          lesionWatertight: Boolean(payload.lesion_watertight),
        };
        break;
      }
      case 'guidance':
        this.applyGuidance(payload);
        break;
      default:
        break;
    }

    // The ack's pending count is authoritative; the echo only mirrors it.
    if (this.pendingPrompts === 0) {
      this.promptEcho = [];
    }
  }

  beginPropagation(): void {
    this.state = PROPAGATING;
    this.streamSteps = [];
    this.streamMask = null;
    this.resyncNeeded = false;
    this.report = null;
  }

  private applyStreamStep(step: StreamStep): void {
    const expected = this.streamSteps.length + 1;
    if (step.ordinal !== expected) {
      this.resyncNeeded = true;
    }
    this.streamSteps.push(step);
    // Auto-advance: the display follows the stream in arrival order.
    this.activeSlice = step.slice_index;
    this.streamMask = step.mask;
  }

  private applyStatus(status: StatusFields): void {
    if (status.session_id !== undefined) this.sessionId = status.session_id;
    if (status.state !== undefined) this.state = status.state;
    if (status.active_slice !== undefined) this.activeSlice = status.active_slice;
    if (status.target !== undefined) this.target = status.target;
    if (status.pending_prompts !== undefined) this.pendingPrompts = status.pending_prompts;
    if (status.confirmed_points !== undefined) this.confirmedPoints = status.confirmed_points;
    if (status.clear_events !== undefined) this.clearEvents = status.clear_events;
  }

  private applySlice(slice: SlicePayload | undefined): void {
    if (!slice) return;
    this.slice = slice;
    this.extent = slice.extent;
    this.activeSlice = slice.slice_index;
    this.sliceImages.set(slice.slice_index, slice.image);
    if (slice.references !== undefined) {
      this.references = slice.references ?? null;
    }
  }

  private applyGuidance(payload: Record<string, unknown>): void {
    if (payload.guidance !== undefined) {
      this.guidance = (payload.guidance as GuidancePayload) ?? null;
    }
  }
}

function summarizeReport(payload: Record<string, unknown>): PropagationSummary {
  const records = (payload.records as Record<string, unknown>[]) ?? [];
  return {
    seedSliceIndex: Number(payload.seed_slice_index),
    haltReasons: (payload.halt_reasons as Record<string, string>) ?? {},
    acceptedSlices: (payload.accepted_slices as number[]) ?? [],
    totalVoxels: Number(payload.total_voxels ?? 0),
    iouTrace: records.map((r) => ({
      sliceIndex: Number(r.slice_index),
      direction: String(r.direction),
      iou: r.iou_vs_previous === null ? null : Number(r.iou_vs_previous),
      accepted: Boolean(r.accepted),
    })),
    error: (payload.error as string) ?? null,
  };
}

// Click -> add_prompt payload, or null when the click must not produce a
// message (wrong state, or in the margin outside the drawn image).
export function promptForClick(
  view: SessionView,
  transform: SliceTransform,
  cx: number,
  cy: number,
  polarity: Polarity,
): { slice_index: number; x: number; y: number; polarity: Polarity } | null {
  if (!view.allows('add_prompt')) return null;
  const pixel = canvasToPixel(transform, cx, cy);
  if (!pixel) return null;
  return { slice_index: view.activeSlice, x: pixel.x, y: pixel.y, polarity };
}
