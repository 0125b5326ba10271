// Page wiring: one WebSocket session, three panes (guidance left, viewer
// center, references right), and the mesh review pane after completion.
// All protocol and geometry logic lives in the imported modules; this file
// only moves data between them and the DOM.

import { SessionSocket, decodeMask, decodePixels } from './protocol.js';
import type { Frame, MaskPayload, Polarity, PixelPayload } from './protocol.js';
import { fitTransform, pixelToCanvas } from './coords.js';
import { compositeSlice, NEGATIVE_COLOR, POSITIVE_COLOR } from './overlay.js';
import { PointerSmoother } from './smoothing.js';
import { debounce, NAVIGATE_DEBOUNCE_MS } from './debounce.js';
import { parseObj, meshVolume } from './obj.js';
import type { ObjMesh } from './obj.js';
import { fitZoom, meshCenter, projectMesh, scaleBarFor } from './mesh3d.js';
import type { Camera } from './mesh3d.js';
import { SessionView, promptForClick, PROPAGATING, SEEDED } from './view.js';

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

const canvas = byId<HTMLCanvasElement>('slice-canvas');
const ctx = canvas.getContext('2d')!;
const sliceLabel = byId<HTMLElement>('slice-label');
const stateLabel = byId<HTMLElement>('state-label');
const statusLine = byId<HTMLElement>('status-line');
const guidanceText = byId<HTMLElement>('guidance-text');
const guidanceMeta = byId<HTMLElement>('guidance-meta');
const warningBox = byId<HTMLElement>('warning-box');
const reportBox = byId<HTMLElement>('report-box');
const refPositive = byId<HTMLImageElement>('ref-positive');
const refNegative = byId<HTMLImageElement>('ref-negative');
const refPositiveCaption = byId<HTMLElement>('ref-positive-caption');
const refNegativeCaption = byId<HTMLElement>('ref-negative-caption');
const commandInput = byId<HTMLInputElement>('command-input');
const volumeInput = byId<HTMLInputElement>('volume-input');
const meshPane = byId<HTMLElement>('mesh-pane');
const meshCanvas = byId<HTMLCanvasElement>('mesh-canvas');
const meshCtx = meshCanvas.getContext('2d')!;
const meshInfo = byId<HTMLElement>('mesh-info');

const buttons = {
  connect: byId<HTMLButtonElement>('btn-connect'),
  submit: byId<HTMLButtonElement>('btn-submit'),
  confirm: byId<HTMLButtonElement>('btn-confirm'),
  refine: byId<HTMLButtonElement>('btn-refine'),
  clear: byId<HTMLButtonElement>('btn-clear'),
  propagate: byId<HTMLButtonElement>('btn-propagate'),
  reseed: byId<HTMLButtonElement>('btn-reseed'),
  complete: byId<HTMLButtonElement>('btn-complete'),
  mesh: byId<HTMLButtonElement>('btn-mesh'),
  overlay: byId<HTMLButtonElement>('btn-overlay'),
  prev: byId<HTMLButtonElement>('btn-prev'),
  next: byId<HTMLButtonElement>('btn-next'),
};
const polarityInputs = document.querySelectorAll<HTMLInputElement>('input[name="polarity"]');
const smoothingToggle = byId<HTMLInputElement>('smoothing-toggle');

const view = new SessionView();
const smoother = new PointerSmoother();
let socket: SessionSocket | null = null;

// Local slice cursor during wheel bursts; the debounced navigate carries
// the final value only.
let cursorSlice = 0;

const scratch = document.createElement('canvas');
const scratchCtx = scratch.getContext('2d')!;

function currentPolarity(): Polarity {
  for (const input of polarityInputs) {
    if (input.checked) return input.value as Polarity;
  }
  return 'positive';
}

function transformForSlice(image: PixelPayload) {
  return fitTransform(image.width, image.height, canvas.width, canvas.height);
}

function drawImagePayload(image: PixelPayload, mask: MaskPayload | null) {
  const gray = decodePixels(image);
  const bits = mask ? decodeMask(mask) : null;
  const rgba = compositeSlice(gray, image.width, image.height, bits, view.overlayVisible);
  scratch.width = image.width;
  scratch.height = image.height;
  scratchCtx.putImageData(new ImageData(rgba, image.width, image.height), 0, 0);
  const t = transformForSlice(image);
  ctx.fillStyle = '#000';
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(
    scratch,
    t.offsetX,
    t.offsetY,
    image.width * t.scale,
    image.height * t.scale,
  );
  return t;
}

function render() {
  let image = view.slice?.image ?? null;
  let mask = view.slice?.mask ?? null;
  if (view.state === PROPAGATING && view.streamMask) {
    mask = view.streamMask;
    image = view.sliceImages.get(view.activeSlice) ?? null;
    if (!image) {
      // No cached grayscale for this slice yet: show the mask alone.
      const blank = new Uint8ClampedArray(mask.width * mask.height);
      const bits = decodeMask(mask);
      const rgba = compositeSlice(blank, mask.width, mask.height, bits, view.overlayVisible);
      scratch.width = mask.width;
      scratch.height = mask.height;
      scratchCtx.putImageData(new ImageData(rgba, mask.width, mask.height), 0, 0);
      const t = fitTransform(mask.width, mask.height, canvas.width, canvas.height);
      ctx.fillStyle = '#000';
      ctx.fillRect(0, 0, canvas.width, canvas.height);
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(scratch, t.offsetX, t.offsetY, mask.width * t.scale, mask.height * t.scale);
      drawChrome(null);
      return;
    }
  }
  if (!image) {
    ctx.fillStyle = '#000';
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    drawChrome(null);
    return;
  }
  const t = drawImagePayload(image, mask);
  drawChrome(t);
}

function drawChrome(t: ReturnType<typeof fitTransform> | null) {
  if (t) {
    for (const prompt of view.promptEcho) {
      const { cx, cy } = pixelToCanvas(t, prompt.x, prompt.y);
      ctx.beginPath();
      ctx.arc(cx, cy, 5, 0, 2 * Math.PI);
      ctx.strokeStyle = prompt.polarity === 'positive' ? POSITIVE_COLOR : NEGATIVE_COLOR;
      ctx.lineWidth = 2;
      ctx.stroke();
    }
  }
  sliceLabel.textContent = `slice ${view.activeSlice + 1} / ${view.extent || '?'}`;
  stateLabel.textContent = view.state;
  stateLabel.dataset.state = view.state;
}

function refreshControls() {
  const enabled = (kind: string) => socket !== null && view.allows(kind);
  buttons.submit.disabled = !enabled('submit_command');
  buttons.confirm.disabled = !enabled('confirm_command');
  buttons.refine.disabled = !enabled('refine') || view.pendingPrompts === 0;
  buttons.clear.disabled = !enabled('clear_prompts');
  buttons.propagate.disabled = !enabled('propagate');
  buttons.reseed.disabled = !enabled('reseed');
  buttons.complete.disabled = !enabled('complete');
  buttons.mesh.disabled = !enabled('request_mesh');
  // Scrolling mirrors the state machine: disabled outside Explore/Review.
  const nav = socket !== null && view.navigationEnabled;
  buttons.prev.disabled = !nav;
  buttons.next.disabled = !nav;
  buttons.overlay.textContent = view.overlayVisible ? 'Hide Mask' : 'Show Mask';
  buttons.complete.textContent = view.challenge ? 'Confirm Finish' : 'Finish';
}

function refreshPanels() {
  if (view.guidance) {
    guidanceText.textContent = view.guidance.text;
    guidanceMeta.textContent = `${view.guidance.mode} guidance (${view.guidance.provider})`;
  } else if (view.guidanceDisabled) {
    guidanceText.textContent = 'Guidance is disabled: no reference index configured.';
    guidanceMeta.textContent = '';
  }
  const messages: string[] = [];
  if (view.warning) messages.push(view.warning);
  if (view.challenge) messages.push(view.challenge);
  if (view.resyncNeeded) messages.push('propagation stream gap detected; view resynced');
  if (view.lastError) messages.push(`${view.lastError.code}: ${view.lastError.message}`);
  warningBox.textContent = messages.join('\n');
  warningBox.hidden = messages.length === 0;

  if (view.references) {
    refPositive.src = `/refs/${view.references.positive.record_id}/thumbnail`;
    refNegative.src = `/refs/${view.references.negative.record_id}/thumbnail`;
    refPositiveCaption.textContent =
      `${view.references.positive.record_id} (slice ${view.references.positive.slice_index + 1}, with finding)`;
    refNegativeCaption.textContent =
      `${view.references.negative.record_id} (slice ${view.references.negative.slice_index + 1}, without)`;
  }

  if (view.report) {
    const halts = Object.entries(view.report.haltReasons)
      .map(([direction, reason]) => `${direction}: ${reason}`)
      .join(', ');
    const trace = view.report.iouTrace
      .map((r) => `${r.sliceIndex + 1}${r.accepted ? '' : '!'}=${r.iou === null ? 'seed' : r.iou.toFixed(3)}`)
      .join(' ');
    reportBox.textContent =
      `${view.report.acceptedSlices.length + 1} slices, ${view.report.totalVoxels} voxels. ` +
      `Halted ${halts}. IoU trace: ${trace}` +
      (view.report.error ? ` (backend error: ${view.report.error})` : '');
    reportBox.hidden = false;
  }

  statusLine.textContent = view.sessionId
    ? `${view.sessionId} | target: ${view.target ?? 'none'} | pending prompts: ${view.pendingPrompts} | applied points: ${view.confirmedPoints}`
    : 'not connected';
}

function refreshAll() {
  render();
  refreshControls();
  refreshPanels();
}

async function send(kind: string, payload: Record<string, unknown> = {}): Promise<Frame | null> {
  if (!socket) return null;
  const reply = await socket.request(kind, payload);
  view.applyFrame(reply);
  refreshAll();
  return reply;
}

// -- navigation ------------------------------------------------------------

const navigateDebounced = debounce((sliceIndex: number) => {
  void send('navigate', { slice_index: sliceIndex });
}, NAVIGATE_DEBOUNCE_MS);

function step(delta: number) {
  if (!view.navigationEnabled || view.extent === 0) return;
  cursorSlice = Math.min(view.extent - 1, Math.max(0, cursorSlice + delta));
  sliceLabel.textContent = `slice ${cursorSlice + 1} / ${view.extent}`;
  navigateDebounced.call(cursorSlice);
}

canvas.addEventListener('wheel', (ev) => {
  ev.preventDefault();
  // One wheel notch is one slice either way.
  step(ev.deltaY > 0 ? 1 : -1);
}, { passive: false });

document.addEventListener('keydown', (ev) => {
  if (ev.target instanceof HTMLInputElement) return;
  if (ev.key === 'ArrowUp' || ev.key === 'ArrowLeft') step(-1);
  if (ev.key === 'ArrowDown' || ev.key === 'ArrowRight') step(1);
});

buttons.prev.addEventListener('click', () => step(-1));
buttons.next.addEventListener('click', () => step(1));

// -- prompt placement ------------------------------------------------------

canvas.addEventListener('mousemove', (ev) => {
  const rect = canvas.getBoundingClientRect();
  smoother.feed(ev.clientX - rect.left, ev.clientY - rect.top);
});

canvas.addEventListener('click', (ev) => {
  const image = view.slice?.image;
  if (!image) return;
  const rect = canvas.getBoundingClientRect();
  const sample = smoother.feed(ev.clientX - rect.left, ev.clientY - rect.top);
  const message = promptForClick(view, transformForSlice(image), sample.x, sample.y, currentPolarity());
  if (!message) {
    canvas.classList.remove('nudge');
    void canvas.offsetWidth; // restart the animation
    canvas.classList.add('nudge');
    return;
  }
  void send('add_prompt', message);
});

smoothingToggle.addEventListener('change', () => {
  smoother.enabled = smoothingToggle.checked;
  smoother.reset();
});

// -- command and session buttons -------------------------------------------

buttons.connect.addEventListener('click', () => {
  void connect();
});

buttons.submit.addEventListener('click', () => {
  const text = commandInput.value.trim();
  if (text) void send('submit_command', { text });
});

commandInput.addEventListener('keydown', (ev) => {
  if (ev.key === 'Enter') buttons.submit.click();
});

buttons.confirm.addEventListener('click', () => void send('confirm_command'));
buttons.refine.addEventListener('click', () => void send('refine'));
buttons.clear.addEventListener('click', () => void send('clear_prompts'));
buttons.reseed.addEventListener('click', () => void send('reseed'));

buttons.overlay.addEventListener('click', () => {
  view.overlayVisible = !view.overlayVisible;
  refreshAll();
});

buttons.propagate.addEventListener('click', () => {
  if (!socket) return;
  view.beginPropagation();
  refreshAll();
  void (async () => {
    const done = await send('propagate');
    if (done && done.kind === 'error') {
      // A rejected propagate leaves the server in Seeded; follow it.
      view.state = SEEDED;
      refreshAll();
      return;
    }
    // Ordinal gap during the stream: pull fresh state for the final slice.
    if (done && view.resyncNeeded && view.navigationEnabled) {
      await send('navigate', { slice_index: view.activeSlice });
    }
    cursorSlice = view.activeSlice;
  })();
});

buttons.complete.addEventListener('click', () => {
  // Two-phase finish: the first click fetches the challenge, the second
  // confirms it.
  void send('complete', { confirm: view.challenge !== null });
});

buttons.mesh.addEventListener('click', () => {
  void (async () => {
    const reply = await send('request_mesh');
    if (reply && reply.kind === 'request_mesh') {
      await showMeshPane();
    }
  })();
});

// -- mesh pane -------------------------------------------------------------

interface LoadedMesh {
  mesh: ObjMesh;
  volume: number;
}

const meshState: {
  lesion: LoadedMesh | null;
  context: LoadedMesh | null;
  camera: Camera;
  center: number[];
} = {
  lesion: null,
  context: null,
  camera: { yaw: 0.6, pitch: -0.4, zoom: 1 },
  center: [0, 0, 0],
};

async function fetchMesh(name: string): Promise<LoadedMesh | null> {
  if (!view.sessionId) return null;
  const reply = await fetch(`/files/${view.sessionId}/${name}`);
  if (!reply.ok) return null;
  const mesh = parseObj(await reply.text());
  return { mesh, volume: meshVolume(mesh) };
}

async function showMeshPane() {
  if (!view.meshInfo) return;
  meshState.lesion = view.meshInfo.files.lesion ? await fetchMesh(view.meshInfo.files.lesion) : null;
  meshState.context = view.meshInfo.files.context ? await fetchMesh(view.meshInfo.files.context) : null;
  if (meshState.lesion) {
    const reference = meshState.context ?? meshState.lesion;
    meshState.center = meshCenter(reference.mesh);
    meshState.camera.zoom = fitZoom(reference.mesh, meshCanvas.width, meshCanvas.height);
  }
  meshPane.hidden = false;
  renderMesh();
  renderMeshInfo();
}

function renderMeshInfo() {
  if (!view.meshInfo) return;
  const serverVolume = view.meshInfo.volumes.lesion_mm3;
  const parts = [
    `lesion volume: ${serverVolume.toFixed(1)} mm^3 (server)`,
  ];
  if (meshState.lesion) {
    parts.push(`${meshState.lesion.volume.toFixed(1)} mm^3 (mesh integral)`);
  }
  if (view.meshInfo.volumes.context_mm3 !== undefined) {
    parts.push(`context volume: ${view.meshInfo.volumes.context_mm3.toFixed(1)} mm^3`);
  }
  parts.push(`context threshold: ${view.meshInfo.contextThreshold}`);
  parts.push(view.meshInfo.lesionWatertight ? 'watertight' : 'NOT watertight');
  meshInfo.textContent = parts.join('\n');
}

function renderMesh() {
  meshCtx.fillStyle = '#10131a';
  meshCtx.fillRect(0, 0, meshCanvas.width, meshCanvas.height);
  const { camera, center } = meshState;
  if (meshState.context) {
    // Surroundings first, semi-transparent, so the lesion stays legible.
    meshCtx.globalAlpha = 0.25;
    for (const tri of projectMesh(meshState.context.mesh, camera, meshCanvas.width, meshCanvas.height, center)) {
      drawTriangle(tri.points, `rgb(${Math.round(150 * tri.shade)}, ${Math.round(160 * tri.shade)}, ${Math.round(175 * tri.shade)})`);
    }
    meshCtx.globalAlpha = 1;
  }
  if (meshState.lesion) {
    for (const tri of projectMesh(meshState.lesion.mesh, camera, meshCanvas.width, meshCanvas.height, center)) {
      drawTriangle(tri.points, `rgb(${Math.round(229 * tri.shade)}, ${Math.round(56 * tri.shade)}, ${Math.round(59 * tri.shade)})`);
    }
  }
  drawScaleBar();
}

function drawTriangle(points: [number, number][], fill: string) {
  meshCtx.beginPath();
  meshCtx.moveTo(points[0][0], points[0][1]);
  meshCtx.lineTo(points[1][0], points[1][1]);
  meshCtx.lineTo(points[2][0], points[2][1]);
  meshCtx.closePath();
  meshCtx.fillStyle = fill;
  meshCtx.fill();
}

function drawScaleBar() {
  const bar = scaleBarFor(meshState.camera.zoom, meshCanvas.width / 3);
  if (bar.mm === 0) return;
  const x0 = 16;
  const y0 = meshCanvas.height - 20;
  meshCtx.strokeStyle = '#e8e8e8';
  meshCtx.lineWidth = 2;
  meshCtx.beginPath();
  meshCtx.moveTo(x0, y0);
  meshCtx.lineTo(x0 + bar.px, y0);
  meshCtx.moveTo(x0, y0 - 5);
  meshCtx.lineTo(x0, y0 + 5);
  meshCtx.moveTo(x0 + bar.px, y0 - 5);
  meshCtx.lineTo(x0 + bar.px, y0 + 5);
  meshCtx.stroke();
  meshCtx.fillStyle = '#e8e8e8';
  meshCtx.font = '12px sans-serif';
  meshCtx.fillText(bar.mm >= 1 ? `${bar.mm} mm` : `${bar.mm * 1000} um`, x0 + bar.px + 8, y0 + 4);
}

let orbiting = false;
let lastOrbit = { x: 0, y: 0 };
meshCanvas.addEventListener('mousedown', (ev) => {
  orbiting = true;
  lastOrbit = { x: ev.clientX, y: ev.clientY };
});
document.addEventListener('mouseup', () => {
  orbiting = false;
});
document.addEventListener('mousemove', (ev) => {
  if (!orbiting) return;
  meshState.camera.yaw += (ev.clientX - lastOrbit.x) * 0.01;
  meshState.camera.pitch += (ev.clientY - lastOrbit.y) * 0.01;
  lastOrbit = { x: ev.clientX, y: ev.clientY };
  renderMesh();
});
meshCanvas.addEventListener('wheel', (ev) => {
  ev.preventDefault();
  meshState.camera.zoom *= ev.deltaY > 0 ? 0.9 : 1.1;
  renderMesh();
}, { passive: false });

// -- connection ------------------------------------------------------------

async function connect() {
  const volumeRef = volumeInput.value.trim();
  if (!volumeRef) {
    warningBox.textContent = 'enter a volume reference first';
    warningBox.hidden = false;
    return;
  }
  socket?.close();
  const proto = location.protocol === 'https:' ? 'wss' : 'ws';
  const ws = new WebSocket(`${proto}://${location.host}/ws`);
  await new Promise<void>((resolve, reject) => {
    ws.onopen = () => resolve();
    ws.onerror = () => reject(new Error('connection failed'));
  });
  const session = new SessionSocket(ws);
  ws.onmessage = (ev) => session.handleMessage(String(ev.data));
  socket = session;
  session.onPush = (frame) => {
    view.applyFrame(frame);
    refreshAll();
  };
  const reply = await send('open_session', { volume_ref: volumeRef });
  if (reply && reply.kind === 'open_session') {
    cursorSlice = view.activeSlice;
  }
}

const params = new URLSearchParams(location.search);
const presetVolume = params.get('volume');
if (presetVolume) {
  volumeInput.value = presetVolume;
}
refreshAll();
