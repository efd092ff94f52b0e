/**
 * Interactive segmentation client.
 *
 * Pick a video, click foreground/background/object-k on any frame, watch the
 * masks come back live. Mask state always originates from the service; this
 * file only renders what the last update said and keeps the controls honest.
 *
 * Keyboard: 0..9 select the brush label, arrow keys step frames.
 */

import { ApiClient, ApiError } from './api.js';
import type { ClickRequest, MasksResponse, SessionInfo } from './api.js';
import { canvasToPixel, pixelToCanvas } from './coords.js';
import { compositeOverlay, labelColor } from './overlay.js';
import { decodeRle } from './rle.js';
import { ClickQueue, SessionState } from './state.js';
import type { ClickMarker } from './state.js';

const MAX_CANVAS_EDGE = 512;
const POLL_INTERVAL_MS = 1500;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

const videoSelect = el<HTMLSelectElement>('video-select');
const openButton = el<HTMLButtonElement>('open-session');
const resetButton = el<HTMLButtonElement>('reset-session');
const retryButton = el<HTMLButtonElement>('retry-clicks');
const labelSelect = el<HTMLSelectElement>('label-select');
const frameSlider = el<HTMLInputElement>('frame-slider');
const frameReadout = el<HTMLSpanElement>('frame-readout');
const opacitySlider = el<HTMLInputElement>('opacity-slider');
const banner = el<HTMLDivElement>('banner');
const metricsReadout = el<HTMLSpanElement>('metrics-readout');
const statsReadout = el<HTMLSpanElement>('stats-readout');
const canvas = el<HTMLCanvasElement>('view');
const ctx = canvas.getContext('2d')!;

const api = new ApiClient(
  new URLSearchParams(window.location.search).get('api') ?? window.location.origin,
);

let state: SessionState | null = null;
let queue: ClickQueue | null = null;
let socket: WebSocket | null = null;
let pollTimer: number | null = null;
let frameImages: HTMLImageElement[] = [];
let scale = 8;

function showBanner(message: string, isError: boolean): void {
  banner.textContent = message;
  banner.className = isError ? 'banner error' : 'banner';
  banner.hidden = message === '';
}

function applyMasks(response: MasksResponse): void {
  if (!state) {
    return;
  }
  try {
    const decoded = response.masks.map((runs) =>
      decodeRle(runs, response.height, response.width),
    );
    state.storeMasks(decoded, response.ready);
    showBanner(response.ready ? '' : 'annotate at least two labels to get masks', false);
  } catch (error) {
    // a decode failure means the wire data is unusable; say so, keep the
    // previous masks on screen
    showBanner(`mask decode failed: ${(error as Error).message}`, true);
    return;
  }
  render();
  void refreshMetrics();
}

async function pollMasks(): Promise<void> {
  if (!state) {
    return;
  }
  try {
    applyMasks(await api.getMasks(state.sessionId));
  } catch (error) {
    showBanner(`mask fetch failed: ${(error as Error).message}`, true);
  }
}

function startPolling(): void {
  if (pollTimer === null) {
    pollTimer = window.setInterval(() => void pollMasks(), POLL_INTERVAL_MS);
  }
}

function connectUpdates(sessionId: string): void {
  socket = api.connectUpdates(
    sessionId,
    (update) => applyMasks(update),
    () => {
      socket = null;
      startPolling();
    },
  );
}

async function refreshMetrics(): Promise<void> {
  if (!state) {
    return;
  }
  const metrics = await api.getMetrics(state.sessionId).catch(() => null);
  if (metrics && metrics.available) {
    metricsReadout.textContent = `J ${metrics.mean_j.toFixed(3)}  F ${metrics.mean_f.toFixed(3)}`;
  } else {
    metricsReadout.textContent = '';
  }
  const stats = await api.getStats(state.sessionId).catch(() => null);
  if (stats) {
    statsReadout.textContent = `clicks ${stats.click_count}, pool ${stats.pool_size}, passes ${stats.forward_pass_count}`;
  }
}

function drawMarker(marker: ClickMarker): void {
  if (!state) {
    return;
  }
  const point = pixelToCanvas(
    { row: marker.row, col: marker.col },
    canvas.width,
    canvas.height,
    state.width,
    state.height,
  );
  ctx.beginPath();
  ctx.arc(point.x, point.y, 6, 0, 2 * Math.PI);
  ctx.lineWidth = 2;
  ctx.strokeStyle = marker.status === 'error' ? '#ef4444' : '#ffffff';
  ctx.stroke();
  if (marker.status !== 'pending') {
    const [r, g, b] = labelColor(marker.label);
    ctx.fillStyle = marker.label === 0 ? '#1f2937' : `rgb(${r}, ${g}, ${b})`;
    ctx.beginPath();
    ctx.arc(point.x, point.y, 3, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function render(): void {
  if (!state) {
    return;
  }
  const image = frameImages[state.frameIndex];
  frameReadout.textContent = `${state.frameIndex + 1} / ${state.frameCount}`;
  if (!image || !image.complete) {
    return;
  }
  const buffer = document.createElement('canvas');
  buffer.width = state.width;
  buffer.height = state.height;
  const bufferCtx = buffer.getContext('2d')!;
  bufferCtx.drawImage(image, 0, 0);
  const mask = state.maskFor(state.frameIndex);
  if (mask) {
    const frameData = bufferCtx.getImageData(0, 0, state.width, state.height);
    const blended = compositeOverlay(
      frameData.data,
      mask,
      state.width,
      state.height,
      state.opacity,
    );
    bufferCtx.putImageData(new ImageData(blended, state.width, state.height), 0, 0);
  }
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(buffer, 0, 0, canvas.width, canvas.height);
  for (const marker of state.markers(state.frameIndex)) {
    drawMarker(marker);
  }
}

function sendClick(click: ClickRequest, marker: ClickMarker): void {
  if (!state || !queue) {
    return;
  }
  queue
    .enqueue(click)
    .then((response) => {
      marker.status = 'ok';
      if (state) {
        state.clickCount = response.click_count;
      }
      retryButton.hidden = true;
      // push channel normally delivers the new masks; poll once when it is down
      if (!socket) {
        void pollMasks();
      }
      render();
    })
    .catch((error: unknown) => {
      marker.status = 'error';
      retryButton.hidden = false;
      const message =
        error instanceof ApiError ? `click rejected: ${error.message}` : 'click failed to send';
      showBanner(`${message} (retry available)`, true);
      render();
    });
}

function onCanvasClick(event: MouseEvent): void {
  if (!state) {
    return;
  }
  const rect = canvas.getBoundingClientRect();
  const pixel = canvasToPixel(
    {
      x: ((event.clientX - rect.left) * canvas.width) / rect.width,
      y: ((event.clientY - rect.top) * canvas.height) / rect.height,
    },
    canvas.width,
    canvas.height,
    state.width,
    state.height,
  );
  const click: ClickRequest = {
    frame: state.frameIndex,
    row: pixel.row,
    col: pixel.col,
    label: state.selectedLabel,
  };
  const marker = state.addMarker(click);
  render();
  sendClick(click, marker);
}

function retryFailedClicks(): void {
  if (!state) {
    return;
  }
  retryButton.hidden = true;
  for (const marker of state.allMarkers()) {
    if (marker.status === 'error') {
      marker.status = 'pending';
      sendClick(
        { frame: marker.frame, row: marker.row, col: marker.col, label: marker.label },
        marker,
      );
    }
  }
  render();
}

function populateLabels(numObjects: number): void {
  labelSelect.innerHTML = '';
  const background = document.createElement('option');
  background.value = '0';
  background.textContent = '0: background';
  labelSelect.appendChild(background);
  for (let label = 1; label <= numObjects; label++) {
    const option = document.createElement('option');
    option.value = String(label);
    option.textContent = `${label}: object ${label}`;
    labelSelect.appendChild(option);
  }
  labelSelect.value = '1';
}

function loadFrames(session: SessionInfo): void {
  frameImages = [];
  for (let index = 0; index < session.frame_count; index++) {
    const image = new Image();
    image.src = api.frameUrl(session.session_id, index);
    image.onload = () => {
      if (state && index === state.frameIndex) {
        render();
      }
    };
    frameImages.push(image);
  }
}

async function openSession(): Promise<void> {
  const videoId = videoSelect.value;
  if (!videoId) {
    return;
  }
  try {
    const session = await api.createSession(videoId);
    state = new SessionState(
      session.session_id,
      session.frame_count,
      session.height,
      session.width,
      session.num_objects,
    );
    queue = new ClickQueue((click) => api.postClick(state!.sessionId, click));
    scale = Math.max(1, Math.floor(MAX_CANVAS_EDGE / Math.max(session.width, session.height)));
    canvas.width = session.width * scale;
    canvas.height = session.height * scale;
    frameSlider.max = String(session.frame_count - 1);
    frameSlider.value = '0';
    populateLabels(session.num_objects);
    loadFrames(session);
    if (socket) {
      socket.close();
      socket = null;
    }
    connectUpdates(session.session_id);
    showBanner('annotate at least two labels to get masks', false);
    render();
    void refreshMetrics();
  } catch (error) {
    showBanner(`session failed: ${(error as Error).message}`, true);
  }
}

async function resetSession(): Promise<void> {
  if (!state) {
    return;
  }
  try {
    await api.resetSession(state.sessionId);
    state.clear();
    retryButton.hidden = true;
    showBanner('annotate at least two labels to get masks', false);
    render();
    void refreshMetrics();
  } catch (error) {
    showBanner(`reset failed: ${(error as Error).message}`, true);
  }
}

function onKeyDown(event: KeyboardEvent): void {
  if (!state || event.target instanceof HTMLInputElement) {
    return;
  }
  if (event.key >= '0' && event.key <= '9') {
    const label = Number(event.key);
    if (label <= state.numObjects) {
      state.setLabel(label);
      labelSelect.value = String(label);
    }
  } else if (event.key === 'ArrowRight') {
    state.stepFrame(1);
    frameSlider.value = String(state.frameIndex);
    render();
  } else if (event.key === 'ArrowLeft') {
    state.stepFrame(-1);
    frameSlider.value = String(state.frameIndex);
    render();
  }
}

async function init(): Promise<void> {
  try {
    const videos = await api.listVideos();
    videoSelect.innerHTML = '';
    for (const video of videos) {
      const option = document.createElement('option');
      option.value = video.video_id;
      option.textContent = `${video.video_id} (${video.frame_count}f ${video.width}x${video.height}, K=${video.num_objects})`;
      videoSelect.appendChild(option);
    }
    showBanner(videos.length ? '' : 'no videos in the service data directory', !videos.length);
  } catch (error) {
    showBanner(`service unreachable: ${(error as Error).message}`, true);
  }
}

openButton.addEventListener('click', () => void openSession());
resetButton.addEventListener('click', () => void resetSession());
retryButton.addEventListener('click', retryFailedClicks);
canvas.addEventListener('click', onCanvasClick);
labelSelect.addEventListener('change', () => state?.setLabel(Number(labelSelect.value)));
frameSlider.addEventListener('input', () => {
  state?.setFrame(Number(frameSlider.value));
  render();
});
opacitySlider.addEventListener('input', () => {
  state?.setOpacity(Number(opacitySlider.value) / 100);
  render();
});
window.addEventListener('keydown', onKeyDown);

void init();
