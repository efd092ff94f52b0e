// UI session state and the local click queue.
//
// The service is the single source of truth for masks; this module only
// caches what it last sent and tracks presentation state (current frame,
// brush label, opacity, click markers). At most one click request is in
// flight per session; later clicks queue locally in order.

import type { ClickRequest, ClickResponse } from './api.js';

export type MarkerStatus = 'pending' | 'ok' | 'error';

export interface ClickMarker extends ClickRequest {
  status: MarkerStatus;
}

export class SessionState {
  readonly sessionId: string;
  readonly frameCount: number;
  readonly height: number;
  readonly width: number;
  readonly numObjects: number;

  frameIndex = 0;
  selectedLabel = 1;
  opacity = 0.45;
  masksReady = false;
  clickCount = 0;

  private readonly maskCache = new Map<number, Int32Array>();
  private readonly history: ClickMarker[] = [];

  constructor(sessionId: string, frameCount: number, height: number, width: number, numObjects: number) {
    if (frameCount < 1 || numObjects < 1) {
      throw new Error('session needs at least one frame and one object');
    }
    this.sessionId = sessionId;
    this.frameCount = frameCount;
    this.height = height;
    this.width = width;
    this.numObjects = numObjects;
  }

  setFrame(index: number): void {
    if (!Number.isInteger(index) || index < 0 || index >= this.frameCount) {
      throw new Error(`frame index ${index} out of range [0, ${this.frameCount})`);
    }
    this.frameIndex = index;
  }

  stepFrame(delta: number): void {
    const next = Math.min(Math.max(this.frameIndex + delta, 0), this.frameCount - 1);
    this.frameIndex = next;
  }

  setLabel(label: number): void {
    if (!Number.isInteger(label) || label < 0 || label > this.numObjects) {
      throw new Error(`label ${label} out of range [0, ${this.numObjects}]`);
    }
    this.selectedLabel = label;
  }

  setOpacity(opacity: number): void {
    if (!(opacity >= 0 && opacity <= 1)) {
      throw new Error(`opacity must be in [0, 1], got ${opacity}`);
    }
    this.opacity = opacity;
  }

  storeMasks(masks: Int32Array[], ready: boolean): void {
    this.maskCache.clear();
    masks.forEach((mask, index) => this.maskCache.set(index, mask));
    this.masksReady = ready;
  }

  maskFor(frame: number): Int32Array | null {
    return this.maskCache.get(frame) ?? null;
  }

  addMarker(click: ClickRequest): ClickMarker {
    const marker: ClickMarker = { ...click, status: 'pending' };
    this.history.push(marker);
    return marker;
  }

  markers(frame: number): ClickMarker[] {
    return this.history.filter((marker) => marker.frame === frame);
  }

  allMarkers(): readonly ClickMarker[] {
    return this.history;
  }

  clear(): void {
    this.maskCache.clear();
    this.history.length = 0;
    this.masksReady = false;
    this.clickCount = 0;
  }
}

/**
 * Serializes click posts: one request in flight, the rest wait their turn.
 * Each enqueued click resolves with the service response or rejects with the
 * transport error, in submission order either way.
 */
export class ClickQueue {
  private readonly send: (click: ClickRequest) => Promise<ClickResponse>;
  private chain: Promise<void> = Promise.resolve();
  private pendingCount = 0;

  constructor(send: (click: ClickRequest) => Promise<ClickResponse>) {
    this.send = send;
  }

  get pending(): number {
    return this.pendingCount;
  }

  enqueue(click: ClickRequest): Promise<ClickResponse> {
    this.pendingCount++;
    const result = this.chain.then(() => this.send(click));
    this.chain = result.then(
      () => {
        this.pendingCount--;
      },
      () => {
        this.pendingCount--;
      },
    );
    return result;
  }
}
