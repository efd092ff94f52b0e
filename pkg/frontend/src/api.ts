// Typed client for the session service (protocol.md at the repository root).
// This module is the only place endpoint paths appear; everything else in the
// UI goes through it.

import type { RleRuns } from './rle.js';

export interface VideoInfo {
  video_id: string;
  frame_count: number;
  height: number;
  width: number;
  num_objects: number;
}

export interface SessionInfo extends VideoInfo {
  session_id: string;
}

export interface ClickRequest {
  frame: number;
  row: number;
  col: number;
  label: number;
}

export interface ClickResponse {
  changed_cells: number;
  click_count: number;
  masks_ready: boolean;
}

export interface MasksResponse {
  ready: boolean;
  status: string;
  height: number;
  width: number;
  masks: RleRuns[];
}

export interface MasksUpdate extends MasksResponse {
  type: 'masks';
  click_count: number;
}

export type MetricsResponse =
  | {
      available: true;
      mean_j: number;
      mean_f: number;
      per_frame_j: number[];
      per_frame_f: number[];
    }
  | { available: false; reason: string };

export interface SessionStats {
  forward_pass_count: number;
  pool_size: number;
  click_count: number;
}

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, detail: string) {
    super(detail);
    this.status = status;
  }
}

async function parseJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body.detail) {
        detail = body.detail;
      }
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  readonly base: string;

  constructor(base: string) {
    this.base = base.replace(/\/+$/, '');
  }

  async listVideos(): Promise<VideoInfo[]> {
    const body = await parseJson<{ videos: VideoInfo[] }>(
      await fetch(`${this.base}/api/videos`),
    );
    return body.videos;
  }

  async createSession(videoId: string): Promise<SessionInfo> {
    return parseJson(
      await fetch(`${this.base}/api/sessions`, {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ video_id: videoId }),
      }),
    );
  }

  frameUrl(sessionId: string, index: number): string {
    return `${this.base}/api/sessions/${sessionId}/frames/${index}`;
  }

  async postClick(sessionId: string, click: ClickRequest): Promise<ClickResponse> {
    return parseJson(
      await fetch(`${this.base}/api/sessions/${sessionId}/clicks`, {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify(click),
      }),
    );
  }

  async getMasks(sessionId: string): Promise<MasksResponse> {
    return parseJson(await fetch(`${this.base}/api/sessions/${sessionId}/masks`));
  }

  async getMetrics(sessionId: string): Promise<MetricsResponse> {
    return parseJson(await fetch(`${this.base}/api/sessions/${sessionId}/metrics`));
  }

  async resetSession(sessionId: string): Promise<void> {
    await parseJson(
      await fetch(`${this.base}/api/sessions/${sessionId}/reset`, { method: 'POST' }),
    );
  }

  async getStats(sessionId: string): Promise<SessionStats> {
    return parseJson(await fetch(`${this.base}/api/sessions/${sessionId}/stats`));
  }

  /**
   * Open the push channel. Returns the socket; the caller owns closing it.
   * On any failure the caller falls back to polling getMasks, so errors here
   * are reported through onClose rather than thrown.
   */
  connectUpdates(
    sessionId: string,
    onUpdate: (update: MasksUpdate) => void,
    onClose: () => void,
  ): WebSocket {
    const wsBase = this.base.replace(/^http/, 'ws');
    const socket = new WebSocket(`${wsBase}/api/sessions/${sessionId}/updates`);
    socket.onmessage = (event) => {
      try {
        const update = JSON.parse(event.data as string) as MasksUpdate;
        if (update.type === 'masks') {
          onUpdate(update);
        }
      } catch {
        // malformed frame; polling still covers the state
      }
    };
    socket.onclose = onClose;
    socket.onerror = () => socket.close();
    return socket;
  }
}
