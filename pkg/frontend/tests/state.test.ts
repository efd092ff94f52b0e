import { describe, expect, it } from 'vitest';

import type { ClickRequest, ClickResponse } from '../src/api.js';
import { ClickQueue, SessionState } from '../src/state.js';

function makeState(): SessionState {
  return new SessionState('abc', 20, 64, 64, 2);
}

describe('SessionState', () => {
  it('enforces the frame index range', () => {
    const state = makeState();
    state.setFrame(19);
    expect(state.frameIndex).toBe(19);
    expect(() => state.setFrame(20)).toThrow(/out of range/);
    expect(() => state.setFrame(-1)).toThrow(/out of range/);
  });

  it('clamps stepFrame at both ends', () => {
    const state = makeState();
    state.stepFrame(-5);
    expect(state.frameIndex).toBe(0);
    state.setFrame(19);
    state.stepFrame(3);
    expect(state.frameIndex).toBe(19);
  });

  it('enforces label <= num_objects', () => {
    const state = makeState();
    state.setLabel(0);
    state.setLabel(2);
    expect(() => state.setLabel(3)).toThrow(/out of range/);
  });

  it('caches masks per frame and clears them on reset', () => {
    const state = makeState();
    const mask = new Int32Array(64 * 64).fill(1);
    state.storeMasks([mask], true);
    expect(state.maskFor(0)).toBe(mask);
    expect(state.maskFor(1)).toBeNull();
    expect(state.masksReady).toBe(true);
    state.clear();
    expect(state.maskFor(0)).toBeNull();
    expect(state.masksReady).toBe(false);
  });

  it('keeps click history per frame with marker status', () => {
    const state = makeState();
    const marker = state.addMarker({ frame: 3, row: 1, col: 2, label: 1 });
    state.addMarker({ frame: 4, row: 5, col: 6, label: 0 });
    expect(state.markers(3)).toHaveLength(1);
    expect(state.markers(4)).toHaveLength(1);
    expect(state.markers(5)).toHaveLength(0);
    expect(marker.status).toBe('pending');
    marker.status = 'ok';
    expect(state.markers(3)[0].status).toBe('ok');
  });
});

describe('ClickQueue', () => {
  const response: ClickResponse = { changed_cells: 1, click_count: 1, masks_ready: false };

  it('holds one request in flight and preserves order', async () => {
    const started: number[] = [];
    let active = 0;
    let maxActive = 0;
    const queue = new ClickQueue(async (click: ClickRequest) => {
      started.push(click.row);
      active++;
      maxActive = Math.max(maxActive, active);
      await new Promise((resolve) => setTimeout(resolve, 5));
      active--;
      return response;
    });
    const results = await Promise.all([
      queue.enqueue({ frame: 0, row: 1, col: 0, label: 1 }),
      queue.enqueue({ frame: 0, row: 2, col: 0, label: 1 }),
      queue.enqueue({ frame: 0, row: 3, col: 0, label: 1 }),
    ]);
    expect(maxActive).toBe(1);
    expect(started).toEqual([1, 2, 3]);
    expect(results).toHaveLength(3);
    expect(queue.pending).toBe(0);
  });

  it('keeps serving after a rejected request', async () => {
    let calls = 0;
    const queue = new ClickQueue(async () => {
      calls++;
      if (calls === 1) {
        throw new Error('network down');
      }
      return response;
    });
    await expect(queue.enqueue({ frame: 0, row: 0, col: 0, label: 1 })).rejects.toThrow(
      /network down/,
    );
    await expect(queue.enqueue({ frame: 0, row: 0, col: 1, label: 1 })).resolves.toEqual(response);
  });
});
