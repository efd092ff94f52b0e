import { readFileSync } from 'node:fs';
import { fileURLToPath } from 'node:url';
import { describe, expect, it } from 'vitest';

import { decodeRle, encodeRle, type RleRuns } from '../src/rle.js';

// same golden file the Python suite uses; the wire format moves only if both
// suites move together
const CASES_PATH = fileURLToPath(
  new URL('../../tests/fixtures/protocol/rle_cases.json', import.meta.url),
);

interface GoldenCase {
  name: string;
  height: number;
  width: number;
  mask: number[][];
  runs: RleRuns;
}

const goldenCases = JSON.parse(readFileSync(CASES_PATH, 'utf-8')).cases as GoldenCase[];

// deterministic PRNG for the property loops
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

describe('golden cases', () => {
  for (const goldenCase of goldenCases) {
    it(goldenCase.name, () => {
      const flat = goldenCase.mask.flat();
      expect(encodeRle(flat, goldenCase.height, goldenCase.width)).toEqual(goldenCase.runs);
      expect(
        Array.from(decodeRle(goldenCase.runs, goldenCase.height, goldenCase.width)),
      ).toEqual(flat);
    });
  }
});

describe('properties', () => {
  it('round-trips random masks and keeps runs maximal', () => {
    const rand = mulberry32(7);
    for (let trial = 0; trial < 100; trial++) {
      const height = 1 + Math.floor(rand() * 12);
      const width = 1 + Math.floor(rand() * 12);
      const mask = Array.from({ length: height * width }, () => Math.floor(rand() * 4));
      const runs = encodeRle(mask, height, width);
      expect(Array.from(decodeRle(runs, height, width))).toEqual(mask);
      let total = 0;
      for (let i = 0; i < runs.length; i++) {
        total += runs[i][1];
        expect(runs[i][1]).toBeGreaterThanOrEqual(1);
        if (i > 0) {
          expect(runs[i][0]).not.toBe(runs[i - 1][0]);
        }
      }
      expect(total).toBe(height * width);
    }
  });
});

describe('validation', () => {
  it('rejects run lengths that do not cover the frame', () => {
    expect(() => decodeRle([[1, 3]], 2, 2)).toThrow(/sum to 4/);
    expect(() => decodeRle([[1, 5]], 2, 2)).toThrow(/exceed/);
  });

  it('rejects malformed runs', () => {
    expect(() => decodeRle([[1, 0]], 1, 1)).toThrow(/positive/);
    expect(() => decodeRle([[-1, 1]], 1, 1)).toThrow(/non-negative/);
    expect(() => decodeRle([[1]] as unknown as RleRuns, 1, 1)).toThrow(/pair/);
  });

  it('handles the zero-pixel mask', () => {
    expect(decodeRle([], 0, 0).length).toBe(0);
    expect(encodeRle([], 0, 0)).toEqual([]);
  });

  it('rejects a mask whose size disagrees with the frame', () => {
    expect(() => encodeRle([0, 0, 0], 2, 2)).toThrow(/expected 4/);
  });
});
