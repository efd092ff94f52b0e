/**
 * Run-length mask codec.
 *
 * Wire format (see protocol.md at the repository root): a label mask is a
 * row-major scan encoded as [[label, run_length], ...] with maximal runs
 * summing to exactly height * width. A zero-pixel mask encodes as [].
 * The golden cases in tests/fixtures/protocol/rle_cases.json pin this
 * format for both the Python suite and this one.
 */

export type RleRuns = Array<[number, number]>;

export function decodeRle(runs: RleRuns, height: number, width: number): Int32Array {
  const total = height * width;
  const mask = new Int32Array(total);
  let cursor = 0;
  for (const run of runs) {
    if (!Array.isArray(run) || run.length !== 2) {
      throw new Error('each run must be a [label, length] pair');
    }
    const [label, length] = run;
    if (!Number.isInteger(label) || label < 0) {
      throw new Error(`labels must be non-negative integers, got ${label}`);
    }
    if (!Number.isInteger(length) || length < 1) {
      throw new Error(`run lengths must be positive integers, got ${length}`);
    }
    if (cursor + length > total) {
      throw new Error(`run lengths exceed ${total} pixels`);
    }
    mask.fill(label, cursor, cursor + length);
    cursor += length;
  }
  if (cursor !== total) {
    throw new Error(`run lengths must sum to ${total} pixels, got ${cursor}`);
  }
  return mask;
}

export function encodeRle(mask: ArrayLike<number>, height: number, width: number): RleRuns {
  const total = height * width;
  if (mask.length !== total) {
    throw new Error(`mask has ${mask.length} pixels, expected ${total}`);
  }
  const runs: RleRuns = [];
  let i = 0;
  while (i < total) {
    const label = mask[i];
    let j = i + 1;
    while (j < total && mask[j] === label) {
      j++;
    }
    runs.push([label, j - i]);
    i = j;
  }
  return runs;
}
