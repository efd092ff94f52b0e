// Mask compositing over RGBA frame buffers.
//
// Pure byte-array operations so the logic is testable without a DOM; main.ts
// owns the ImageData/canvas plumbing. Label 0 is background and stays fully
// transparent, every other label blends its palette color over the frame at
// the requested opacity.

export type Rgb = [number, number, number];

// distinct hues for labels 1..n; label 0 never draws
export const DEFAULT_PALETTE: Rgb[] = [
  [0, 0, 0],
  [239, 68, 68],
  [59, 130, 246],
  [34, 197, 94],
  [245, 158, 11],
  [168, 85, 247],
  [236, 72, 153],
  [20, 184, 166],
  [250, 204, 21],
];

export function labelColor(label: number, palette: Rgb[] = DEFAULT_PALETTE): Rgb {
  if (label <= 0) {
    return [0, 0, 0];
  }
  return palette[((label - 1) % (palette.length - 1)) + 1];
}

/**
 * Blend mask colors into a copy of the frame.
 *
 * frameRgba is a width*height*4 RGBA buffer; mask holds one label per pixel
 * in the same row-major order. Throws when the sizes disagree, which the UI
 * surfaces as a diagnostic banner rather than rendering a misaligned mask.
 */
export function compositeOverlay(
  frameRgba: Uint8ClampedArray,
  mask: ArrayLike<number>,
  width: number,
  height: number,
  opacity: number,
  palette: Rgb[] = DEFAULT_PALETTE,
): Uint8ClampedArray<ArrayBuffer> {
  const pixels = width * height;
  if (frameRgba.length !== pixels * 4) {
    throw new Error(`frame buffer has ${frameRgba.length} bytes, expected ${pixels * 4}`);
  }
  if (mask.length !== pixels) {
    throw new Error(`mask has ${mask.length} pixels, frame has ${pixels}`);
  }
  if (!(opacity >= 0 && opacity <= 1)) {
    throw new Error(`opacity must be in [0, 1], got ${opacity}`);
  }
  const out = new Uint8ClampedArray(frameRgba);
  for (let i = 0; i < pixels; i++) {
    const label = mask[i];
    if (label === 0) {
      continue;
    }
    const [r, g, b] = labelColor(label, palette);
    const base = i * 4;
    out[base] = out[base] * (1 - opacity) + r * opacity;
    out[base + 1] = out[base + 1] * (1 - opacity) + g * opacity;
    out[base + 2] = out[base + 2] * (1 - opacity) + b * opacity;
    out[base + 3] = 255;
  }
  return out;
}
