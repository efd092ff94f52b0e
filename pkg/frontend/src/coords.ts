// Canvas <-> image pixel coordinate mapping.
//
// The canvas element is CSS-scaled over the video frame, so a click lands in
// canvas space and has to be translated to a full-resolution pixel before it
// is posted. pixelToCanvas returns the center of a pixel's cell, which makes
// canvasToPixel(pixelToCanvas(p)) the identity for any canvas size: that
// round trip is what keeps click markers glued to the pixel they annotated.

export interface PixelCoord {
  row: number;
  col: number;
}

export interface CanvasPoint {
  x: number;
  y: number;
}

function clampIndex(value: number, size: number): number {
  return Math.min(Math.max(value, 0), size - 1);
}

export function canvasToPixel(
  point: CanvasPoint,
  canvasWidth: number,
  canvasHeight: number,
  imageWidth: number,
  imageHeight: number,
): PixelCoord {
  if (canvasWidth <= 0 || canvasHeight <= 0 || imageWidth <= 0 || imageHeight <= 0) {
    throw new Error('canvas and image dimensions must be positive');
  }
  const col = clampIndex(Math.floor((point.x * imageWidth) / canvasWidth), imageWidth);
  const row = clampIndex(Math.floor((point.y * imageHeight) / canvasHeight), imageHeight);
  return { row, col };
}

export function pixelToCanvas(
  pixel: PixelCoord,
  canvasWidth: number,
  canvasHeight: number,
  imageWidth: number,
  imageHeight: number,
): CanvasPoint {
  return {
    x: ((pixel.col + 0.5) * canvasWidth) / imageWidth,
    y: ((pixel.row + 0.5) * canvasHeight) / imageHeight,
  };
}
