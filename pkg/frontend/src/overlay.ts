/** Mask overlay rendering: tinted region fill plus boundary contour. */

export interface DecodedMask {
  width: number;
  height: number;
  labels: Int32Array; // region id per pixel, row-major
  regions: number;
}

export class DimensionMismatch extends Error {}

/** Map distinct RGB colors of a label-map image to region ids (order of
 * first appearance, so ids are stable for a given mask). */
export function decodeMaskRgba(
  rgba: Uint8ClampedArray | Uint8Array,
  width: number,
  height: number,
): DecodedMask {
  if (rgba.length !== width * height * 4) {
    throw new DimensionMismatch(
      `buffer has ${rgba.length} bytes, expected ${width * height * 4}`,
    );
  }
  const labels = new Int32Array(width * height);
  const seen = new Map<number, number>();
  for (let i = 0; i < width * height; i++) {
    const key = (rgba[4 * i] << 16) | (rgba[4 * i + 1] << 8) | rgba[4 * i + 2];
    let id = seen.get(key);
    if (id === undefined) {
      id = seen.size;
      seen.set(key, id);
    }
    labels[i] = id;
  }
  return { width, height, labels, regions: seen.size };
}

/** Pixels whose 4-neighborhood crosses a region boundary. */
export function boundaryMask(mask: DecodedMask): Uint8Array {
  const { width, height, labels } = mask;
  const out = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const i = y * width + x;
      const v = labels[i];
      if (
        (x + 1 < width && labels[i + 1] !== v) ||
        (x > 0 && labels[i - 1] !== v) ||
        (y + 1 < height && labels[i + width] !== v) ||
        (y > 0 && labels[i - width] !== v)
      ) {
        out[i] = 1;
      }
    }
  }
  return out;
}

const REGION_TINTS: Array<[number, number, number]> = [
  [31, 119, 180],
  [255, 127, 14],
  [44, 160, 44],
  [214, 39, 40],
  [148, 103, 189],
  [140, 86, 75],
];

function tintOf(region: number): [number, number, number] {
  return REGION_TINTS[region % REGION_TINTS.length];
}

/**
 * Produce the RGBA overlay layer: regions tinted at the given opacity and
 * boundary pixels drawn opaque. Image dimensions must match the mask.
 */
export function renderOverlay(
  mask: DecodedMask,
  imageWidth: number,
  imageHeight: number,
  opacity: number,
): Uint8ClampedArray {
  if (mask.width !== imageWidth || mask.height !== imageHeight) {
    throw new DimensionMismatch(
      `mask is ${mask.width}x${mask.height}, image is ${imageWidth}x${imageHeight}`,
    );
  }
  const alpha = Math.round(255 * Math.min(1, Math.max(0, opacity)));
  const boundary = boundaryMask(mask);
  const out = new Uint8ClampedArray(mask.width * mask.height * 4);
  for (let i = 0; i < mask.labels.length; i++) {
    const [r, g, b] = tintOf(mask.labels[i]);
    out[4 * i] = r;
    out[4 * i + 1] = g;
    out[4 * i + 2] = b;
    out[4 * i + 3] = boundary[i] ? 255 : alpha;
  }
  return out;
}
