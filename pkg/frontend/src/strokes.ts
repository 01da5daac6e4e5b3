/** Brush strokes and their rasterization to labeled pixels. */

import type { Label, LabeledPixel } from "./api.js";

export interface ScribbleStroke {
  label: Label;
  points: Array<{ x: number; y: number }>;
  brushRadius: number;
}

/**
 * Rasterize strokes to the exact labeled pixel set the API receives: the
 * union of brush disks around every stroke point, clipped to the image,
 * deduplicated, with later strokes overriding earlier labels on overlap.
 */
export function rasterizeStrokes(
  strokes: ScribbleStroke[],
  width: number,
  height: number,
): LabeledPixel[] {
  const labelOf = new Map<number, Label>();
  for (const stroke of strokes) {
    const r = Math.max(0, stroke.brushRadius);
    const r2 = r * r;
    for (const { x, y } of stroke.points) {
      const cx = Math.round(x);
      const cy = Math.round(y);
      for (let dy = -Math.ceil(r); dy <= Math.ceil(r); dy++) {
        for (let dx = -Math.ceil(r); dx <= Math.ceil(r); dx++) {
          if (dx * dx + dy * dy > r2) continue;
          const px = cx + dx;
          const py = cy + dy;
          if (px < 0 || px >= width || py < 0 || py >= height) continue;
          labelOf.set(py * width + px, stroke.label); // later wins
        }
      }
    }
  }
  const out: LabeledPixel[] = [];
  const keys = [...labelOf.keys()].sort((a, b) => a - b);
  for (const key of keys) {
    out.push({ x: key % width, y: Math.floor(key / width), label: labelOf.get(key)! });
  }
  return out;
}
