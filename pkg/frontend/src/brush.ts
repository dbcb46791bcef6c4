/**
 * Brush strokes: filled disks painted in slice coordinates and mapped to
 * voxels, mirroring the disk geometry of the server-side stroke simulator
 * (offsets strictly inside the radius).
 */

import type { Axis, StrokeVoxel } from './types';
import { inBounds, pixelToVoxel, type Dims } from './view';

export interface BrushStroke {
  classCode: number;
  radius: number;
  axis: Axis;
  index: number;
  /** painted pixel centers in slice coordinates */
  pixels: Array<{ x: number; y: number }>;
}

export function diskOffsets(radius: number): Array<{ dx: number; dy: number }> {
  const out: Array<{ dx: number; dy: number }> = [];
  const r = Math.max(1, Math.floor(radius));
  for (let dx = -r; dx <= r; dx++) {
    for (let dy = -r; dy <= r; dy++) {
      if (dx * dx + dy * dy < r * r) {
        out.push({ dx, dy });
      }
    }
  }
  return out;
}

/** Rasterize a stroke to deduplicated in-bounds voxels. */
export function strokeToVoxels(stroke: BrushStroke, dims: Dims): StrokeVoxel[] {
  const seen = new Set<string>();
  const out: StrokeVoxel[] = [];
  const offsets = diskOffsets(stroke.radius);
  for (const p of stroke.pixels) {
    for (const { dx, dy } of offsets) {
      const x = Math.round(p.x) + dx;
      const y = Math.round(p.y) + dy;
      const voxel = pixelToVoxel(stroke.axis, stroke.index, x, y);
      if (!inBounds(dims, voxel)) {
        continue;
      }
      const key = voxel.join(',');
      if (seen.has(key)) {
        continue;
      }
      seen.add(key);
      out.push({ i: voxel[0], j: voxel[1], k: voxel[2], label: stroke.classCode });
    }
  }
  return out;
}

/**
 * Merge a stroke into the locally-tracked voxel map (for echo rendering
 * and the pre-flight class check).  Conflicting repaints overwrite.
 */
export function mergeLocal(
  local: Map<string, StrokeVoxel>,
  voxels: StrokeVoxel[],
): Map<string, StrokeVoxel> {
  const next = new Map(local);
  for (const v of voxels) {
    next.set(`${v.i},${v.j},${v.k}`, v);
  }
  return next;
}

export function classesPresent(local: Map<string, StrokeVoxel>): Set<number> {
  const present = new Set<number>();
  local.forEach((v) => present.add(v.label));
  return present;
}

export function missingClasses(local: Map<string, StrokeVoxel>): number[] {
  const present = classesPresent(local);
  const missing: number[] = [];
  for (let c = 0; c < 4; c++) {
    if (!present.has(c)) {
      missing.push(c);
    }
  }
  return missing;
}
