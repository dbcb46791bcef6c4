/**
 * View-state math: slice navigation and the pixel <-> voxel mapping.
 *
 * The mapping is the exact inverse of the server's slice extraction:
 *   axial   (fix k): image rows are j, columns are i  -> (H x W)
 *   coronal (fix j): image rows are k, columns are i  -> (D x W)
 *   sagittal(fix i): image rows are k, columns are j  -> (D x H)
 */

import type { Axis } from './types';

export type Dims = [number, number, number]; // W, H, D

export function axisExtent(dims: Dims, axis: Axis): number {
  const [w, h, d] = dims;
  switch (axis) {
    case 'axial':
      return d;
    case 'coronal':
      return h;
    case 'sagittal':
      return w;
  }
}

/** Width and height of the 2-D image served for a view axis. */
export function sliceShape(dims: Dims, axis: Axis): { width: number; height: number } {
  const [w, h, d] = dims;
  switch (axis) {
    case 'axial':
      return { width: w, height: h };
    case 'coronal':
      return { width: w, height: d };
    case 'sagittal':
      return { width: h, height: d };
  }
}

export function clampIndex(dims: Dims, axis: Axis, index: number): number {
  const extent = axisExtent(dims, axis);
  return Math.min(Math.max(Math.round(index), 0), extent - 1);
}

/** Slice pixel (x right, y down) plus slice index -> voxel (i, j, k). */
export function pixelToVoxel(
  axis: Axis,
  index: number,
  x: number,
  y: number,
): [number, number, number] {
  switch (axis) {
    case 'axial':
      return [x, y, index];
    case 'coronal':
      return [x, index, y];
    case 'sagittal':
      return [index, x, y];
  }
}

/** Voxel (i, j, k) -> {index, x, y} in the given view. */
export function voxelToPixel(
  axis: Axis,
  voxel: [number, number, number],
): { index: number; x: number; y: number } {
  const [i, j, k] = voxel;
  switch (axis) {
    case 'axial':
      return { index: k, x: i, y: j };
    case 'coronal':
      return { index: j, x: i, y: k };
    case 'sagittal':
      return { index: i, x: j, y: k };
  }
}

export function inBounds(dims: Dims, voxel: [number, number, number]): boolean {
  const [w, h, d] = dims;
  const [i, j, k] = voxel;
  return i >= 0 && i < w && j >= 0 && j < h && k >= 0 && k < d;
}

export interface ViewState {
  axis: Axis;
  index: number;
  modality: string;
  zoom: number;
  panX: number;
  panY: number;
  overlayOpacity: number;
}

export function initialView(modality: string): ViewState {
  return {
    axis: 'axial',
    index: 0,
    modality,
    zoom: 1,
    panX: 0,
    panY: 0,
    overlayOpacity: 0.6,
  };
}

export function stepSlice(view: ViewState, dims: Dims, delta: number): ViewState {
  return { ...view, index: clampIndex(dims, view.axis, view.index + delta) };
}

export function switchAxis(view: ViewState, dims: Dims, axis: Axis): ViewState {
  return { ...view, axis, index: clampIndex(dims, axis, view.index) };
}
