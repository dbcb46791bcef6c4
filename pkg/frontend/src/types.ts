export type Axis = 'axial' | 'sagittal' | 'coronal';

export const AXES: Axis[] = ['axial', 'sagittal', 'coronal'];

export const TISSUE_CLASSES = [
  { code: 0, name: 'healthy', color: 'rgba(90, 140, 255, 0.8)' },
  { code: 1, name: 'edema', color: 'rgba(0, 200, 0, 0.8)' },
  { code: 2, name: 'non-enhancing', color: 'rgba(230, 210, 0, 0.8)' },
  { code: 3, name: 'enhancing', color: 'rgba(220, 30, 30, 0.8)' },
] as const;

export interface SessionInfo {
  id: string;
  dims: [number, number, number]; // W, H, D
  modalities: string[];
  spacing: [number, number, number];
  in_mask_voxels: number;
}

export interface StrokeVoxel {
  i: number;
  j: number;
  k: number;
  label: number;
}

export interface StrokesPayload {
  version: number;
  strokes: StrokeVoxel[];
}

export interface JobStatus {
  state: 'idle' | 'running' | 'done' | 'failed';
  progress: number;
  reason?: string;
}

export interface PipelineConfig {
  classifier: 'knn' | 'lsvm' | 'ksvm' | 'pksvm' | 'rf' | 'adaboost';
  use_crf: boolean;
  use_spatial_features: boolean;
  hyper: { mode: 'grid' | 'fixed' | 'explicit'; values?: Record<string, number> };
  subsample?: { target_n: number; seed: number };
  mask_threshold?: number;
  seed?: number;
}

export interface SegmentationReport {
  dims: number[];
  timings: Record<string, number>;
  total_seconds: number;
  feature_store_bytes: number;
  hyperparams: Record<string, number>;
  classifier_converged: boolean;
  config: Record<string, unknown>;
}

export interface RegionMetrics {
  dice: number;
  sensitivity: number;
  specificity: number;
}

export type MetricsReport = Record<'complete' | 'core' | 'enhancing', RegionMetrics>;

export interface ApiError {
  error: string;
  message: string;
}
