/**
 * Typed client for the annotation session service.  Every server
 * interaction in the app goes through this module.
 */

import type {
  Axis,
  JobStatus,
  MetricsReport,
  PipelineConfig,
  SegmentationReport,
  SessionInfo,
  StrokesPayload,
  StrokeVoxel,
} from './types';

export type Fetcher = typeof fetch;

export class ApiRequestError extends Error {
  constructor(
    public readonly code: string,
    message: string,
    public readonly status: number,
  ) {
    super(message);
  }
}

async function unwrap<T>(resp: Response): Promise<T> {
  if (resp.ok) {
    return (await resp.json()) as T;
  }
  let code = 'http_error';
  let message = `${resp.status}`;
  try {
    const body = (await resp.json()) as { error?: string; message?: string };
    code = body.error ?? code;
    message = body.message ?? message;
  } catch {
    /* non-JSON error body */
  }
  throw new ApiRequestError(code, message, resp.status);
}

export class SessionClient {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetcher: Fetcher = fetch,
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async createSessionFromFile(data: ArrayBuffer | Blob): Promise<SessionInfo> {
    const resp = await this.fetcher(this.url('/sessions'), {
      method: 'POST',
      headers: { 'content-type': 'application/octet-stream' },
      body: data,
    });
    return unwrap<SessionInfo>(resp);
  }

  async addStrokes(sessionId: string, voxels: StrokeVoxel[]): Promise<number> {
    const payload = { version: 1, strokes: voxels };
    const resp = await this.fetcher(this.url(`/sessions/${sessionId}/strokes`), {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(payload),
    });
    const body = await unwrap<{ count: number }>(resp);
    return body.count;
  }

  async getStrokes(sessionId: string): Promise<StrokesPayload> {
    const resp = await this.fetcher(this.url(`/sessions/${sessionId}/strokes`));
    return unwrap<StrokesPayload>(resp);
  }

  async clearStrokes(sessionId: string): Promise<void> {
    const resp = await this.fetcher(this.url(`/sessions/${sessionId}/strokes`), {
      method: 'DELETE',
    });
    await unwrap(resp);
  }

  async startSegmentation(sessionId: string, config: PipelineConfig): Promise<void> {
    const resp = await this.fetcher(this.url(`/sessions/${sessionId}/segment`), {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(config),
    });
    await unwrap(resp);
  }

  async getStatus(sessionId: string): Promise<JobStatus> {
    const resp = await this.fetcher(this.url(`/sessions/${sessionId}/status`));
    return unwrap<JobStatus>(resp);
  }

  async getReport(sessionId: string): Promise<SegmentationReport> {
    const resp = await this.fetcher(this.url(`/sessions/${sessionId}/report`));
    return unwrap<SegmentationReport>(resp);
  }

  async getMetrics(sessionId: string, truth: ArrayBuffer | Blob): Promise<MetricsReport> {
    const resp = await this.fetcher(this.url(`/sessions/${sessionId}/metrics`), {
      method: 'POST',
      headers: { 'content-type': 'application/octet-stream' },
      body: truth,
    });
    return unwrap<MetricsReport>(resp);
  }

  sliceUrl(sessionId: string, axis: Axis, index: number, modality: string): string {
    const params = new URLSearchParams({
      axis,
      index: String(index),
      modality,
    });
    return this.url(`/sessions/${sessionId}/slice?${params}`);
  }
}
