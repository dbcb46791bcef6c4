import { describe, expect, it, vi } from 'vitest';

import { ApiRequestError, SessionClient } from '../src/api';
import { configFromForm, formatMetricsRows } from '../src/app';
import { runAndWatch } from '../src/polling';
import type { JobStatus, MetricsReport, PipelineConfig } from '../src/types';

const json = (body: unknown, status = 200) =>
  new Response(JSON.stringify(body), {
    status,
    headers: { 'content-type': 'application/json' },
  });

describe('SessionClient', () => {
  it('posts stroke deltas in the documented wire format', async () => {
    const calls: Array<{ url: string; init?: RequestInit }> = [];
    const fetcher = vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
      calls.push({ url: String(url), init });
      return json({ count: 2 });
    });
    const client = new SessionClient('http://api', fetcher as typeof fetch);
    const count = await client.addStrokes('abc', [
      { i: 1, j: 2, k: 3, label: 1 },
      { i: 4, j: 5, k: 6, label: 0 },
    ]);
    expect(count).toBe(2);
    expect(calls[0].url).toBe('http://api/sessions/abc/strokes');
    const body = JSON.parse(String(calls[0].init?.body));
    expect(body).toEqual({
      version: 1,
      strokes: [
        { i: 1, j: 2, k: 3, label: 1 },
        { i: 4, j: 5, k: 6, label: 0 },
      ],
    });
  });

  it('strokes round-trip through commit and re-fetch', async () => {
    let stored: unknown = null;
    const fetcher = vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
      if (init?.method === 'POST') {
        stored = JSON.parse(String(init.body));
        return json({ count: 1 });
      }
      return json(stored);
    });
    const client = new SessionClient('', fetcher as typeof fetch);
    const voxels = [{ i: 9, j: 8, k: 7, label: 2 }];
    await client.addStrokes('s', voxels);
    const back = await client.getStrokes('s');
    expect(back.strokes).toEqual(voxels);
  });

  it('surfaces server error payloads verbatim', async () => {
    const fetcher = vi.fn(async () =>
      json({ error: 'session_busy', message: 'segmentation in progress' }, 409),
    );
    const client = new SessionClient('', fetcher as typeof fetch);
    await expect(client.clearStrokes('s')).rejects.toMatchObject({
      code: 'session_busy',
      message: 'segmentation in progress',
      status: 409,
    });
    try {
      await client.clearStrokes('s');
    } catch (err) {
      expect(err).toBeInstanceOf(ApiRequestError);
    }
  });

  it('builds slice URLs with query parameters', () => {
    const client = new SessionClient('http://api');
    expect(client.sliceUrl('s', 'coronal', 12, 'FLAIR')).toBe(
      'http://api/sessions/s/slice?axis=coronal&index=12&modality=FLAIR',
    );
  });
});

describe('runAndWatch', () => {
  const config: PipelineConfig = {
    classifier: 'knn',
    use_crf: true,
    use_spatial_features: true,
    hyper: { mode: 'fixed' },
  };

  function scriptedClient(statuses: JobStatus[]) {
    let call = 0;
    return {
      startSegmentation: vi.fn(async () => undefined),
      getStatus: vi.fn(async () => statuses[Math.min(call++, statuses.length - 1)]),
    } as unknown as SessionClient;
  }

  it('polls until done and reports monotone progress', async () => {
    const client = scriptedClient([
      { state: 'running', progress: 0.2 },
      { state: 'running', progress: 0.7 },
      { state: 'done', progress: 1.0 },
    ]);
    const seen: number[] = [];
    const status = await runAndWatch(client, 's', config, {
      onProgress: (f) => seen.push(f),
    }, 1);
    expect(status.state).toBe('done');
    expect(seen).toEqual([0.2, 0.7, 1.0]);
  });

  it('resolves failed jobs with the reason payload', async () => {
    const client = scriptedClient([
      { state: 'running', progress: 0.3 },
      { state: 'failed', progress: 0.3, reason: 'boom' },
    ]);
    const failed = vi.fn();
    const status = await runAndWatch(client, 's', config, { onFailed: failed }, 1);
    expect(status.state).toBe('failed');
    expect(failed).toHaveBeenCalledWith(
      expect.objectContaining({ reason: 'boom' }),
    );
  });
});

describe('form and metrics panel helpers', () => {
  it('config round-trips through JSON unchanged', () => {
    const config = configFromForm({
      classifier: 'pksvm',
      useCrf: true,
      useSpatial: true,
      hyperMode: 'grid',
    });
    expect(JSON.parse(JSON.stringify(config))).toEqual(config);
    expect(config).toEqual({
      classifier: 'pksvm',
      use_crf: true,
      use_spatial_features: true,
      hyper: { mode: 'grid' },
    });
  });

  it('renders the three regions by three metrics', () => {
    const metrics: MetricsReport = {
      complete: { dice: 1, sensitivity: 1, specificity: 1 },
      core: { dice: 0.5, sensitivity: 0.25, specificity: 0.75 },
      enhancing: { dice: 0, sensitivity: 0, specificity: 1 },
    };
    const rows = formatMetricsRows(metrics);
    expect(rows).toEqual([
      ['complete', '1.00', '1.00', '1.00'],
      ['core', '0.50', '0.25', '0.75'],
      ['enhancing', '0.00', '0.00', '1.00'],
    ]);
  });
});
