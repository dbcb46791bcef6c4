/** Segmentation job driver: start, poll until terminal, report progress. */

import type { SessionClient } from './api';
import type { JobStatus, PipelineConfig } from './types';

export interface WatchCallbacks {
  onProgress?: (fraction: number) => void;
  onDone?: (status: JobStatus) => void;
  onFailed?: (status: JobStatus) => void;
}

const sleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

/**
 * Start a segmentation and poll /status until done or failed.
 * Resolves with the terminal status.
 */
export async function runAndWatch(
  client: SessionClient,
  sessionId: string,
  config: PipelineConfig,
  callbacks: WatchCallbacks = {},
  pollMs = 250,
  maxPolls = 4000,
): Promise<JobStatus> {
  await client.startSegmentation(sessionId, config);
  for (let n = 0; n < maxPolls; n++) {
    const status = await client.getStatus(sessionId);
    callbacks.onProgress?.(status.progress);
    if (status.state === 'done') {
      callbacks.onDone?.(status);
      return status;
    }
    if (status.state === 'failed') {
      callbacks.onFailed?.(status);
      return status;
    }
    await sleep(pollMs);
  }
  throw new Error('segmentation polling timed out');
}
