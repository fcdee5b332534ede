/**
 * Typed client for the transcription service.
 *
 * Requests within a session are queued so they reach the service one at a
 * time; the service serializes them anyway, queueing here keeps optimistic
 * UI updates ordered.  Export returns the response bytes verbatim.
 */

export interface GlyphSummary {
  glyph_id: string;
  bbox: [number, number, number, number];
  column_index: number;
  order_index: number;
}

export interface Prediction {
  glyph_id: string;
  code: string;
  confidence: number;
  runner_up: [string, number] | null;
  latency_ms: number;
}

export interface Correction {
  glyph_id: string;
  code: string;
}

export class ServiceError extends Error {
  constructor(public status: number, public error: string, public detail: string) {
    super(`${error}: ${detail}`);
  }
}

async function raiseForStatus(res: Response): Promise<void> {
  if (res.ok) return;
  let error = "error";
  let detail = res.statusText;
  try {
    const body = await res.json();
    error = body.error ?? error;
    detail = body.detail ?? detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ServiceError(res.status, error, detail);
}

export class ServiceClient {
  private queue: Promise<unknown> = Promise.resolve();

  constructor(public baseUrl: string = "") {}

  /** Serialize calls: each request starts after the previous one settles. */
  private enqueue<T>(task: () => Promise<T>): Promise<T> {
    const next = this.queue.then(task, task);
    this.queue = next.catch(() => undefined);
    return next;
  }

  async health(): Promise<{ status: string }> {
    const res = await fetch(`${this.baseUrl}/health`);
    await raiseForStatus(res);
    return res.json();
  }

  createSession(image: Blob, metadata: { support: string; spell: string }): Promise<string> {
    return this.enqueue(async () => {
      const form = new FormData();
      form.append("image", image, "facsimile.png");
      form.append("metadata", JSON.stringify(metadata));
      const res = await fetch(`${this.baseUrl}/sessions`, { method: "POST", body: form });
      await raiseForStatus(res);
      return (await res.json()).session_id as string;
    });
  }

  segment(sessionId: string, roi: [number, number, number, number]): Promise<GlyphSummary[]> {
    return this.enqueue(async () => {
      const res = await fetch(`${this.baseUrl}/sessions/${sessionId}/segment`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ roi }),
      });
      await raiseForStatus(res);
      return (await res.json()).glyphs as GlyphSummary[];
    });
  }

  classify(sessionId: string, backend?: string): Promise<Prediction[]> {
    return this.enqueue(async () => {
      const res = await fetch(`${this.baseUrl}/sessions/${sessionId}/classify`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(backend ? { backend } : {}),
      });
      await raiseForStatus(res);
      return (await res.json()).predictions as Prediction[];
    });
  }

  correct(sessionId: string, corrections: Correction[]): Promise<number> {
    return this.enqueue(async () => {
      const res = await fetch(`${this.baseUrl}/sessions/${sessionId}/corrections`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ corrections }),
      });
      await raiseForStatus(res);
      return (await res.json()).corrected as number;
    });
  }

  /** CSV export; the returned bytes are exactly what the service sent. */
  exportCsv(sessionId: string): Promise<Uint8Array> {
    return this.enqueue(async () => {
      const res = await fetch(`${this.baseUrl}/sessions/${sessionId}/export.csv`);
      await raiseForStatus(res);
      return new Uint8Array(await res.arrayBuffer());
    });
  }
}
