// HTTP client for the annotation service. Uploads retry on transient
// failures; a 400 surfaces the server's validation row so the coder can see
// which sample was rejected.

export class UploadRejected extends Error {
  readonly line?: number;

  constructor(message: string, line?: number) {
    super(message);
    this.line = line;
  }
}

export interface PredictionOverlay {
  video_id: string;
  w: number;
  series: number[];
  start_frame: number;
}

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

export class AnnotatorClient {
  private readonly baseUrl: string;
  private readonly fetchImpl: typeof fetch;

  constructor(baseUrl: string, fetchImpl: typeof fetch = fetch) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.fetchImpl = fetchImpl;
  }

  async listVideos(): Promise<string[]> {
    const r = await this.fetchImpl(`${this.baseUrl}/videos`);
    if (!r.ok) throw new Error(`listing videos failed: ${r.status}`);
    return (await r.json()).videos;
  }

  videoUrl(videoId: string): string {
    return `${this.baseUrl}/videos/${encodeURIComponent(videoId)}`;
  }

  /** POST a JSONL track body; retries network errors, never a rejection. */
  async postTrack(body: string, retries = 3): Promise<{ frames: number }> {
    let lastError: unknown;
    for (let attempt = 0; attempt <= retries; attempt++) {
      let r: Response;
      try {
        r = await this.fetchImpl(`${this.baseUrl}/annotations`, {
          method: "POST",
          headers: { "Content-Type": "application/x-ndjson" },
          body,
        });
      } catch (err) {
        lastError = err;
        await sleep(200 * (attempt + 1));
        continue;
      }
      if (r.status === 201) return r.json();
      if (r.status === 400) {
        const detail = await r.json();
        throw new UploadRejected(detail.error ?? "rejected", detail.line);
      }
      lastError = new Error(`upload failed: ${r.status}`);
      await sleep(200 * (attempt + 1));
    }
    throw lastError instanceof Error ? lastError : new Error(String(lastError));
  }

  /** Fetch a stored track back as raw JSONL text. */
  async getTrack(videoId: string, coderId: string): Promise<string> {
    const r = await this.fetchImpl(
      `${this.baseUrl}/annotations/${encodeURIComponent(videoId)}/${encodeURIComponent(coderId)}`,
    );
    if (!r.ok) throw new Error(`track ${videoId}/${coderId} not found: ${r.status}`);
    return r.text();
  }

  async getPredictions(videoId: string): Promise<PredictionOverlay | null> {
    const r = await this.fetchImpl(
      `${this.baseUrl}/predictions/${encodeURIComponent(videoId)}`,
    );
    if (r.status === 404) return null;
    if (!r.ok) throw new Error(`predictions failed: ${r.status}`);
    return r.json();
  }
}
