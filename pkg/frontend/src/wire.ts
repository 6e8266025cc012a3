// JSONL wire format shared with the annotation server: one metadata line
// ({video_id, coder_id, rate_hz}), then one {"t", "v"} object per frame.

import type { Sample } from "./session.js";

export interface TrackMeta {
  videoId: string;
  coderId: string;
  rateHz: number;
}

export interface ParsedTrack extends TrackMeta {
  samples: Sample[];
}

export class WireError extends Error {
  readonly line: number;

  constructor(line: number, message: string) {
    super(`line ${line}: ${message}`);
    this.line = line;
  }
}

export function exportTrack(meta: TrackMeta, samples: readonly Sample[]): string {
  const lines = [
    JSON.stringify({
      video_id: meta.videoId,
      coder_id: meta.coderId,
      rate_hz: meta.rateHz,
    }),
  ];
  for (const s of samples) {
    lines.push(JSON.stringify({ t: s.t, v: s.v }));
  }
  return lines.join("\n") + "\n";
}

export function parseTrack(text: string): ParsedTrack {
  const lines = text.split("\n").filter((ln) => ln.trim() !== "");
  if (lines.length === 0) throw new WireError(1, "empty track");

  let meta: Record<string, unknown>;
  try {
    meta = JSON.parse(lines[0]!);
  } catch {
    throw new WireError(1, "bad metadata line");
  }
  for (const key of ["video_id", "coder_id", "rate_hz"]) {
    if (!(key in meta)) throw new WireError(1, `metadata missing ${key}`);
  }

  const samples: Sample[] = [];
  for (let i = 1; i < lines.length; i++) {
    let t: number;
    let v: number;
    try {
      const row = JSON.parse(lines[i]!);
      t = Number(row.t);
      v = Number(row.v);
    } catch {
      throw new WireError(i + 1, "bad sample row");
    }
    if (!Number.isFinite(t) || !Number.isFinite(v)) {
      throw new WireError(i + 1, "non-finite sample");
    }
    if (v < 0 || v > 1) throw new WireError(i + 1, `value ${v} outside [0,1]`);
    const prev = samples[samples.length - 1];
    if (prev !== undefined && t <= prev.t) {
      throw new WireError(i + 1, "timestamps must be strictly increasing");
    }
    samples.push({ t, v });
  }
  if (samples.length === 0) throw new WireError(1, "track has no samples");

  return {
    videoId: String(meta.video_id),
    coderId: String(meta.coder_id),
    rateHz: Number(meta.rate_hz),
    samples,
  };
}
