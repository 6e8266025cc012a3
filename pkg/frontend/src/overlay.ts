// Timeline alignment for the overlay under the video: annotation tracks and
// prediction series share a frame grid, but a prediction series starts at
// its warm-up frame (startFrame = w - 1), so it is right-aligned against its
// true timestamps rather than stretched to frame 0.

export interface OverlaySeries {
  name: string;
  rateHz: number;
  /** Frame index of the first value (0 for annotations, w-1 for predictions). */
  startFrame: number;
  values: ReadonlyArray<number>;
}

export interface AlignedColumn {
  name: string;
  /** One entry per timeline frame; null before the series starts. */
  values: Array<number | null>;
}

export interface AlignedTimeline {
  /** Timestamps of the common frame grid, from frame 0. */
  t: number[];
  columns: AlignedColumn[];
  warnings: string[];
}

export function alignSeries(series: ReadonlyArray<OverlaySeries>): AlignedTimeline {
  if (series.length === 0) return { t: [], columns: [], warnings: [] };

  const rate = series[0]!.rateHz;
  const warnings: string[] = [];
  for (const s of series) {
    if (s.rateHz !== rate) {
      warnings.push(`series ${s.name}: rate ${s.rateHz} differs from ${rate}, using ${rate}`);
    }
  }

  const endFrames = series.map((s) => s.startFrame + s.values.length);
  const end = Math.min(...endFrames);
  if (new Set(endFrames).size > 1) {
    warnings.push(`series lengths differ (end frames ${endFrames.join(", ")}); clipped to ${end}`);
  }

  const t = Array.from({ length: Math.max(0, end) }, (_, k) => k / rate);
  const columns = series.map((s) => ({
    name: s.name,
    values: t.map((_, k) =>
      k >= s.startFrame && k < s.startFrame + s.values.length
        ? s.values[k - s.startFrame]!
        : null,
    ),
  }));
  return { t, columns, warnings };
}

/** Timeline frame under the playhead at a given media time. */
export function playheadFrame(mediaTimeS: number, rateHz: number, frameCount: number): number {
  if (frameCount === 0) return 0;
  return Math.min(frameCount - 1, Math.max(0, Math.floor(mediaTimeS * rateHz)));
}
