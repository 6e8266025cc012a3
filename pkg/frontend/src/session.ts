// Recording session for continuous engagement coding.
//
// Sampling is locked to MEDIA time, not wall time: sample k has timestamp
// k / rateHz, and it is emitted once playback has covered that much media.
// Pausing freezes media time, so a pause of any wall-clock length produces
// no gap in the recorded track. The control value is a zero-order hold of
// whatever the coder last set (gamepad axis or slider).

export type SessionStatus = "idle" | "recording" | "paused" | "review";

export interface Sample {
  t: number;
  v: number;
}

const EPS = 1e-9;

function clamp01(v: number): number {
  return Math.min(1, Math.max(0, v));
}

/** Round to 6 decimal places — the wire format's canonical precision. */
export function quantize(v: number): number {
  return Math.round(v * 1e6) / 1e6;
}

export class AnnotationSession {
  readonly videoId: string;
  readonly coderId: string;
  readonly rateHz: number;

  private _status: SessionStatus = "idle";
  private _samples: Sample[] = [];
  private _control = 0;

  constructor(videoId: string, coderId: string, rateHz = 10) {
    if (rateHz <= 0) throw new Error(`rateHz must be positive, got ${rateHz}`);
    this.videoId = videoId;
    this.coderId = coderId;
    this.rateHz = rateHz;
  }

  get status(): SessionStatus {
    return this._status;
  }

  get samples(): readonly Sample[] {
    return this._samples;
  }

  get controlValue(): number {
    return this._control;
  }

  /** Latest control reading; clamped to [0,1] and held until the next set. */
  setControl(v: number): void {
    this._control = quantize(clamp01(v));
  }

  /** Begin recording from a clean buffer. */
  start(): void {
    if (this._status === "recording" || this._status === "paused") {
      throw new Error(`cannot start from status ${this._status}`);
    }
    this._samples = [];
    this._status = "recording";
  }

  pause(): void {
    if (this._status === "recording") this._status = "paused";
  }

  resume(): void {
    if (this._status === "paused") this._status = "recording";
  }

  /** End the session; the buffer becomes read-only review material. */
  stop(): void {
    if (this._status === "recording" || this._status === "paused") {
      this._status = "review";
    }
  }

  /**
   * Advance to the current media position, emitting every sample whose slot
   * playback has now covered. Emits nothing unless recording: sample count
   * after covering T seconds is exactly floor(T * rateHz).
   */
  tick(mediaTimeS: number): void {
    if (this._status !== "recording") return;
    while ((this._samples.length + 1) / this.rateHz <= mediaTimeS + EPS) {
      this._samples.push({
        t: quantize(this._samples.length / this.rateHz),
        v: this._control,
      });
    }
  }
}
