// DOM glue: wires the video element, slider/gamepad, session state machine
// and the overlay canvas together. All logic lives in the other modules so
// it stays testable without a browser.

import { AnnotationSession } from "./session.js";
import { exportTrack } from "./wire.js";
import { AnnotatorClient, UploadRejected } from "./upload.js";
import { gamepadReader, combinedReader } from "./gamepad.js";
import { alignSeries, playheadFrame, type OverlaySeries } from "./overlay.js";

const RATE_HZ = 10;
const SERIES_COLORS = ["#d62728", "#2ca02c", "#1f77b4", "#9467bd"];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function setup(): Promise<void> {
  const client = new AnnotatorClient("");
  const video = el<HTMLVideoElement>("video");
  const slider = el<HTMLInputElement>("slider");
  const videoSelect = el<HTMLSelectElement>("video-select");
  const coderInput = el<HTMLInputElement>("coder-id");
  const statusLine = el<HTMLSpanElement>("status");
  const canvas = el<HTMLCanvasElement>("timeline");

  for (const id of await client.listVideos()) {
    const opt = document.createElement("option");
    opt.value = id;
    opt.textContent = id;
    videoSelect.appendChild(opt);
  }
  videoSelect.addEventListener("change", () => {
    video.src = client.videoUrl(videoSelect.value);
  });
  if (videoSelect.value) video.src = client.videoUrl(videoSelect.value);

  const readControl = combinedReader(gamepadReader(), () => Number(slider.value));
  let session: AnnotationSession | null = null;
  let overlays: OverlaySeries[] = [];

  const setStatus = (text: string) => {
    statusLine.textContent = text;
  };

  el<HTMLButtonElement>("record").addEventListener("click", () => {
    session = new AnnotationSession(videoSelect.value, coderInput.value || "coder", RATE_HZ);
    session.start();
    video.currentTime = 0;
    void video.play();
    setStatus("recording");
  });

  el<HTMLButtonElement>("pause").addEventListener("click", () => {
    if (!session) return;
    if (session.status === "recording") {
      session.pause();
      video.pause();
      setStatus("paused");
    } else if (session.status === "paused") {
      session.resume();
      void video.play();
      setStatus("recording");
    }
  });

  el<HTMLButtonElement>("stop").addEventListener("click", async () => {
    if (!session) return;
    session.stop();
    video.pause();
    overlays = [
      {
        name: session.coderId,
        rateHz: RATE_HZ,
        startFrame: 0,
        values: session.samples.map((s) => s.v),
      },
    ];
    const preds = await client.getPredictions(session.videoId);
    if (preds) {
      overlays.push({
        name: "model",
        rateHz: RATE_HZ,
        startFrame: preds.start_frame,
        values: preds.series,
      });
    }
    try {
      await client.postTrack(
        exportTrack(
          { videoId: session.videoId, coderId: session.coderId, rateHz: RATE_HZ },
          session.samples,
        ),
      );
      setStatus(`review — uploaded ${session.samples.length} samples`);
    } catch (err) {
      setStatus(
        err instanceof UploadRejected
          ? `rejected at row ${err.line ?? "?"}: ${err.message}`
          : `upload failed: ${String(err)}`,
      );
    }
  });

  const draw = () => {
    const ctx = canvas.getContext("2d");
    if (ctx) {
      ctx.clearRect(0, 0, canvas.width, canvas.height);
      const aligned = alignSeries(overlays);
      const n = aligned.t.length;
      aligned.columns.forEach((col, ci) => {
        ctx.strokeStyle = SERIES_COLORS[ci % SERIES_COLORS.length]!;
        ctx.beginPath();
        let started = false;
        col.values.forEach((v, k) => {
          if (v === null) return;
          const x = (k / Math.max(1, n - 1)) * canvas.width;
          const y = (1 - v) * canvas.height;
          started ? ctx.lineTo(x, y) : ctx.moveTo(x, y);
          started = true;
        });
        ctx.stroke();
      });
      if (n > 0) {
        const frame = playheadFrame(video.currentTime, RATE_HZ, n);
        const x = (frame / Math.max(1, n - 1)) * canvas.width;
        ctx.strokeStyle = "#000";
        ctx.beginPath();
        ctx.moveTo(x, 0);
        ctx.lineTo(x, canvas.height);
        ctx.stroke();
      }
    }

    const control = readControl();
    if (control !== null) {
      slider.value = String(control);
      session?.setControl(control);
    }
    session?.tick(video.currentTime);
    requestAnimationFrame(draw);
  };
  requestAnimationFrame(draw);
}

void setup();
