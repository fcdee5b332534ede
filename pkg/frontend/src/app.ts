/**
 * Single-page review UI: load a facsimile, draw ROIs on a pannable/zoomable
 * canvas, segment + classify through the service, review doubtful-first,
 * correct codes, and export the CSV untouched.
 */

import { Correction, GlyphSummary, Prediction, ServiceClient } from "./api.js";
import { ReviewItem, renderReview } from "./review.js";
import {
  Rect, ViewportTransform, imageToScreen, panBy, roiToImageCoords, zoomAround,
} from "./transform.js";

const COLUMN_COLORS = ["#d32f2f", "#1976d2", "#388e3c", "#f57c00", "#7b1fa2", "#0097a7"];

interface AppState {
  sessionId: string | null;
  image: HTMLImageElement | null;
  transform: ViewportTransform;
  glyphs: GlyphSummary[];
  items: Map<string, ReviewItem>;
  selection: Rect | null; // screen space while dragging
  flagThreshold: number;
  focusGlyph: string | null;
}

const state: AppState = {
  sessionId: null,
  image: null,
  transform: { scale: 1, panX: 0, panY: 0 },
  glyphs: [],
  items: new Map(),
  selection: null,
  flagThreshold: 0.5,
  focusGlyph: null,
};

const client = new ServiceClient(
  (document.querySelector("meta[name=service-url]") as HTMLMetaElement | null)?.content ?? "",
);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setStatus(text: string, isError = false): void {
  const bar = el<HTMLDivElement>("status");
  bar.textContent = text;
  bar.className = isError ? "status error" : "status";
}

// ---------------------------------------------------------------------------
// canvas

function draw(): void {
  const canvas = el<HTMLCanvasElement>("viewer");
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!state.image) return;
  const t = state.transform;
  ctx.save();
  ctx.imageSmoothingEnabled = t.scale < 3;
  ctx.setTransform(t.scale, 0, 0, t.scale, t.panX, t.panY);
  ctx.drawImage(state.image, 0, 0);
  ctx.restore();

  for (const glyph of state.glyphs) {
    const [x0, y0, x1, y1] = glyph.bbox;
    const a = imageToScreen({ x: x0, y: y0 }, t);
    const b = imageToScreen({ x: x1, y: y1 }, t);
    ctx.strokeStyle = COLUMN_COLORS[glyph.column_index % COLUMN_COLORS.length];
    ctx.lineWidth = glyph.glyph_id === state.focusGlyph ? 3 : 1;
    ctx.strokeRect(a.x, a.y, b.x - a.x, b.y - a.y);
    const item = state.items.get(glyph.glyph_id);
    if (item) {
      ctx.font = "11px sans-serif";
      ctx.fillStyle = ctx.strokeStyle;
      ctx.fillText(item.code, a.x + 2, a.y - 2);
    }
  }
  if (state.selection) {
    const [x0, y0, x1, y1] = state.selection;
    ctx.strokeStyle = "#111";
    ctx.setLineDash([5, 3]);
    ctx.strokeRect(x0, y0, x1 - x0, y1 - y0);
    ctx.setLineDash([]);
  }
}

function wireCanvas(): void {
  const canvas = el<HTMLCanvasElement>("viewer");
  let dragStart: { x: number; y: number } | null = null;
  let panning = false;

  canvas.addEventListener("wheel", (event) => {
    event.preventDefault();
    const factor = event.deltaY < 0 ? 1.15 : 1 / 1.15;
    const rect = canvas.getBoundingClientRect();
    state.transform = zoomAround(
      state.transform,
      { x: event.clientX - rect.left, y: event.clientY - rect.top },
      factor,
    );
    draw();
  }, { passive: false });

  canvas.addEventListener("mousedown", (event) => {
    const rect = canvas.getBoundingClientRect();
    dragStart = { x: event.clientX - rect.left, y: event.clientY - rect.top };
    panning = event.shiftKey || event.button === 1;
  });

  canvas.addEventListener("mousemove", (event) => {
    if (!dragStart) return;
    const rect = canvas.getBoundingClientRect();
    const x = event.clientX - rect.left;
    const y = event.clientY - rect.top;
    if (panning) {
      state.transform = panBy(state.transform, x - dragStart.x, y - dragStart.y);
      dragStart = { x, y };
    } else {
      state.selection = [dragStart.x, dragStart.y, x, y];
    }
    draw();
  });

  canvas.addEventListener("mouseup", async () => {
    if (!dragStart) return;
    const selection = state.selection;
    dragStart = null;
    state.selection = null;
    if (panning || !selection || !state.sessionId || !state.image) {
      draw();
      return;
    }
    const result = roiToImageCoords(
      selection, state.transform, state.image.naturalWidth, state.image.naturalHeight,
    );
    if (!result.ok) {
      setStatus(result.message, true);
      draw();
      return;
    }
    try {
      setStatus("segmenting…");
      const glyphs = await client.segment(state.sessionId, result.roi);
      state.glyphs.push(...glyphs);
      setStatus(`${glyphs.length} candidate(s) segmented; classify when ready`);
    } catch (err) {
      setStatus(String(err), true);
    }
    draw();
  });
}

// ---------------------------------------------------------------------------
// review panel

function refreshReview(): void {
  const panel = el<HTMLDivElement>("review");
  panel.textContent = "";
  const entries = renderReview([...state.items.values()], state.flagThreshold);
  for (const { item, flagged } of entries) {
    const row = document.createElement("div");
    row.className = "review-item" + (flagged ? " flagged" : "") + ` status-${item.status}`;
    row.dataset.glyphId = item.glyphId;

    const label = document.createElement("span");
    label.className = "conf";
    label.textContent = item.confidence.toFixed(3);

    const input = document.createElement("input");
    input.value = item.code;
    input.addEventListener("change", () => {
      void submitCorrection(item.glyphId, input.value.trim());
    });

    const badge = document.createElement("span");
    badge.className = "badge";
    badge.textContent = item.status;

    const runner = document.createElement("span");
    runner.className = "runner";
    runner.textContent = item.runnerUp ? `alt ${item.runnerUp[0]} (${item.runnerUp[1].toFixed(2)})` : "";

    row.addEventListener("click", () => {
      state.focusGlyph = item.glyphId;
      draw();
    });
    row.append(label, input, badge, runner);
    panel.appendChild(row);
  }
  el<HTMLDivElement>("line-preview").textContent = mdcPreview();
}

/** Read-only MdC preview: codes in reading order, '-'-joined per column. */
function mdcPreview(): string {
  const byColumn = new Map<number, GlyphSummary[]>();
  for (const glyph of state.glyphs) {
    const list = byColumn.get(glyph.column_index) ?? [];
    list.push(glyph);
    byColumn.set(glyph.column_index, list);
  }
  const lines: string[] = [];
  for (const column of [...byColumn.keys()].sort((a, b) => a - b)) {
    const ordered = byColumn.get(column)!.sort((a, b) => a.order_index - b.order_index);
    const codes = ordered.map((g) => state.items.get(g.glyph_id)?.code ?? "?");
    lines.push(`col${String(column).padStart(2, "0")}: ${codes.join("-")}`);
  }
  return lines.join("\n");
}

async function submitCorrection(glyphId: string, code: string): Promise<void> {
  if (!state.sessionId || !code) return;
  const corrections: Correction[] = [{ glyph_id: glyphId, code }];
  try {
    await client.correct(state.sessionId, corrections);
    // mutate local state only after the service acknowledged
    const item = state.items.get(glyphId);
    if (item) {
      item.code = code;
      item.status = "corrected";
    }
    setStatus(`corrected ${glyphId} to ${code}`);
  } catch (err) {
    setStatus(String(err), true);
  }
  refreshReview();
  draw();
}

function confirmFocused(): void {
  // confirmation is a review bookmark; the prediction itself is untouched
  const focused = state.focusGlyph ?? renderReview([...state.items.values()], state.flagThreshold)[0]?.item.glyphId;
  if (!focused) return;
  const item = state.items.get(focused);
  if (item && item.status === "auto") item.status = "confirmed";
  const entries = renderReview([...state.items.values()], state.flagThreshold);
  const next = entries.find((e) => e.item.status === "auto");
  state.focusGlyph = next ? next.item.glyphId : null;
  refreshReview();
  draw();
}

// ---------------------------------------------------------------------------
// actions

async function loadFacsimile(file: File): Promise<void> {
  const metadata = {
    support: el<HTMLInputElement>("support").value || "unknown",
    spell: el<HTMLInputElement>("spell").value || "unknown",
  };
  try {
    setStatus("creating session…");
    state.sessionId = await client.createSession(file, metadata);
    state.glyphs = [];
    state.items.clear();
    const url = URL.createObjectURL(file);
    const image = new Image();
    image.onload = () => {
      state.image = image;
      state.transform = { scale: 1, panX: 0, panY: 0 };
      draw();
      setStatus(`session ${state.sessionId}; drag a box over a column to segment`);
    };
    image.src = url;
    refreshReview();
  } catch (err) {
    setStatus(String(err), true);
  }
}

async function classify(): Promise<void> {
  if (!state.sessionId) return;
  const backend = el<HTMLSelectElement>("backend").value;
  try {
    setStatus(`classifying with ${backend}…`);
    const predictions = await client.classify(state.sessionId, backend);
    ingestPredictions(predictions);
    setStatus(`${predictions.length} glyph(s) classified`);
  } catch (err) {
    setStatus(String(err), true);
  }
  refreshReview();
  draw();
}

function ingestPredictions(predictions: Prediction[]): void {
  for (const p of predictions) {
    const glyph = state.glyphs.find((g) => g.glyph_id === p.glyph_id);
    const existing = state.items.get(p.glyph_id);
    state.items.set(p.glyph_id, {
      glyphId: p.glyph_id,
      code: p.code,
      confidence: p.confidence,
      runnerUp: p.runner_up,
      status: existing && existing.status !== "auto" ? existing.status : "auto",
      bbox: glyph ? glyph.bbox : [0, 0, 0, 0],
    });
  }
}

/** Download exactly the bytes the service returned. */
export function downloadBytes(bytes: Uint8Array, filename: string): void {
  const blob = new Blob([bytes as BlobPart], { type: "text/csv;charset=utf-8" });
  const url = URL.createObjectURL(blob);
  const link = document.createElement("a");
  link.href = url;
  link.download = filename;
  link.click();
  URL.revokeObjectURL(url);
}

async function exportCsv(): Promise<void> {
  if (!state.sessionId) return;
  try {
    const bytes = await client.exportCsv(state.sessionId);
    downloadBytes(bytes, "transcription.csv");
    setStatus(`exported ${bytes.length} bytes`);
  } catch (err) {
    setStatus(String(err), true);
  }
}

export function main(): void {
  wireCanvas();
  el<HTMLInputElement>("file").addEventListener("change", (event) => {
    const file = (event.target as HTMLInputElement).files?.[0];
    if (file) void loadFacsimile(file);
  });
  el<HTMLButtonElement>("classify").addEventListener("click", () => void classify());
  el<HTMLButtonElement>("export").addEventListener("click", () => void exportCsv());
  el<HTMLInputElement>("threshold").addEventListener("input", (event) => {
    state.flagThreshold = Number((event.target as HTMLInputElement).value);
    refreshReview();
  });
  document.addEventListener("keydown", (event) => {
    if (event.key === "Enter" && !(event.target instanceof HTMLInputElement)) {
      confirmFocused();
    }
  });
  void client.health().then(
    () => setStatus("service reachable; load a facsimile to begin"),
    () => setStatus("service unreachable; start it and reload", true),
  );
}

if (typeof document !== "undefined" && document.getElementById("viewer")) {
  main();
}
