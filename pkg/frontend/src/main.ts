/** Browser entry: canvas painting loop over the session API. */

import { ApiClient, type Label } from "./api.js";
import { decodeMaskRgba, renderOverlay } from "./overlay.js";
import { rasterizeStrokes, type ScribbleStroke } from "./strokes.js";
import { SessionController, ViewState } from "./state.js";

const api = new ApiClient("");
let controller: SessionController | null = null;
let currentLabel: Label = "object";
let brushRadius = 2;
let overlayVisible = true;
let imageBitmap: ImageBitmap | null = null;

const el = <T extends HTMLElement>(id: string): T =>
  document.getElementById(id) as T;

const canvas = el<HTMLCanvasElement>("canvas");
const ctx = canvas.getContext("2d")!;
const staleBadge = el<HTMLSpanElement>("stale-badge");
const statusLine = el<HTMLSpanElement>("status");

function setStatus(text: string): void {
  statusLine.textContent = text;
}

function markerColor(label: Label): string {
  return label === "object" ? "#2563eb" : "#ca8a04";
}

async function redraw(): Promise<void> {
  if (!controller || !imageBitmap) return;
  const { width, height } = controller.state;
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(imageBitmap, 0, 0, canvas.width, canvas.height);

  if (overlayVisible && controller.state.maskPngBase64) {
    const maskImg = new Image();
    maskImg.src = `data:image/png;base64,${controller.state.maskPngBase64}`;
    await maskImg.decode();
    const scratch = document.createElement("canvas");
    scratch.width = width;
    scratch.height = height;
    const sctx = scratch.getContext("2d")!;
    sctx.drawImage(maskImg, 0, 0);
    const rgba = sctx.getImageData(0, 0, width, height).data;
    const mask = decodeMaskRgba(rgba, width, height);
    const layer = new Uint8ClampedArray(renderOverlay(mask, width, height, 0.35));
    sctx.putImageData(new ImageData(layer, width, height), 0, 0);
    ctx.drawImage(scratch, 0, 0, canvas.width, canvas.height);
  }

  const state = await api.getState(controller.state.sessionId);
  const scale = canvas.width / width;
  for (const s of state.scribbles) {
    ctx.fillStyle = markerColor(s.label);
    ctx.beginPath();
    ctx.arc((s.x + 0.5) * scale, (s.y + 0.5) * scale, Math.max(2, scale / 2), 0, 7);
    ctx.fill();
  }
  staleBadge.hidden = !controller.state.stale;
}

async function upload(file: File): Promise<void> {
  setStatus("creating session…");
  const info = await api.createSession(file, file.name);
  const state = new ViewState(info.session, info.width, info.height);
  controller = new SessionController(api, state);
  imageBitmap = await createImageBitmap(file);
  const scale = Math.max(1, Math.floor(512 / Math.max(info.width, info.height)));
  canvas.width = info.width * scale;
  canvas.height = info.height * scale;
  setStatus(`session ${info.session.slice(0, 8)} (${info.width}x${info.height})`);
  await redraw();
}

function canvasToImage(ev: PointerEvent): { x: number; y: number } | null {
  if (!controller) return null;
  const rect = canvas.getBoundingClientRect();
  const x = Math.floor(
    ((ev.clientX - rect.left) / rect.width) * controller.state.width,
  );
  const y = Math.floor(
    ((ev.clientY - rect.top) / rect.height) * controller.state.height,
  );
  if (x < 0 || y < 0 || x >= controller.state.width || y >= controller.state.height)
    return null;
  return { x, y };
}

let activeStroke: ScribbleStroke | null = null;

canvas.addEventListener("pointerdown", (ev) => {
  const pt = canvasToImage(ev);
  if (!pt || !controller) return;
  activeStroke = { label: currentLabel, points: [pt], brushRadius };
  canvas.setPointerCapture(ev.pointerId);
});

canvas.addEventListener("pointermove", (ev) => {
  if (!activeStroke) return;
  const pt = canvasToImage(ev);
  if (pt) activeStroke.points.push(pt);
});

canvas.addEventListener("pointerup", async () => {
  if (!activeStroke || !controller) return;
  const stroke = activeStroke;
  activeStroke = null;
  const pixels = rasterizeStrokes(
    [stroke],
    controller.state.width,
    controller.state.height,
  );
  await controller.addScribbles(pixels);
  await redraw();
});

el<HTMLInputElement>("file").addEventListener("change", (ev) => {
  const file = (ev.target as HTMLInputElement).files?.[0];
  if (file) void upload(file);
});

for (const label of ["object", "background"] as const) {
  el<HTMLInputElement>(`label-${label}`).addEventListener("change", () => {
    currentLabel = label;
  });
}

el<HTMLInputElement>("brush").addEventListener("input", (ev) => {
  brushRadius = Number((ev.target as HTMLInputElement).value);
  el<HTMLSpanElement>("brush-value").textContent = String(brushRadius);
});

el<HTMLInputElement>("overlay-toggle").addEventListener("change", (ev) => {
  overlayVisible = (ev.target as HTMLInputElement).checked;
  void redraw();
});

el<HTMLButtonElement>("segment").addEventListener("click", async () => {
  if (!controller) return;
  setStatus("segmenting…");
  const t0 = performance.now();
  try {
    const params = {
      n_s: Number(el<HTMLInputElement>("param-ns").value),
      lambda: Number(el<HTMLInputElement>("param-lambda").value),
      alpha: Number(el<HTMLInputElement>("param-alpha").value),
      beta: Number(el<HTMLInputElement>("param-beta").value),
    };
    controller.state.params = { ...controller.state.params, ...params };
    const result = await controller.segment();
    const dt = ((performance.now() - t0) / 1000).toFixed(1);
    setStatus(
      `${result.method}: ncut=${result.ncut_value.toFixed(4)} rev=${result.revision} (${dt}s)`,
    );
  } catch (err) {
    setStatus(`error: ${(err as Error).message}`);
  }
  await redraw();
});
