import { ApiError, ServiceConfig, getConfig } from "./api";
import { SessionHistory } from "./history";
import { overlayRects } from "./overlay";
import { decodeRasterPng, encodeRasterPng } from "./png";
import { Raster, StrokePoint, stampStroke } from "./raster";
import { CanvasState } from "./state";
import { JobFailedError, Studio } from "./studio";

const sketchCanvas = document.getElementById("sketch") as HTMLCanvasElement;
const resultImg = document.getElementById("result") as HTMLImageElement;
const brushBtn = document.getElementById("brushBtn") as HTMLButtonElement;
const eraserBtn = document.getElementById("eraserBtn") as HTMLButtonElement;
const widthInput = document.getElementById("brushWidth") as HTMLInputElement;
const undoBtn = document.getElementById("undoBtn") as HTMLButtonElement;
const redoBtn = document.getElementById("redoBtn") as HTMLButtonElement;
const clearBtn = document.getElementById("clearBtn") as HTMLButtonElement;
const overlayCheck = document.getElementById("overlayCheck") as HTMLInputElement;
const maskBoxes = document.getElementById("maskBoxes") as HTMLElement;
const samplerSelect = document.getElementById("sampler") as HTMLSelectElement;
const stepsInput = document.getElementById("steps") as HTMLInputElement;
const seedInput = document.getElementById("seed") as HTMLInputElement;
const submitBtn = document.getElementById("submitBtn") as HTMLButtonElement;
const exportBtn = document.getElementById("exportBtn") as HTMLButtonElement;
const importInput = document.getElementById("importInput") as HTMLInputElement;
const historyList = document.getElementById("historyList") as HTMLElement;
const banner = document.getElementById("banner") as HTMLElement;
const statusLine = document.getElementById("statusLine") as HTMLElement;

const ctx = sketchCanvas.getContext("2d")!;

// API base: same origin by default, overridable for dev setups where the
// page is served separately from the synthesis service (the service answers
// cross-origin requests), e.g. index.html?api=http://127.0.0.1:8000
const apiBase = new URLSearchParams(window.location.search).get("api") ?? "";

let state = new CanvasState(256);
let config: ServiceConfig = { model: null };
const studio = new Studio(apiBase, new SessionHistory());
let mode: "draw" | "erase" = "draw";
let drawing = false;
let currentPath: StrokePoint[] = [];

function showBanner(text: string): void {
  banner.textContent = text;
  banner.hidden = text === "";
}

function toRasterPoint(ev: PointerEvent): StrokePoint {
  const rect = sketchCanvas.getBoundingClientRect();
  return {
    x: ((ev.clientX - rect.left) / rect.width) * state.size,
    y: ((ev.clientY - rect.top) / rect.height) * state.size,
  };
}

function render(raster: Raster = state.ink): void {
  const display = sketchCanvas.width;
  const image = ctx.createImageData(display, display);
  const scale = raster.size / display;
  for (let y = 0; y < display; y++) {
    for (let x = 0; x < display; x++) {
      const sx = Math.min(raster.size - 1, Math.floor(x * scale));
      const sy = Math.min(raster.size - 1, Math.floor(y * scale));
      const ink = raster.data[sy * raster.size + sx];
      const at = (y * display + x) * 4;
      const v = ink ? 20 : 250;
      image.data[at] = v;
      image.data[at + 1] = v;
      image.data[at + 2] = v;
      image.data[at + 3] = 255;
    }
  }
  ctx.putImageData(image, 0, 0);
  if (state.overlayVisible && config.layout) {
    ctx.save();
    ctx.strokeStyle = "rgba(200, 60, 40, 0.8)";
    ctx.lineWidth = 1;
    ctx.font = "10px sans-serif";
    ctx.fillStyle = "rgba(200, 60, 40, 0.9)";
    for (const r of overlayRects(config.layout, display)) {
      ctx.strokeRect(r.x, r.y, r.w, r.h);
      ctx.fillText(r.name, r.x + 2, r.y + 10);
    }
    ctx.restore();
  }
  undoBtn.disabled = state.undoDepth === 0;
  redoBtn.disabled = state.redoDepth === 0;
}

function renderHistory(): void {
  historyList.replaceChildren();
  studio.history.list().forEach((entry, k) => {
    const item = document.createElement("div");
    item.className = "history-item";
    const label = document.createElement("span");
    label.textContent = `#${k + 1} ${entry.params.sampler} seed=${entry.params.seed ?? "auto"}`;
    const restore = document.createElement("button");
    restore.textContent = "restore sketch";
    restore.onclick = () => {
      state.restore(studio.history.sketchOf(k));
      render();
    };
    item.append(label, restore);
    if (entry.result) {
      const thumb = document.createElement("img");
      thumb.src = `data:image/png;base64,${entry.result}`;
      thumb.className = "thumb";
      thumb.onclick = () => {
        resultImg.src = thumb.src;
      };
      item.append(thumb);
    }
    historyList.append(item);
  });
}

function maskedRegions(): string[] {
  return Array.from(
    maskBoxes.querySelectorAll<HTMLInputElement>("input:checked"),
    (el) => el.value,
  );
}

sketchCanvas.onpointerdown = (ev) => {
  drawing = true;
  sketchCanvas.setPointerCapture(ev.pointerId);
  currentPath = [toRasterPoint(ev)];
};
sketchCanvas.onpointermove = (ev) => {
  if (!drawing) return;
  currentPath.push(toRasterPoint(ev));
  // live preview on a scratch copy: undo granularity stays one stroke
  const preview = state.snapshot();
  stampStroke(preview, currentPath, Number(widthInput.value), mode);
  render(preview);
};
sketchCanvas.onpointerup = (ev) => {
  if (!drawing) return;
  drawing = false;
  currentPath.push(toRasterPoint(ev));
  state.applyStroke(currentPath, Number(widthInput.value), mode);
  currentPath = [];
  render();
};

brushBtn.onclick = () => {
  mode = "draw";
  brushBtn.classList.add("active");
  eraserBtn.classList.remove("active");
};
eraserBtn.onclick = () => {
  mode = "erase";
  eraserBtn.classList.add("active");
  brushBtn.classList.remove("active");
};
undoBtn.onclick = () => {
  state.undo();
  render();
};
redoBtn.onclick = () => {
  state.redo();
  render();
};
clearBtn.onclick = () => {
  state.clear();
  render();
};
overlayCheck.onchange = () => {
  state.overlayVisible = overlayCheck.checked;
  render();
};

submitBtn.onclick = async () => {
  showBanner("");
  submitBtn.disabled = true;
  statusLine.textContent = "synthesizing…";
  try {
    const entry = await studio.synthesize(state, {
      steps: stepsInput.value ? Number(stepsInput.value) : null,
      sampler: samplerSelect.value,
      seed: seedInput.value ? Number(seedInput.value) : null,
      maskedRegions: maskedRegions(),
    });
    if (entry.result) {
      resultImg.src = `data:image/png;base64,${entry.result}`;
    }
    statusLine.textContent = `job ${entry.jobId} done`;
    renderHistory();
  } catch (err) {
    if (err instanceof ApiError) {
      showBanner(`service rejected the request (${err.status}): ${err.detail}`);
    } else if (err instanceof JobFailedError) {
      showBanner(err.message);
    } else {
      showBanner(`service unreachable: ${(err as Error).message}`);
    }
    statusLine.textContent = "";
  } finally {
    submitBtn.disabled = false;
  }
};

exportBtn.onclick = async () => {
  const bytes = await encodeRasterPng(state.snapshot());
  const blob = new Blob([bytes.slice().buffer], { type: "image/png" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = "sketch.png";
  a.click();
  URL.revokeObjectURL(a.href);
};

importInput.onchange = async () => {
  const file = importInput.files?.[0];
  if (!file) return;
  try {
    const raster = await decodeRasterPng(new Uint8Array(await file.arrayBuffer()));
    state.restore(raster);
    render();
    showBanner("");
  } catch (err) {
    showBanner(`could not import sketch: ${(err as Error).message}`);
  }
  importInput.value = "";
};

async function boot(): Promise<void> {
  try {
    config = await getConfig(apiBase);
  } catch {
    showBanner("service unreachable; drawing offline");
  }
  if (config.canvas && config.canvas !== state.size) {
    state = new CanvasState(config.canvas);
  }
  if (config.model === null) {
    showBanner("service has no model loaded; submissions will fail");
  }
  if (config.samplers) {
    samplerSelect.replaceChildren(
      ...config.samplers.map((name) => new Option(name, name, name === "ddim", name === "ddim")),
    );
  }
  if (config.default_steps) stepsInput.value = String(config.default_steps);
  if (config.regions) {
    maskBoxes.replaceChildren(
      ...config.regions.map((name) => {
        const label = document.createElement("label");
        const box = document.createElement("input");
        box.type = "checkbox";
        box.value = name;
        label.append(box, ` ${name}`);
        return label;
      }),
    );
  }
  render();
}

void boot();
