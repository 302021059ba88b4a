/**
 * Browser glue: canvas drawing, class palette buttons, round scrubber.
 * All segmentation work happens on the server; this file only wires the
 * capture/overlay/client modules to DOM events.
 */

import { ScribbleCapture, WorkingSet } from "./capture.js";
import { ServiceClient } from "./client.js";
import { classPalette, composeView, ViewToggles } from "./overlay.js";
import { decodePng } from "./png.js";
import { RoundStore } from "./rounds.js";
import { ClassInfo, RoundResult } from "./types.js";

interface UiState {
  sessionId: string | null;
  classes: ClassInfo[];
  selectedClass: number;
  selectedInstance: number;
  working: WorkingSet;
  rounds: RoundStore;
  toggles: ViewToggles;
  busy: boolean;
  imageRgba: Uint8ClampedArray | null;
  width: number;
  height: number;
}

const DEFAULT_CLASSES: ClassInfo[] = [
  { id: 0, kind: "stuff", name: "background" },
  { id: 1, kind: "thing", name: "object" },
  { id: 2, kind: "stuff", name: "surface" },
];

export function boot(root: Document = document): void {
  const canvas = root.getElementById("canvas") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const status = root.getElementById("status")!;
  const solveButton = root.getElementById("solve") as HTMLButtonElement;
  const fileInput = root.getElementById("image") as HTMLInputElement;
  const classBar = root.getElementById("classes")!;
  const scrubber = root.getElementById("rounds")!;
  const instanceInput = root.getElementById("instance") as HTMLInputElement;

  const client = new ServiceClient(window.location.origin.replace(/:\d+$/, ":8571"));
  const state: UiState = {
    sessionId: null,
    classes: DEFAULT_CLASSES,
    selectedClass: DEFAULT_CLASSES[0].id,
    selectedInstance: 1,
    working: new WorkingSet(DEFAULT_CLASSES),
    rounds: new RoundStore(),
    toggles: { overlay: true, superpixels: false },
    busy: false,
    imageRgba: null,
    width: 0,
    height: 0,
  };

  let capture: ScribbleCapture | null = null;
  let latestClassMap: Uint16Array | null = null;
  let latestInstanceMap: Uint16Array | null = null;

  function say(text: string): void {
    status.textContent = text;
  }

  function redraw(): void {
    if (!state.imageRgba) return;
    const composed = composeView(
      {
        base: state.imageRgba,
        width: state.width,
        height: state.height,
        classMap: latestClassMap ?? undefined,
        instanceMap: latestInstanceMap ?? undefined,
      },
      state.toggles,
    );
    const pixels = new Uint8ClampedArray(composed);
    ctx.putImageData(new ImageData(pixels, state.width, state.height), 0, 0);
    ctx.save();
    for (const s of state.working.scribbles) {
      const [r, g, b] = classPalette(s.class_id);
      ctx.strokeStyle = `rgb(${r},${g},${b})`;
      ctx.lineWidth = s.thickness;
      ctx.beginPath();
      ctx.moveTo(s.points[0][0], s.points[0][1]);
      for (const [x, y] of s.points.slice(1)) {
        ctx.lineTo(x, y);
      }
      ctx.stroke();
    }
    ctx.restore();
  }

  function renderClassBar(): void {
    classBar.replaceChildren();
    for (const info of state.classes) {
      const button = root.createElement("button");
      const [r, g, b] = classPalette(info.id);
      button.style.background = `rgb(${r},${g},${b})`;
      button.textContent = `${info.name ?? info.id}${info.kind === "thing" ? " *" : ""}`;
      button.onclick = () => {
        state.selectedClass = info.id;
        instanceInput.style.display = info.kind === "thing" ? "" : "none";
      };
      classBar.appendChild(button);
    }
  }

  function renderScrubber(): void {
    scrubber.replaceChildren();
    for (const result of state.rounds.list()) {
      const button = root.createElement("button");
      button.textContent = `round ${result.round}`;
      button.onclick = () => void showRound(result);
      scrubber.appendChild(button);
    }
  }

  async function showRound(result: RoundResult): Promise<void> {
    const artifacts = await client.getArtifacts(result.pngs);
    const classPng = await decodePng(artifacts.classMap);
    const instancePng = await decodePng(artifacts.instanceMap);
    latestClassMap = classPng.data as Uint16Array;
    latestInstanceMap = instancePng.data as Uint16Array;
    redraw();
  }

  fileInput.onchange = async () => {
    const file = fileInput.files?.[0];
    if (!file) return;
    const bytes = new Uint8Array(await file.arrayBuffer());
    const png = await decodePng(bytes);
    state.width = png.width;
    state.height = png.height;
    canvas.width = png.width;
    canvas.height = png.height;
    const rgba = new Uint8ClampedArray(png.width * png.height * 4);
    const src = png.data as Uint8Array;
    for (let i = 0; i < png.width * png.height; i++) {
      const offset = i * png.channels;
      rgba[4 * i] = src[offset];
      rgba[4 * i + 1] = src[offset + (png.channels > 1 ? 1 : 0)];
      rgba[4 * i + 2] = src[offset + (png.channels > 1 ? 2 : 0)];
      rgba[4 * i + 3] = 255;
    }
    state.imageRgba = rgba;
    state.sessionId = await client.createSession({ image: bytes, config: {} });
    say(`session ${state.sessionId}`);
    redraw();
  };

  canvas.onpointerdown = (event) => {
    if (!state.imageRgba) return;
    capture = new ScribbleCapture(state.width, state.height);
    const rect = canvas.getBoundingClientRect();
    capture.begin(event.clientX - rect.left, event.clientY - rect.top);
  };
  canvas.onpointermove = (event) => {
    if (!capture) return;
    const rect = canvas.getBoundingClientRect();
    capture.move(event.clientX - rect.left, event.clientY - rect.top);
  };
  canvas.onpointerup = () => {
    if (!capture) return;
    const points = capture.end();
    capture = null;
    const kind = state.classes.find((c) => c.id === state.selectedClass)?.kind;
    try {
      state.working.addStroke(points, state.selectedClass, {
        instanceId: kind === "thing" ? Number(instanceInput.value) : undefined,
      });
    } catch (err) {
      say(String(err));
      return;
    }
    redraw();
  };

  solveButton.onclick = async () => {
    if (!state.sessionId || state.busy) return;
    state.busy = true;
    solveButton.disabled = true; // one in-flight solve per session
    say("solving...");
    try {
      const outcome = await client.postScribbles(state.sessionId, state.working.toJSON());
      if (!outcome.ok) {
        say(`policy violations: ${outcome.rejection.violations.map(([k]) => k).join(", ")}`);
        return;
      }
      state.rounds.record(outcome.result);
      renderScrubber();
      await showRound(outcome.result);
      say(`round ${outcome.result.round} done`);
    } finally {
      state.busy = false;
      solveButton.disabled = false;
    }
  };

  root.addEventListener("keydown", (event) => {
    if (event.key === "o") state.toggles.overlay = !state.toggles.overlay;
    if (event.key === "s") state.toggles.superpixels = !state.toggles.superpixels;
    redraw();
  });

  renderClassBar();
  say("load an image to start");
}

if (typeof document !== "undefined" && document.getElementById("canvas")) {
  boot();
}
