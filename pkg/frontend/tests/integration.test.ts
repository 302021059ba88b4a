/**
 * End-to-end against the real service: a scripted drawing session whose
 * scribble JSON passes the server validator, followed by three correction
 * rounds, each rendered into an overlay client-side.
 */

import { spawn, ChildProcess } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ScribbleCapture, WorkingSet } from "../src/capture.js";
import { ServiceClient } from "../src/client.js";
import { blendClassOverlay, composeView, strokeBoundaries } from "../src/overlay.js";
import { decodePng, encodePngRgb } from "../src/png.js";
import { RoundStore } from "../src/rounds.js";
import { RoundResult } from "../src/types.js";

const SIZE = 48;
let server: ChildProcess;
let client: ServiceClient;

function testImage(): Promise<Uint8Array> {
  // left half red-ish, right half green-ish, blue square bottom-right
  const rgb = new Uint8Array(SIZE * SIZE * 3);
  for (let y = 0; y < SIZE; y++) {
    for (let x = 0; x < SIZE; x++) {
      const i = (y * SIZE + x) * 3;
      if (x >= 32 && y >= 32) {
        rgb.set([40, 40, 220], i);
      } else if (x < SIZE / 2) {
        rgb.set([220, 50, 50], i);
      } else {
        rgb.set([50, 220, 50], i);
      }
    }
  }
  return encodePngRgb(rgb, SIZE, SIZE);
}

function dragStroke(set: WorkingSet, trace: [number, number][], classId: number,
                    instanceId?: number) {
  const capture = new ScribbleCapture(SIZE, SIZE);
  capture.begin(trace[0][0], trace[0][1]);
  for (const [x, y] of trace.slice(1)) {
    capture.move(x, y);
  }
  return set.addStroke(capture.end(), classId, { instanceId, thickness: 3 });
}

async function startServer(): Promise<{ proc: ChildProcess; base: string }> {
  for (let attempt = 0; attempt < 5; attempt++) {
    const port = 18200 + Math.floor(Math.random() * 2000);
    const proc = spawn(
      "python3",
      ["-m", "cseg.service", "--bind", "127.0.0.1", "--port", String(port)],
      { stdio: ["ignore", "pipe", "pipe"] },
    );
    const base = `http://127.0.0.1:${port}`;
    const deadline = Date.now() + 30_000;
    while (Date.now() < deadline) {
      if (proc.exitCode !== null) break; // port taken; try another
      try {
        const resp = await fetch(`${base}/sessions/probe/segmentation`);
        if (resp.status === 404) {
          return { proc, base };
        }
      } catch {
        await new Promise((r) => setTimeout(r, 150));
      }
    }
    proc.kill();
  }
  throw new Error("could not start the annotation service");
}

beforeAll(async () => {
  const started = await startServer();
  server = started.proc;
  client = new ServiceClient(started.base);
}, 60_000);

afterAll(() => {
  server?.kill();
});

describe("scripted annotation session", () => {
  it("draws, solves, and renders three correction rounds", async () => {
    const image = await testImage();
    const sessionId = await client.createSession({
      image,
      config: { algorithm: "l0h", eta: 0.1, superpixel_target: 64 },
    });
    expect(sessionId).toMatch(/^[0-9a-f]+$/);

    const working = new WorkingSet([
      { id: 0, kind: "stuff", name: "red" },
      { id: 1, kind: "stuff", name: "green" },
      { id: 2, kind: "thing", name: "blue-box" },
    ]);
    dragStroke(working, [[4, 6], [4, 28]], 0);
    dragStroke(working, [[43, 4], [43, 20]], 1);

    const first = await client.postScribbles(sessionId, working.toJSON());
    expect(first.ok).toBe(true);
    const round0 = (first as { ok: true; result: RoundResult }).result;
    expect(round0.round).toBe(0);

    const corrections: Array<{
      trace: [number, number][];
      classId: number;
      instanceId?: number;
    }> = [
      { trace: [[36, 38], [44, 38]], classId: 2, instanceId: 1 },
      { trace: [[20, 44], [28, 44]], classId: 0 },
      { trace: [[20, 4], [28, 4]], classId: 1 },
    ];

    const store = new RoundStore();
    store.record(round0);
    let previousClassMap: Uint16Array | null = null;
    for (const [index, correction] of corrections.entries()) {
      const stroke = dragStroke(
        working, correction.trace, correction.classId, correction.instanceId,
      );
      const outcome = await client.postScribbles(sessionId, working.toJSON());
      expect(outcome.ok).toBe(true); // zero policy violations, round triggered
      const result = (outcome as { ok: true; result: RoundResult }).result;
      expect(result.round).toBe(index + 1);
      store.record(result);

      // render the round: decode artifacts and composite the overlay
      const artifacts = await client.getArtifacts(result.pngs);
      const classPng = await decodePng(artifacts.classMap);
      const instancePng = await decodePng(artifacts.instanceMap);
      expect(classPng.width).toBe(SIZE);
      expect(classPng.depth).toBe(16);
      const basePng = await decodePng(image);
      const rgba = new Uint8ClampedArray(SIZE * SIZE * 4);
      const src = basePng.data as Uint8Array;
      for (let i = 0; i < SIZE * SIZE; i++) {
        rgba[4 * i] = src[3 * i];
        rgba[4 * i + 1] = src[3 * i + 1];
        rgba[4 * i + 2] = src[3 * i + 2];
        rgba[4 * i + 3] = 255;
      }
      const composed = composeView(
        {
          base: rgba,
          width: SIZE,
          height: SIZE,
          classMap: classPng.data,
          instanceMap: instancePng.data,
        },
        { overlay: true, superpixels: false },
      );
      expect(composed.length).toBe(SIZE * SIZE * 4);
      expect([...composed]).not.toEqual([...rgba]); // the overlay did something
      // hard-constraint semantics: the new stroke's pixels carry its class
      const classData = classPng.data as Uint16Array;
      for (const [x, y] of stroke.points) {
        expect(classData[y * SIZE + x]).toBe(correction.classId);
      }
      // the server overlay artifact decodes as an image of the right size
      const overlayPng = await decodePng(artifacts.overlay);
      expect(overlayPng.width).toBe(SIZE);
      previousClassMap = classData;
    }
    expect(previousClassMap).not.toBeNull();

    // immutability: repeated artifact fetches are byte-identical
    const latest = store.latest()!;
    const once = await client.getArtifact(latest.pngs.class_map);
    const twice = await client.getArtifact(latest.pngs.class_map);
    expect(Buffer.from(once).equals(Buffer.from(twice))).toBe(true);

    // refresh safety: the store reconstructs from server artifacts alone
    const rebuilt = await RoundStore.reconstruct(client, sessionId);
    expect(rebuilt.list().map((r) => r.round)).toEqual([0, 1, 2, 3]);

    // the validator rejects a policy-violating set with an inline report
    const bad = working.toJSON();
    bad.scribbles = [...bad.scribbles, { ...bad.scribbles[0] }]; // duplicate region
    const rejected = await client.postScribbles(sessionId, bad);
    expect(rejected.ok).toBe(false);
    if (!rejected.ok) {
      expect(rejected.rejection.violations.length).toBeGreaterThan(0);
      expect(rejected.rejection.violations[0][0]).toBe("duplicate_region");
    }
  }, 120_000);
});
