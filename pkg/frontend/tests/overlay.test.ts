import { describe, expect, it } from "vitest";

import {
  blendClassOverlay,
  classPalette,
  composeView,
  strokeBoundaries,
} from "../src/overlay.js";

function solidBase(width: number, height: number, value = 200): Uint8ClampedArray {
  const base = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    base[4 * i] = base[4 * i + 1] = base[4 * i + 2] = value;
    base[4 * i + 3] = 255;
  }
  return base;
}

describe("classPalette", () => {
  it("is deterministic and distinct for nearby ids", () => {
    expect(classPalette(3)).toEqual(classPalette(3));
    expect(classPalette(0)).not.toEqual(classPalette(1));
  });
});

describe("blendClassOverlay", () => {
  it("mixes base and class color at the given alpha", () => {
    const base = solidBase(2, 1);
    const classMap = [5, 5];
    const out = blendClassOverlay(base, 2, 1, classMap, 0.5);
    const [r, g, b] = classPalette(5);
    // clamped arrays round half to even, so allow one count of slack
    expect(Math.abs(out[0] - (0.5 * 200 + 0.5 * r))).toBeLessThanOrEqual(0.5);
    expect(Math.abs(out[1] - (0.5 * 200 + 0.5 * g))).toBeLessThanOrEqual(0.5);
    expect(Math.abs(out[2] - (0.5 * 200 + 0.5 * b))).toBeLessThanOrEqual(0.5);
    expect(out[3]).toBe(255);
  });

  it("alpha zero reproduces the base", () => {
    const base = solidBase(3, 3, 123);
    const out = blendClassOverlay(base, 3, 3, new Array(9).fill(1), 0);
    expect([...out]).toEqual([...base]);
  });
});

describe("strokeBoundaries", () => {
  it("darkens only pixels adjacent to a different id", () => {
    const rgba = solidBase(3, 1, 100);
    strokeBoundaries(rgba, 3, 1, [1, 1, 2]);
    expect(rgba[0]).toBe(100); // interior
    expect(rgba[4]).toBe(25); // boundary against the different neighbor
    expect(rgba[8]).toBe(100); // last pixel has no right neighbor
  });
});

describe("composeView", () => {
  it("toggles the overlay and superpixel layers independently", () => {
    const base = solidBase(2, 2);
    const inputs = {
      base,
      width: 2,
      height: 2,
      classMap: [0, 0, 0, 0],
      superpixelMap: [0, 1, 0, 1],
    };
    const raw = composeView(inputs, { overlay: false, superpixels: false });
    expect([...raw]).toEqual([...base]);
    const withOverlay = composeView(inputs, { overlay: true, superpixels: false });
    expect([...withOverlay]).not.toEqual([...base]);
    const withSp = composeView(inputs, { overlay: false, superpixels: true });
    expect(withSp[0]).toBeLessThan(base[0]); // boundary darkened
  });
});
