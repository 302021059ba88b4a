/**
 * Client-side compositing of round artifacts: class colors alpha-blended
 * over the image, instance boundaries stroked, and view toggles.
 */

export type Rgb = [number, number, number];

/** Stable, well-spread color per class id (golden-angle hue walk). */
export function classPalette(classId: number): Rgb {
  const hue = (classId * 0.61803398875) % 1.0;
  const s = 0.65;
  const v = 0.95;
  const i = Math.floor(hue * 6);
  const f = hue * 6 - i;
  const p = v * (1 - s);
  const q = v * (1 - f * s);
  const t = v * (1 - (1 - f) * s);
  const pick: Rgb[] = [
    [v, t, p],
    [q, v, p],
    [p, v, t],
    [p, q, v],
    [t, p, v],
    [v, p, q],
  ];
  const [r, g, b] = pick[i % 6];
  return [Math.round(r * 255), Math.round(g * 255), Math.round(b * 255)];
}

/** Alpha-blend per-pixel class colors over an RGBA image buffer. */
export function blendClassOverlay(
  base: Uint8ClampedArray,
  width: number,
  height: number,
  classMap: ArrayLike<number>,
  alpha = 0.5,
): Uint8ClampedArray {
  if (base.length !== width * height * 4) throw new Error("base size mismatch");
  const out = new Uint8ClampedArray(base.length);
  for (let i = 0; i < width * height; i++) {
    const [r, g, b] = classPalette(classMap[i]);
    out[4 * i] = (1 - alpha) * base[4 * i] + alpha * r;
    out[4 * i + 1] = (1 - alpha) * base[4 * i + 1] + alpha * g;
    out[4 * i + 2] = (1 - alpha) * base[4 * i + 2] + alpha * b;
    out[4 * i + 3] = 255;
  }
  return out;
}

/** Darken pixels whose 4-neighbor carries a different id (in place). */
export function strokeBoundaries(
  rgba: Uint8ClampedArray,
  width: number,
  height: number,
  idMap: ArrayLike<number>,
  factor = 0.25,
): Uint8ClampedArray {
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const i = y * width + x;
      const boundary =
        (x + 1 < width && idMap[i] !== idMap[i + 1]) ||
        (y + 1 < height && idMap[i] !== idMap[i + width]);
      if (boundary) {
        rgba[4 * i] *= factor;
        rgba[4 * i + 1] *= factor;
        rgba[4 * i + 2] *= factor;
      }
    }
  }
  return rgba;
}

export interface ViewToggles {
  overlay: boolean;
  superpixels: boolean;
}

export interface ViewInputs {
  base: Uint8ClampedArray;
  width: number;
  height: number;
  classMap?: ArrayLike<number>;
  instanceMap?: ArrayLike<number>;
  superpixelMap?: ArrayLike<number>;
  alpha?: number;
}

/** Compose one view per the toggles: raw image, overlay, boundary layers. */
export function composeView(inputs: ViewInputs, toggles: ViewToggles): Uint8ClampedArray {
  const { base, width, height } = inputs;
  let out: Uint8ClampedArray = new Uint8ClampedArray(base);
  if (toggles.overlay && inputs.classMap) {
    out = blendClassOverlay(out, width, height, inputs.classMap, inputs.alpha ?? 0.5);
    if (inputs.instanceMap) {
      strokeBoundaries(out, width, height, inputs.instanceMap);
    }
  }
  if (toggles.superpixels && inputs.superpixelMap) {
    strokeBoundaries(out, width, height, inputs.superpixelMap, 0.55);
  }
  return out;
}
