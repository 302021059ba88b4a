import { ClassInfo, ScribbleJson, ScribbleSetJson, scribbleSetSchema } from "./types.js";

/**
 * Records one pointer trace and downsamples it to at most one point per
 * `minSpacing` pixels (default 2). Coordinates are rounded to integers and
 * clamped to the image bounds.
 */
export class ScribbleCapture {
  private raw: [number, number][] = [];

  constructor(
    readonly width: number,
    readonly height: number,
    readonly minSpacing = 2,
  ) {}

  begin(x: number, y: number): void {
    this.raw = [[x, y]];
  }

  move(x: number, y: number): void {
    if (this.raw.length === 0) {
      throw new Error("move() before begin()");
    }
    this.raw.push([x, y]);
  }

  /** Finish the trace and return the downsampled integer polyline. */
  end(): [number, number][] {
    if (this.raw.length === 0) {
      throw new Error("end() before begin()");
    }
    const clamp = ([x, y]: [number, number]): [number, number] => [
      Math.min(Math.max(Math.round(x), 0), this.width - 1),
      Math.min(Math.max(Math.round(y), 0), this.height - 1),
    ];
    const kept: [number, number][] = [clamp(this.raw[0])];
    for (let i = 1; i < this.raw.length; i++) {
      const point = clamp(this.raw[i]);
      const last = kept[kept.length - 1];
      const dist = Math.hypot(point[0] - last[0], point[1] - last[1]);
      if (dist >= this.minSpacing) {
        kept.push(point);
      } else if (i === this.raw.length - 1 && dist > 0 && kept.length > 1) {
        kept[kept.length - 1] = point; // keep the endpoint without densifying
      }
    }
    this.raw = [];
    return kept;
  }
}

/**
 * The working scribble set of one session: assigns region ids, enforces the
 * thing/stuff instance rules, and emits wire-format JSON.
 */
export class WorkingSet {
  readonly scribbles: ScribbleJson[] = [];
  private readonly kinds = new Map<number, "thing" | "stuff">();

  constructor(classes: ClassInfo[]) {
    for (const info of classes) {
      this.kinds.set(info.id, info.kind);
    }
  }

  requiresInstance(classId: number): boolean {
    return this.kinds.get(classId) === "thing";
  }

  nextRegionId(): number {
    let next = 0;
    for (const s of this.scribbles) {
      next = Math.max(next, s.region_id + 1);
    }
    return next;
  }

  addStroke(
    points: [number, number][],
    classId: number,
    options: { instanceId?: number; thickness?: number } = {},
  ): ScribbleJson {
    if (points.length === 0) {
      throw new Error("a scribble needs at least one point");
    }
    if (!this.kinds.has(classId)) {
      throw new Error(`unknown class ${classId}`);
    }
    const needsInstance = this.requiresInstance(classId);
    if (needsInstance && options.instanceId === undefined) {
      throw new Error(`class ${classId} is a thing: pick an instance first`);
    }
    if (!needsInstance && options.instanceId !== undefined) {
      throw new Error(`class ${classId} is stuff: it carries no instance`);
    }
    const scribble: ScribbleJson = {
      class_id: classId,
      region_id: this.nextRegionId(),
      instance_id: needsInstance ? options.instanceId! : null,
      thickness: options.thickness ?? 3,
      points: points.map(([x, y]) => [x, y]),
    };
    this.scribbles.push(scribble);
    return scribble;
  }

  removeLast(): ScribbleJson | undefined {
    return this.scribbles.pop();
  }

  toJSON(): ScribbleSetJson {
    const doc = {
      scribbles: this.scribbles,
      class_map: Object.fromEntries(
        [...this.kinds.entries()].map(([id, kind]) => [String(id), kind]),
      ),
    };
    return scribbleSetSchema.parse(doc);
  }
}
