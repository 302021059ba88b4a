import { z } from "zod";

export const scribbleSchema = z.object({
  class_id: z.number().int(),
  region_id: z.number().int(),
  instance_id: z.number().int().nullable(),
  thickness: z.number().int().positive(),
  points: z.array(z.tuple([z.number().int(), z.number().int()])).min(1),
});

export const scribbleSetSchema = z.object({
  scribbles: z.array(scribbleSchema),
  class_map: z.record(z.string(), z.enum(["thing", "stuff"])),
});

export type ScribbleJson = z.infer<typeof scribbleSchema>;
export type ScribbleSetJson = z.infer<typeof scribbleSetSchema>;

export type ClassKind = "thing" | "stuff";

export interface ClassInfo {
  id: number;
  kind: ClassKind;
  name?: string;
}

export interface ArtifactUrls {
  class_map: string;
  instance_map: string;
  overlay: string;
}

export interface RoundResult {
  round: number;
  status: string;
  report: Record<string, unknown>;
  pngs: ArtifactUrls;
}

export interface PolicyRejection {
  detail: string;
  violations: [string, string][];
}
