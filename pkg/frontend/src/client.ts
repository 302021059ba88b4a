import {
  ArtifactUrls,
  PolicyRejection,
  RoundResult,
  ScribbleSetJson,
} from "./types.js";

export type FetchLike = typeof fetch;

export class ServiceError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

/** Typed client for the session API; the UI never computes segmentations. */
export class ServiceClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = fetch,
  ) {}

  private url(path: string): string {
    return new URL(path, this.baseUrl).toString();
  }

  async createSession(parts: {
    image: Uint8Array;
    superpixels?: Uint8Array;
    probmap?: Uint8Array;
    config?: Record<string, unknown>;
  }): Promise<string> {
    const form = new FormData();
    form.append("image", new Blob([parts.image as BlobPart], { type: "image/png" }), "image.png");
    if (parts.superpixels) {
      form.append(
        "superpixels",
        new Blob([parts.superpixels as BlobPart], { type: "image/png" }),
        "superpixels.png",
      );
    }
    if (parts.probmap) {
      form.append(
        "probmap",
        new Blob([parts.probmap as BlobPart], { type: "application/octet-stream" }),
        "probmap.cseg",
      );
    }
    form.append("config", JSON.stringify(parts.config ?? {}));
    const resp = await this.fetchFn(this.url("/sessions"), {
      method: "POST",
      body: form,
    });
    if (resp.status !== 201) {
      throw new ServiceError(resp.status, await resp.text());
    }
    const body = (await resp.json()) as { id: string };
    return body.id;
  }

  /**
   * Submit the full scribble set for the next round. Policy rejections come
   * back as a value (the UI renders them inline), other errors throw.
   */
  async postScribbles(
    sessionId: string,
    scribbles: ScribbleSetJson,
  ): Promise<{ ok: true; result: RoundResult } | { ok: false; rejection: PolicyRejection }> {
    const resp = await this.fetchFn(this.url(`/sessions/${sessionId}/scribbles`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(scribbles),
    });
    if (resp.status === 422) {
      return { ok: false, rejection: (await resp.json()) as PolicyRejection };
    }
    if (!resp.ok) {
      throw new ServiceError(resp.status, await resp.text());
    }
    return { ok: true, result: (await resp.json()) as RoundResult };
  }

  async getSegmentation(sessionId: string, round?: number): Promise<RoundResult | null> {
    const suffix = round === undefined ? "" : `?round=${round}`;
    const resp = await this.fetchFn(this.url(`/sessions/${sessionId}/segmentation${suffix}`));
    if (resp.status === 404) {
      return null;
    }
    if (resp.status === 202) {
      return (await resp.json()) as RoundResult; // status: running
    }
    if (!resp.ok) {
      throw new ServiceError(resp.status, await resp.text());
    }
    return (await resp.json()) as RoundResult;
  }

  async getArtifact(path: string): Promise<Uint8Array> {
    const resp = await this.fetchFn(this.url(path));
    if (!resp.ok) {
      throw new ServiceError(resp.status, await resp.text());
    }
    return new Uint8Array(await resp.arrayBuffer());
  }

  async getArtifacts(urls: ArtifactUrls): Promise<{
    classMap: Uint8Array;
    instanceMap: Uint8Array;
    overlay: Uint8Array;
  }> {
    const [classMap, instanceMap, overlay] = await Promise.all([
      this.getArtifact(urls.class_map),
      this.getArtifact(urls.instance_map),
      this.getArtifact(urls.overlay),
    ]);
    return { classMap, instanceMap, overlay };
  }
}
