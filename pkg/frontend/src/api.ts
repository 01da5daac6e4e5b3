/** Typed client for the segmentation session API. */

export type Label = string;

export interface SessionInfo {
  session: string;
  width: number;
  height: number;
}

export interface LabeledPixel {
  x: number;
  y: number;
  label: Label;
}

export interface SegmentResult {
  revision: number;
  method: string;
  k: number;
  ncut_value: number;
  mask_png_base64: string;
  timings: Record<string, number>;
}

export interface StateSummary {
  session: string;
  width: number;
  height: number;
  revision: number;
  scribbles: LabeledPixel[];
  scribble_count: number;
  graph_builds: number;
  last_result_revision: number | null;
}

export interface SegmentParams {
  n_s?: number;
  lambda?: number;
  alpha?: number;
  beta?: number;
  method?: string;
  k_regions?: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(res: Response): Promise<never> {
  let code = "unknown";
  let message = res.statusText;
  try {
    const body = (await res.json()) as { code?: string; message?: string };
    code = body.code ?? code;
    message = body.message ?? message;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(res.status, code, message);
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async createSession(image: Blob, filename = "image.png"): Promise<SessionInfo> {
    const form = new FormData();
    form.append("image", image, filename);
    const res = await fetch(this.url("/sessions"), { method: "POST", body: form });
    if (!res.ok) await parseError(res);
    return (await res.json()) as SessionInfo;
  }

  async updateScribbles(
    sessionId: string,
    add: LabeledPixel[],
    remove: Array<{ x: number; y: number }> = [],
  ): Promise<number> {
    const res = await fetch(this.url(`/sessions/${sessionId}/scribbles`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ add, remove }),
    });
    if (!res.ok) await parseError(res);
    const body = (await res.json()) as { revision: number };
    return body.revision;
  }

  async segment(sessionId: string, params?: SegmentParams): Promise<SegmentResult> {
    const res = await fetch(this.url(`/sessions/${sessionId}/segment`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(params ? { params } : {}),
    });
    if (!res.ok) await parseError(res);
    return (await res.json()) as SegmentResult;
  }

  async getState(sessionId: string): Promise<StateSummary> {
    const res = await fetch(this.url(`/sessions/${sessionId}`));
    if (!res.ok) await parseError(res);
    return (await res.json()) as StateSummary;
  }

  async deleteSession(sessionId: string): Promise<void> {
    const res = await fetch(this.url(`/sessions/${sessionId}`), { method: "DELETE" });
    if (!res.ok) await parseError(res);
  }
}
