/** Client-side session view state; the server's revision is authoritative. */

import type {
  ApiClient,
  LabeledPixel,
  SegmentParams,
  SegmentResult,
  StateSummary,
} from "./api.js";

export interface ParameterPanel {
  n_s: number;
  lambda: number;
  alpha: number;
  beta: number;
}

export const DEFAULT_PARAMS: ParameterPanel = {
  n_s: 600,
  lambda: 0.001,
  alpha: 0.9,
  beta: 0.1,
};

export class ViewState {
  sessionId: string;
  width: number;
  height: number;
  revision = 0;
  maskRevision: number | null = null;
  maskPngBase64: string | null = null;
  lastMethod: string | null = null;
  lastNcutValue: number | null = null;
  params: ParameterPanel = { ...DEFAULT_PARAMS };

  constructor(sessionId: string, width: number, height: number) {
    this.sessionId = sessionId;
    this.width = width;
    this.height = height;
  }

  /** A mask is stale when scribbles changed after it was computed. */
  get stale(): boolean {
    return this.maskRevision !== null && this.maskRevision < this.revision;
  }

  get hasMask(): boolean {
    return this.maskPngBase64 !== null;
  }

  applyScribbleAck(revision: number): void {
    this.revision = revision;
  }

  applySegmentResult(result: SegmentResult): void {
    this.maskRevision = result.revision;
    this.maskPngBase64 = result.mask_png_base64;
    this.lastMethod = result.method;
    this.lastNcutValue = result.ncut_value;
  }

  syncFromServer(summary: StateSummary): void {
    this.revision = summary.revision;
    if (summary.last_result_revision === null) {
      this.maskRevision = null;
      this.maskPngBase64 = null;
    }
  }
}

/**
 * Serializes interaction with one session: scribble updates apply revisions
 * from server acks, and at most one segment request is in flight (extra
 * requests coalesce into a single trailing rerun).
 */
export class SessionController {
  private inFlight: Promise<SegmentResult> | null = null;
  private rerunQueued = false;

  constructor(
    readonly api: ApiClient,
    readonly state: ViewState,
  ) {}

  async addScribbles(pixels: LabeledPixel[]): Promise<number> {
    const revision = await this.api.updateScribbles(this.state.sessionId, pixels);
    this.state.applyScribbleAck(revision);
    return revision;
  }

  async removeScribbles(points: Array<{ x: number; y: number }>): Promise<number> {
    const revision = await this.api.updateScribbles(this.state.sessionId, [], points);
    this.state.applyScribbleAck(revision);
    return revision;
  }

  /** Request a segmentation; concurrent calls share/queue the run. */
  segment(params?: SegmentParams): Promise<SegmentResult> {
    if (this.inFlight) {
      this.rerunQueued = true;
      return this.inFlight;
    }
    const effective: SegmentParams = {
      n_s: this.state.params.n_s,
      lambda: this.state.params.lambda,
      alpha: this.state.params.alpha,
      beta: this.state.params.beta,
      ...params,
    };
    this.inFlight = this.api
      .segment(this.state.sessionId, effective)
      .then(async (result) => {
        this.state.applySegmentResult(result);
        this.inFlight = null;
        if (this.rerunQueued) {
          this.rerunQueued = false;
          if (this.state.stale) return this.segment(params);
        }
        return result;
      })
      .catch((err) => {
        this.inFlight = null;
        this.rerunQueued = false;
        throw err;
      });
    return this.inFlight;
  }
}
