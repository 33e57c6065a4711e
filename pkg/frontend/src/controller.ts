import type { ApiClient } from "./api";
import { ApiError } from "./api";
import { validateQuery, type ValidationIssue } from "./queryForm";
import type {
  EntityInfo,
  LiftRequest,
  Marker,
  Meta,
  QueryRecord,
  RankedEntity,
  RelationInfo,
  StudyArea,
} from "./types";

export interface LiftView {
  status: "ok" | "no-relation" | "stale" | "error";
  message?: string;
  clamped?: boolean;
  clicked?: [number, number];
  relation?: string;
  dir?: string;
  markers: Marker[];
}

export interface AnswerView {
  status: "ok" | "invalid" | "stale" | "error";
  issues: ValidationIssue[];
  message?: string;
  markers: Marker[];
}

/**
 * UI-independent application state: relation picking, click-to-lift with
 * stale-response discard, study-area clamping, and the query form. Server
 * score order is preserved verbatim; the top result is only flagged.
 */
export class AppController {
  meta: Meta | null = null;
  relations: RelationInfo[] = [];
  selectedRelation: string | null = null;
  selectedDir: "fwd" | "inv" = "fwd";
  k = 10;

  private footprints = new Map<string, EntityInfo>();
  private liftToken = 0;
  private answerToken = 0;

  constructor(private readonly api: ApiClient) {}

  async init(): Promise<void> {
    this.meta = await this.api.meta();
    this.relations = await this.api.relations();
    const area = this.meta.study_area;
    const bbox: [number, number, number, number] = [
      area.min[0],
      area.min[1],
      area.max[0],
      area.max[1],
    ];
    for (const e of await this.api.entities(bbox)) {
      this.footprints.set(e.id, e);
    }
  }

  selectRelation(relation: string | null, dir: "fwd" | "inv" = "fwd"): void {
    this.selectedRelation = relation;
    this.selectedDir = dir;
  }

  /** Clamp a planar point into the study area; flags when clamping occurred. */
  clampToStudyArea(point: [number, number]): {
    point: [number, number];
    clamped: boolean;
  } {
    const area: StudyArea | undefined = this.meta?.study_area;
    if (!area) return { point, clamped: false };
    const x = Math.min(Math.max(point[0], area.min[0]), area.max[0]);
    const y = Math.min(Math.max(point[1], area.min[1]), area.max[1]);
    return { point: [x, y], clamped: x !== point[0] || y !== point[1] };
  }

  private toMarkers(ranked: RankedEntity[]): Marker[] {
    return ranked.map((r, i) => {
      const fp = this.footprints.get(r.entity);
      return {
        entity: r.entity,
        score: r.score,
        rank: i + 1,
        top: i === 0,
        point: fp ? fp.point : null,
        bbox: fp ? fp.bbox : null,
      };
    });
  }

  /** Map click -> one /lift request; superseded responses are discarded. */
  async onMapClick(planar: [number, number]): Promise<LiftView> {
    if (!this.selectedRelation) {
      return {
        status: "no-relation",
        message: "pick a relation before clicking the map",
        markers: [],
      };
    }
    const { point, clamped } = this.clampToStudyArea(planar);
    const request: LiftRequest = {
      x: point,
      relation: this.selectedRelation,
      dir: this.selectedDir,
      k: this.k,
    };
    const token = ++this.liftToken;
    try {
      const response = await this.api.lift(request);
      if (token !== this.liftToken) {
        return { status: "stale", markers: [] };
      }
      return {
        status: "ok",
        clamped,
        clicked: point,
        relation: request.relation,
        dir: request.dir,
        markers: this.toMarkers(response.ranked),
      };
    } catch (err) {
      if (token !== this.liftToken) return { status: "stale", markers: [] };
      const message =
        err instanceof ApiError
          ? `${err.message} ${JSON.stringify(err.fields)}`
          : String(err);
      return { status: "error", message, markers: [] };
    }
  }

  /** Form-built query -> /answer, blocked client-side on schema issues. */
  async runQuery(record: QueryRecord): Promise<AnswerView> {
    const known = new Set(this.relations.map((r) => r.relation));
    const issues = validateQuery(record, known);
    if (issues.length > 0) {
      return { status: "invalid", issues, markers: [] };
    }
    const token = ++this.answerToken;
    try {
      const response = await this.api.answer({ ...record, k: this.k });
      if (token !== this.answerToken) {
        return { status: "stale", issues: [], markers: [] };
      }
      return { status: "ok", issues: [], markers: this.toMarkers(response.ranked) };
    } catch (err) {
      if (token !== this.answerToken)
        return { status: "stale", issues: [], markers: [] };
      const message = err instanceof ApiError ? err.message : String(err);
      return { status: "error", issues: [], message, markers: [] };
    }
  }
}
