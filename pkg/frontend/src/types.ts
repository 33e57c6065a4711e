/** Wire types mirroring the inference service JSON API. */

export interface StudyArea {
  min: [number, number];
  max: [number, number];
}

export interface Meta {
  mode: string;
  dims: { d: number; d_feat: number; d_space: number };
  counts: {
    entities: number;
    relations: number;
    types: number;
    geo_entities: number;
  };
  study_area: StudyArea;
  config_hash: string;
}

export interface RelationInfo {
  relation: string;
  dirs: string[];
}

export interface EntityInfo {
  id: string;
  type: string;
  point: [number, number];
  bbox: [number, number, number, number] | null;
}

export interface RankedEntity {
  entity: string;
  score: number;
}

/** Body of POST /lift; mirrors the wire schema exactly. */
export interface LiftRequest {
  x: [number, number];
  relation: string;
  dir: "fwd" | "inv";
  k: number;
}

export type QueryEdge = [string, string, string, string];

/** One query object in the service's JSONL schema. */
export interface QueryRecord {
  dag: string;
  target_type: string;
  edges: QueryEdge[];
  anchors: Record<string, string>;
  answer?: string | null;
  negatives?: string[];
  hard_negatives?: string[];
  var_types?: Record<string, string>;
}

export interface AnswerRequest extends QueryRecord {
  k: number;
}

export interface RankedResponse {
  ranked: RankedEntity[];
}

export interface Marker {
  entity: string;
  score: number;
  rank: number;
  top: boolean;
  point: [number, number] | null;
  bbox: [number, number, number, number] | null;
}
