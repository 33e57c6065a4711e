import type {
  AnswerRequest,
  EntityInfo,
  LiftRequest,
  Meta,
  RankedResponse,
  RelationInfo,
} from "./types";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly fields: Record<string, string> = {},
  ) {
    super(message);
  }
}

async function parseError(res: Response): Promise<ApiError> {
  let message = `${res.status} ${res.statusText}`;
  let fields: Record<string, string> = {};
  try {
    const body = await res.json();
    if (body?.error) {
      message = body.error.message ?? message;
      fields = body.error.fields ?? {};
    }
  } catch {
    // non-JSON error body: keep the status line
  }
  return new ApiError(message, res.status, fields);
}

/** Thin typed client over the inference service; fetch is injectable for tests. */
export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path);
    if (!res.ok) throw await parseError(res);
    return (await res.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) throw await parseError(res);
    return (await res.json()) as T;
  }

  meta(): Promise<Meta> {
    return this.get<Meta>("/meta");
  }

  async relations(): Promise<RelationInfo[]> {
    const body = await this.get<{ relations: RelationInfo[] }>("/relations");
    return body.relations;
  }

  async entities(
    bbox: [number, number, number, number],
    limit = 5000,
  ): Promise<EntityInfo[]> {
    const body = await this.get<{ entities: EntityInfo[] }>(
      `/entities?bbox=${bbox.join(",")}&limit=${limit}`,
    );
    return body.entities;
  }

  lift(req: LiftRequest): Promise<RankedResponse> {
    return this.post<RankedResponse>("/lift", req);
  }

  answer(req: AnswerRequest): Promise<RankedResponse> {
    return this.post<RankedResponse>("/answer", req);
  }
}
