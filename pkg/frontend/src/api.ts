/**
 * Typed client for the explanation service HTTP API.
 *
 * The client never interprets constraint semantics; it moves text and
 * structured records between the browser and the service, which is the
 * single source of truth.
 */

export interface SchemaFeature {
  name: string;
  kind: "continuous" | "ordinal" | "nominal";
  bounds?: [number, number];
  values?: string[];
  norm_range?: [number | string, number | string];
}

export interface Schema {
  target?: string;
  features: SchemaFeature[];
}

export interface InstanceDecl {
  name: string;
  label: string;
  tree?: string;
  minconf?: string;
  features?: Record<string, string | number> | Array<string | number>;
}

export interface SolveRequest {
  minimize?: string;
  project?: string[];
  eps?: string;
  global_opt?: boolean;
}

export interface RuleRecord {
  instance: string;
  antecedent: string[];
  label: string;
  confidence: string;
}

export interface DisjunctRecord {
  constraints: string[];
  rules: RuleRecord[];
  min_value: string | null;
}

export interface SolveRecord {
  event: "answer" | "no_answer";
  disjuncts?: DisjunctRecord[];
}

export interface SolveMetrics {
  n_answers: number;
  l_F: string | null;
  l_C: string | null;
  N_C: number;
  N_CE: number;
  d_CE: string[];
  dim_CE: string[];
}

export interface SolveResponse {
  record: SolveRecord;
  metrics: SolveMetrics | null;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: unknown,
  ) {
    super(typeof detail === "string" ? detail : JSON.stringify(detail));
  }

  /** Parser errors carry the offending position for inline display. */
  get position(): number | null {
    if (this.detail && typeof this.detail === "object" && "pos" in this.detail) {
      return Number((this.detail as { pos: unknown }).pos);
    }
    return null;
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  private readonly fetchImpl: FetchLike;

  constructor(
    readonly baseUrl: string,
    fetchImpl?: FetchLike,
  ) {
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
      init.headers = { "Content-Type": "application/json" };
    }
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!res.ok) {
      let detail: unknown = res.statusText;
      try {
        const parsed = (await res.json()) as { detail?: unknown };
        detail = parsed.detail ?? parsed;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(res.status, detail);
    }
    const text = await res.text();
    return (text ? JSON.parse(text) : {}) as T;
  }

  async createSession(schema: Schema, eps?: string): Promise<string> {
    const body: Record<string, unknown> = { schema };
    if (eps !== undefined) body.eps = eps;
    const out = await this.request<{ id: string }>("POST", "/sessions", body);
    return out.id;
  }

  async uploadModel(sessionId: string, tree: unknown, treeId?: string): Promise<string> {
    const body: Record<string, unknown> = { tree };
    if (treeId !== undefined) body.tree_id = treeId;
    const out = await this.request<{ tree_id: string }>(
      "POST", `/sessions/${sessionId}/models`, body);
    return out.tree_id;
  }

  declareInstance(sessionId: string, decl: InstanceDecl): Promise<unknown> {
    return this.request("POST", `/sessions/${sessionId}/instances`, decl);
  }

  assertConstraint(sessionId: string, text: string): Promise<unknown> {
    return this.request("POST", `/sessions/${sessionId}/constraints`, { text });
  }

  retract(sessionId: string, what: { text?: string; last?: boolean }): Promise<unknown> {
    return this.request("POST", `/sessions/${sessionId}/constraints/retract`, what);
  }

  async listConstraints(sessionId: string): Promise<string[]> {
    const out = await this.request<{ constraints: string[] }>(
      "GET", `/sessions/${sessionId}/constraints`);
    return out.constraints;
  }

  solve(sessionId: string, req: SolveRequest): Promise<SolveResponse> {
    return this.request("POST", `/sessions/${sessionId}/solve`, req);
  }

  async transcript(sessionId: string): Promise<string> {
    const res = await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}/transcript`,
      { method: "GET" });
    if (!res.ok) throw new ApiError(res.status, res.statusText);
    return res.text();
  }

  reset(sessionId: string, keepModel: boolean): Promise<unknown> {
    return this.request("POST", `/sessions/${sessionId}/reset`,
      { keep_model: keepModel });
  }

  deleteSession(sessionId: string): Promise<unknown> {
    return this.request("DELETE", `/sessions/${sessionId}`);
  }
}
