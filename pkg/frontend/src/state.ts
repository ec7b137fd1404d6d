/**
 * Dialogue state and controller: the single mutable store behind the UI.
 *
 * Every action is a service call followed by a state refresh; the ledger
 * mirrors the server's constraint order (re-fetched after each mutation)
 * and answer constraints are kept verbatim so feeding them back re-parses
 * unchanged. Only one solve may be in flight at a time.
 */
import {
  ApiError,
  InstanceDecl,
  Schema,
  ServiceClient,
  SolveMetrics,
  SolveRecord,
  SolveRequest,
} from "./api.js";

export interface InstanceCard {
  name: string;
  label: string;
  minconf: string;
  tree?: string;
  fixed: Record<string, string>;
  rangeConstraints: string[];
}

export interface SolveEntry {
  request: SolveRequest;
  record: SolveRecord;
  metrics: SolveMetrics | null;
}

export interface DialogueState {
  sessionId: string | null;
  schema: Schema | null;
  models: string[];
  instances: InstanceCard[];
  ledger: string[];
  history: SolveEntry[];
  composer: string;
  solvePending: boolean;
  error: string | null;
  errorPosition: number | null;
}

export function initialState(): DialogueState {
  return {
    sessionId: null,
    schema: null,
    models: [],
    instances: [],
    ledger: [],
    history: [],
    composer: "",
    solvePending: false,
    error: null,
    errorPosition: null,
  };
}

/** Per-feature entry of the instance editor: fixed value, bounded range, or free. */
export type FeatureSpec =
  | { mode: "fixed"; value: string }
  | { mode: "range"; lo: string; hi: string }
  | { mode: "free" };

export class Dialogue {
  state: DialogueState = initialState();
  private listeners: Array<(s: DialogueState) => void> = [];

  constructor(private readonly client: ServiceClient) {}

  subscribe(listener: (s: DialogueState) => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  private fail(err: unknown): never {
    this.state.error = err instanceof Error ? err.message : String(err);
    this.state.errorPosition = err instanceof ApiError ? err.position : null;
    this.emit();
    throw err;
  }

  private clearError(): void {
    this.state.error = null;
    this.state.errorPosition = null;
  }

  async start(schema: Schema, eps?: string): Promise<void> {
    this.clearError();
    try {
      const id = await this.client.createSession(schema, eps);
      this.state = { ...initialState(), sessionId: id, schema };
      this.emit();
    } catch (err) {
      this.fail(err);
    }
  }

  private get sessionId(): string {
    if (!this.state.sessionId) throw new Error("no active session");
    return this.state.sessionId;
  }

  async addModel(tree: unknown, treeId?: string): Promise<string> {
    this.clearError();
    try {
      const id = await this.client.uploadModel(this.sessionId, tree, treeId);
      this.state.models.push(id);
      this.emit();
      return id;
    } catch (err) {
      this.fail(err);
    }
  }

  /**
   * Declare an instance from editor specs. Fixed features travel with the
   * declaration; range features become a pair of inequality constraints,
   * which is what makes the instance under-specified rather than a point.
   */
  async declareInstance(
    name: string,
    label: string,
    specs: Record<string, FeatureSpec>,
    options: { minconf?: string; tree?: string } = {},
  ): Promise<void> {
    this.clearError();
    const fixed: Record<string, string> = {};
    const ranges: string[] = [];
    for (const [feature, spec] of Object.entries(specs)) {
      if (spec.mode === "fixed") {
        fixed[feature] = spec.value;
      } else if (spec.mode === "range") {
        if (spec.lo !== "") ranges.push(`${name}.${feature} >= ${spec.lo}`);
        if (spec.hi !== "") ranges.push(`${name}.${feature} <= ${spec.hi}`);
      }
    }
    const decl: InstanceDecl = { name, label };
    if (options.minconf) decl.minconf = options.minconf;
    if (options.tree) decl.tree = options.tree;
    if (Object.keys(fixed).length) decl.features = fixed;
    try {
      await this.client.declareInstance(this.sessionId, decl);
      for (const text of ranges) {
        await this.client.assertConstraint(this.sessionId, text);
      }
      this.state.instances.push({
        name,
        label,
        minconf: options.minconf ?? "0",
        tree: options.tree,
        fixed,
        rangeConstraints: ranges,
      });
      await this.refreshLedger();
    } catch (err) {
      this.fail(err);
    }
  }

  async assertConstraint(text: string): Promise<void> {
    this.clearError();
    try {
      await this.client.assertConstraint(this.sessionId, text);
      this.state.composer = "";
      await this.refreshLedger();
    } catch (err) {
      this.fail(err);
    }
  }

  async retractText(text: string): Promise<void> {
    this.clearError();
    try {
      await this.client.retract(this.sessionId, { text });
      await this.refreshLedger();
    } catch (err) {
      this.fail(err);
    }
  }

  async retractLast(): Promise<void> {
    this.clearError();
    try {
      await this.client.retract(this.sessionId, { last: true });
      await this.refreshLedger();
    } catch (err) {
      this.fail(err);
    }
  }

  private async refreshLedger(): Promise<void> {
    this.state.ledger = await this.client.listConstraints(this.sessionId);
    this.emit();
  }

  async solve(req: SolveRequest): Promise<SolveRecord> {
    if (this.state.solvePending) {
      throw new Error("a solve is already in flight for this session");
    }
    this.clearError();
    this.state.solvePending = true;
    this.emit();
    try {
      const out = await this.client.solve(this.sessionId, req);
      this.state.history.push({
        request: req,
        record: out.record,
        metrics: out.metrics,
      });
      return out.record;
    } catch (err) {
      this.fail(err);
    } finally {
      this.state.solvePending = false;
      this.emit();
    }
  }

  /**
   * Closed-language feedback: copy an answer disjunct's constraint text into
   * the composer, ready to be asserted for the next query.
   */
  useAsConstraint(historyIndex: number, disjunctIndex: number): string {
    const entry = this.state.history[historyIndex];
    const disjunct = entry?.record.disjuncts?.[disjunctIndex];
    if (!disjunct) throw new Error("no such answer disjunct");
    this.state.composer = disjunct.constraints.join(",");
    this.emit();
    return this.state.composer;
  }

  async reset(keepModel: boolean): Promise<void> {
    this.clearError();
    try {
      await this.client.reset(this.sessionId, keepModel);
      this.state.instances = [];
      this.state.ledger = [];
      this.state.history = [];
      this.state.composer = "";
      if (!keepModel) this.state.models = [];
      this.emit();
    } catch (err) {
      this.fail(err);
    }
  }

  transcript(): Promise<string> {
    return this.client.transcript(this.sessionId);
  }
}
