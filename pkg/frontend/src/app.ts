/**
 * Explanation-dialogue views: model upload, instance editor with
 * under-specification toggles, constraint composer with grammar hints, the
 * solve panel and the history timeline with answer-to-constraint feedback.
 *
 * All truth lives on the server; this module only renders state and turns
 * clicks into Dialogue actions.
 */
import { Schema, ServiceClient } from "./api.js";
import { Dialogue, DialogueState, FeatureSpec } from "./state.js";

const GRAMMAR_HINT =
  "comma-separated relations over INSTANCE.feature: " +
  "CE.age >= F.age, CE.income = 1.16 * F.income, CE.sex = Female";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: Array<Node | string> = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  for (const child of children) {
    node.append(typeof child === "string" ? document.createTextNode(child) : child);
  }
  return node;
}

export class App {
  readonly dialogue: Dialogue;
  private readonly root: HTMLElement;

  constructor(container: HTMLElement, client: ServiceClient) {
    this.dialogue = new Dialogue(client);
    this.root = container;
    this.dialogue.subscribe(() => this.render());
    this.render();
  }

  private get state(): DialogueState {
    return this.dialogue.state;
  }

  private render(): void {
    this.root.replaceChildren(
      this.errorBanner(),
      this.sessionPanel(),
      this.modelPanel(),
      this.instancePanel(),
      this.composerPanel(),
      this.ledgerPanel(),
      this.solvePanel(),
      this.historyPanel(),
    );
  }

  private errorBanner(): HTMLElement {
    const banner = el("div", { class: "error-banner", "data-test": "error" });
    if (this.state.error) {
      const where = this.state.errorPosition != null
        ? ` (position ${this.state.errorPosition})` : "";
      banner.append(`${this.state.error}${where}`);
    }
    return banner;
  }

  private sessionPanel(): HTMLElement {
    const schemaBox = el("textarea", {
      class: "schema-input", rows: "4",
      placeholder: '{"features": [{"name": "age", "kind": "continuous"}]}',
    });
    const eps = el("input", { class: "eps-input", placeholder: "eps (default 0)" });
    const start = el("button", { "data-test": "start-session" }, ["Start session"]);
    start.addEventListener("click", () => {
      const schema = JSON.parse(schemaBox.value) as Schema;
      void this.dialogue.start(schema, eps.value || undefined).catch(() => {});
    });
    const status = this.state.sessionId
      ? el("span", { class: "session-id", "data-test": "session-id" },
           [this.state.sessionId])
      : "no session";
    return el("section", { class: "panel session" },
      [el("h2", {}, ["Session"]), schemaBox, eps, start, status]);
  }

  private modelPanel(): HTMLElement {
    const treeBox = el("textarea", {
      class: "tree-input", rows: "4",
      placeholder: '{"tree_id": "DT1", "root": {...}}',
    });
    const upload = el("button", { "data-test": "upload-model" }, ["Upload model"]);
    upload.addEventListener("click", () => {
      void this.dialogue.addModel(JSON.parse(treeBox.value)).catch(() => {});
    });
    const list = el("ul", { class: "model-list" },
      this.state.models.map((m) => el("li", { "data-test": "model" }, [m])));
    return el("section", { class: "panel models" },
      [el("h2", {}, ["Models"]), treeBox, upload, list]);
  }

  private instancePanel(): HTMLElement {
    const name = el("input", { class: "inst-name", placeholder: "name (e.g. CE)" });
    const label = el("input", { class: "inst-label", placeholder: "label" });
    const minconf = el("input", { class: "inst-minconf", placeholder: "minconf" });
    const tree = el("input", { class: "inst-tree", placeholder: "tree id (optional)" });

    const featureRows: Array<{ feature: string; mode: HTMLSelectElement;
                               value: HTMLInputElement; lo: HTMLInputElement;
                               hi: HTMLInputElement }> = [];
    const editor = el("div", { class: "feature-editor" });
    for (const feature of this.state.schema?.features ?? []) {
      const mode = el("select", { class: "feature-mode",
                                  "data-feature": feature.name });
      for (const option of ["free", "fixed", "range"]) {
        mode.append(el("option", { value: option }, [option]));
      }
      const value = el("input", { class: "feature-value", placeholder: "value" });
      const lo = el("input", { class: "feature-lo", placeholder: "min" });
      const hi = el("input", { class: "feature-hi", placeholder: "max" });
      featureRows.push({ feature: feature.name, mode, value, lo, hi });
      editor.append(el("div", { class: "feature-row" },
        [el("span", {}, [feature.name]), mode, value, lo, hi]));
    }

    const declare = el("button", { "data-test": "declare-instance" }, ["Declare"]);
    declare.addEventListener("click", () => {
      const specs: Record<string, FeatureSpec> = {};
      for (const row of featureRows) {
        if (row.mode.value === "fixed") {
          specs[row.feature] = { mode: "fixed", value: row.value.value };
        } else if (row.mode.value === "range") {
          specs[row.feature] = { mode: "range", lo: row.lo.value, hi: row.hi.value };
        }
      }
      void this.dialogue.declareInstance(name.value, label.value, specs, {
        minconf: minconf.value || undefined,
        tree: tree.value || undefined,
      }).catch(() => {});
    });

    const cards = el("div", { class: "instance-cards" },
      this.state.instances.map((card) => el("div",
        { class: "instance-card", "data-test": "instance-card" }, [
          el("strong", {}, [card.name]),
          ` label=${card.label} minconf=${card.minconf}`,
          card.tree ? ` tree=${card.tree}` : "",
          el("div", {}, Object.entries(card.fixed)
            .map(([f, v]) => el("code", {}, [`${f}=${v} `]))),
        ])));
    return el("section", { class: "panel instances" },
      [el("h2", {}, ["Instances"]), name, label, minconf, tree, editor,
       declare, cards]);
  }

  private composerPanel(): HTMLElement {
    const box = el("input", {
      class: "composer-input", "data-test": "composer",
      placeholder: GRAMMAR_HINT,
    });
    box.value = this.state.composer;
    box.addEventListener("input", () => {
      this.state.composer = box.value;
    });
    const assert = el("button", { "data-test": "assert-constraint" }, ["Assert"]);
    assert.addEventListener("click", () => {
      void this.dialogue.assertConstraint(box.value).catch(() => {});
    });
    return el("section", { class: "panel composer" },
      [el("h2", {}, ["Constraint composer"]),
       el("p", { class: "hint" }, [GRAMMAR_HINT]), box, assert]);
  }

  private ledgerPanel(): HTMLElement {
    const rows = this.state.ledger.map((text, index) => {
      const retract = el("button",
        { "data-test": `retract-${index}` }, ["retract"]);
      retract.addEventListener("click", () => {
        void this.dialogue.retractText(text).catch(() => {});
      });
      return el("li", { "data-test": "ledger-entry" },
        [el("code", {}, [text]), retract]);
    });
    const retractLast = el("button", { "data-test": "retract-last" },
      ["Retract last"]);
    retractLast.addEventListener("click", () => {
      void this.dialogue.retractLast().catch(() => {});
    });
    return el("section", { class: "panel ledger" },
      [el("h2", {}, ["Constraint ledger"]), el("ol", {}, rows), retractLast]);
  }

  private solvePanel(): HTMLElement {
    const norm = el("select", { class: "norm-select" });
    for (const option of ["none", "l1", "linf"]) {
      norm.append(el("option", { value: option }, [option]));
    }
    const from = el("input", { class: "pair-from", placeholder: "factual (F)" });
    const to = el("input", { class: "pair-to", placeholder: "contrastive (CE)" });
    const eps = el("input", { class: "solve-eps", placeholder: "eps" });
    const project = el("input", {
      class: "project-input", placeholder: "project (e.g. CE or CE,F.age)",
    });
    const solve = el("button", { "data-test": "solve" }, ["Solve"]);
    if (this.state.solvePending) solve.setAttribute("disabled", "disabled");
    solve.addEventListener("click", () => {
      const req: Record<string, unknown> = {};
      if (norm.value !== "none") {
        req.minimize = `${norm.value === "l1" ? "l1norm" : "linfnorm"}` +
          `(${from.value},${to.value})`;
      }
      if (eps.value) req.eps = eps.value;
      if (project.value) {
        req.project = project.value.split(",").map((s) => s.trim())
          .filter((s) => s.length > 0);
      }
      void this.dialogue.solve(req).catch(() => {});
    });
    return el("section", { class: "panel solve" },
      [el("h2", {}, ["Solve"]), norm, from, to, eps, project, solve]);
  }

  private historyPanel(): HTMLElement {
    const entries = this.state.history.map((entry, historyIndex) => {
      const body = el("div", { class: "history-entry", "data-test": "history-entry" });
      if (entry.record.event === "no_answer") {
        body.append(el("p", { class: "no-answer", "data-test": "no-answer" },
          ["No answer."]));
        return body;
      }
      entry.record.disjuncts?.forEach((disjunct, disjunctIndex) => {
        const feed = el("button", {
          "data-test": `use-as-constraint-${historyIndex}-${disjunctIndex}`,
        }, ["use as constraint"]);
        feed.addEventListener("click", () => {
          this.dialogue.useAsConstraint(historyIndex, disjunctIndex);
        });
        const rules = disjunct.rules.map((rule) => el("div", { class: "rule" }, [
          el("span", { class: "rule-instance" }, [rule.instance]),
          " IF " + rule.antecedent.join(",") + ` THEN ${rule.label} `,
          el("span", { class: "confidence-badge", "data-test": "confidence" },
            [`[${rule.confidence}]`]),
        ]));
        body.append(el("div", { class: "disjunct", "data-test": "disjunct" }, [
          el("code", { class: "answer-constraint", "data-test": "answer-constraint" },
            [disjunct.constraints.join(",")]),
          feed,
          ...rules,
          disjunct.min_value != null
            ? el("p", { class: "min-value", "data-test": "min-value" },
                [`Min value: ${disjunct.min_value}`])
            : "",
        ]));
      });
      if (entry.metrics) {
        body.append(el("p", { class: "metrics", "data-test": "metrics" }, [
          `answers=${entry.metrics.n_answers} N_C=${entry.metrics.N_C}` +
          ` N_CE=${entry.metrics.N_CE}` +
          (entry.metrics.l_F != null ? ` l_F=${entry.metrics.l_F}` : "") +
          (entry.metrics.l_C != null ? ` l_C=${entry.metrics.l_C}` : ""),
        ]));
      }
      return body;
    });
    return el("section", { class: "panel history" },
      [el("h2", {}, ["History"]), ...entries]);
  }
}

export function mount(container: HTMLElement, baseUrl: string): App {
  return new App(container, new ServiceClient(baseUrl));
}
