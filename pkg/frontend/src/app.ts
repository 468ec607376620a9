/**
 * Step-driven participant flow.
 *
 * The server's session state is the single source of truth: the app renders
 * whatever step the last response reported, and every mutation goes through
 * the wire protocol. A rejected request shows an inline message and
 * re-fetches the state, so the client can never wander off the protocol.
 */

import { ApiError, ExplanationBundle, SessionState, Stars, StudyApi } from "./api.js";
import { StarWidget, starWidget } from "./star.js";

const STEP_TITLES: Record<string, string> = {
  select: "Step 1 - Pick movies you have watched",
  rate: "Step 2 - Rate your selection",
  recommend: "Step 3 - Computing your recommendations",
  pre_rate: "Step 4 - Rate the recommended movies",
  explain_rerate: "Step 5 - Read why, then rate again",
  trailer_rerate: "Step 6 - Watch the trailers, then rate again",
  questionnaire: "Step 7 - A few final questions",
  done: "All done",
};

export class App {
  private state: SessionState | null = null;
  private picked = new Set<string>();
  private watched = new Set<string>();
  private pollTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(private root: HTMLElement, private api: StudyApi) {}

  async start(forced?: { style: string; mode: string }): Promise<void> {
    this.state = await this.api.createSession(forced ?? {});
    this.render();
  }

  /** Replace local state with the server's answer and re-render. */
  private sync(state: SessionState): void {
    this.state = state;
    this.render();
  }

  private async guard(action: () => Promise<SessionState>): Promise<void> {
    try {
      this.sync(await action());
    } catch (err) {
      if (err instanceof ApiError && this.state) {
        const fresh = await this.api.getSession(this.state.session_id);
        this.state = fresh;
        this.render();
        this.showError(err.detail);
        return;
      }
      throw err;
    }
  }

  private showError(message: string): void {
    const box = this.root.querySelector<HTMLElement>("[data-testid=error]");
    if (box) {
      box.textContent = message;
      box.hidden = false;
    }
  }

  private render(): void {
    if (this.pollTimer) {
      clearTimeout(this.pollTimer);
      this.pollTimer = null;
    }
    const s = this.state;
    if (!s) return;
    this.root.innerHTML = "";
    const heading = document.createElement("h2");
    heading.dataset.testid = "step-title";
    heading.textContent = STEP_TITLES[s.step] ?? s.step;
    this.root.appendChild(heading);
    const error = document.createElement("p");
    error.dataset.testid = "error";
    error.className = "error";
    error.hidden = true;
    this.root.appendChild(error);

    switch (s.step) {
      case "select":
        this.renderSelect(s);
        break;
      case "rate":
        this.renderRate(s);
        break;
      case "recommend":
        this.renderTraining(s);
        break;
      case "pre_rate":
        this.renderPreRate(s);
        break;
      case "explain_rerate":
        this.renderExplain(s);
        break;
      case "trailer_rerate":
        this.renderTrailers(s);
        break;
      case "questionnaire":
        this.renderQuestionnaire(s);
        break;
      case "done":
        this.renderDone();
        break;
    }
  }

  // --- step 1 ---------------------------------------------------------

  private renderSelect(s: SessionState): void {
    const list = document.createElement("div");
    list.className = "grid";
    list.dataset.testid = "candidates";
    for (const movie of s.candidates) {
      const card = document.createElement("label");
      card.className = "card";
      const box = document.createElement("input");
      box.type = "checkbox";
      box.dataset.item = movie.item_id;
      box.checked = this.picked.has(movie.item_id);
      box.addEventListener("change", () => {
        if (box.checked) this.picked.add(movie.item_id);
        else this.picked.delete(movie.item_id);
        update();
      });
      const title = document.createElement("span");
      title.textContent = movie.title;
      card.append(box, title);
      list.appendChild(card);
    }
    const counter = document.createElement("p");
    counter.dataset.testid = "select-counter";
    const gate = document.createElement("p");
    gate.dataset.testid = "select-gate";
    gate.className = "hint";
    const go = document.createElement("button");
    go.dataset.testid = "continue";
    go.textContent = "Continue";
    go.addEventListener("click", () =>
      this.guard(() => this.api.postSelection(s.session_id, [...this.picked])));

    const update = () => {
      counter.textContent = `Selected ${this.picked.size} of at least ${s.min_select}`;
      const short = this.picked.size < s.min_select;
      go.disabled = short;
      gate.textContent = short ? `Select at least ${s.min_select} movies to continue.` : "";
      gate.hidden = !short;
    };
    update();
    this.root.append(list, counter, gate, go);
  }

  // --- step 2 ---------------------------------------------------------

  private renderRate(s: SessionState): void {
    const titles = new Map(s.candidates.map((c) => [c.item_id, c.title]));
    const widgets = this.starList(
      s.selected.map((id) => ({ item_id: id, title: titles.get(id) ?? id })));
    const go = document.createElement("button");
    go.dataset.testid = "continue";
    go.textContent = "Submit ratings";
    const update = () => {
      go.disabled = [...widgets.values()].some((w) => w.value() === null);
    };
    widgets.forEach((w) => w.el.addEventListener("click", update));
    update();
    go.addEventListener("click", () =>
      this.guard(() => this.api.postRatings(s.session_id, this.collect(widgets))));
    this.root.appendChild(go);
  }

  // --- step 3 ---------------------------------------------------------

  private renderTraining(s: SessionState): void {
    const note = document.createElement("p");
    note.dataset.testid = "training";
    note.textContent = "Training your personal model…";
    this.root.appendChild(note);
    this.pollTimer = setTimeout(async () => {
      this.sync(await this.api.getSession(s.session_id));
    }, 400);
  }

  // --- step 4 ---------------------------------------------------------

  private renderPreRate(s: SessionState): void {
    const blurb = document.createElement("p");
    blurb.textContent =
      "These are your recommendations. Rate each one now, before reading anything else about them.";
    this.root.appendChild(blurb);
    const widgets = this.starList(s.recommendations ?? [], "recommendations");
    const go = document.createElement("button");
    go.dataset.testid = "continue";
    go.textContent = "Submit ratings";
    const update = () => {
      go.disabled = [...widgets.values()].some((w) => w.value() === null);
    };
    widgets.forEach((w) => w.el.addEventListener("click", update));
    update();
    go.addEventListener("click", () =>
      this.guard(() => this.api.postPreRatings(s.session_id, this.collect(widgets))));
    this.root.appendChild(go);
  }

  // --- step 5 ---------------------------------------------------------

  private renderExplain(s: SessionState): void {
    if (s.explanation) this.root.appendChild(renderExplanation(s.explanation));
    const blurb = document.createElement("p");
    blurb.textContent = "Now rate the top two movies again.";
    this.root.appendChild(blurb);
    const top2 = (s.recommendations ?? []).slice(0, s.rerate_top);
    const widgets = this.starList(top2, "rerate");
    const go = document.createElement("button");
    go.dataset.testid = "continue";
    go.textContent = "Submit ratings";
    const update = () => {
      go.disabled = [...widgets.values()].some((w) => w.value() === null);
    };
    widgets.forEach((w) => w.el.addEventListener("click", update));
    update();
    go.addEventListener("click", () =>
      this.guard(() => this.api.postExplanationRatings(s.session_id, this.collect(widgets))));
    this.root.appendChild(go);
  }

  // --- step 6 ---------------------------------------------------------

  private renderTrailers(s: SessionState): void {
    const trailers = s.trailers ?? [];
    const widgets = new Map<string, StarWidget>();
    const list = document.createElement("div");
    list.dataset.testid = "trailers";
    for (const t of trailers) {
      const row = document.createElement("div");
      row.className = "card";
      const title = document.createElement("strong");
      title.textContent = t.title;
      row.appendChild(title);
      if (t.trailer_url) {
        const link = document.createElement("a");
        link.href = t.trailer_url;
        link.target = "_blank";
        link.rel = "noopener";
        link.textContent = "Watch the trailer";
        link.dataset.testid = `trailer-link-${t.item_id}`;
        row.appendChild(link);
      }
      const confirm = document.createElement("label");
      const box = document.createElement("input");
      box.type = "checkbox";
      box.dataset.testid = `watched-${t.item_id}`;
      box.addEventListener("change", () => {
        if (box.checked) this.watched.add(t.item_id);
        else this.watched.delete(t.item_id);
        update();
      });
      confirm.append(box, document.createTextNode(" I watched it"));
      row.appendChild(confirm);
      const w = starWidget(t.item_id);
      w.el.addEventListener("click", () => update());
      widgets.set(t.item_id, w);
      row.appendChild(w.el);
      list.appendChild(row);
    }
    this.root.appendChild(list);
    const go = document.createElement("button");
    go.dataset.testid = "continue";
    go.textContent = "Submit ratings";
    const update = () => {
      const allWatched = trailers.every((t) => this.watched.has(t.item_id));
      for (const [id, w] of widgets) {
        w.el.classList.toggle("disabled", !this.watched.has(id));
      }
      go.disabled = !allWatched || [...widgets.values()].some((w) => w.value() === null);
    };
    update();
    go.addEventListener("click", () =>
      this.guard(() => this.api.postTrailerRatings(s.session_id, this.collect(widgets))));
    this.root.appendChild(go);
  }

  // --- step 7 ---------------------------------------------------------

  private renderQuestionnaire(s: SessionState): void {
    const form = document.createElement("form");
    form.dataset.testid = "questionnaire";
    const agree = (name: string, text: string) => {
      const field = document.createElement("fieldset");
      const legend = document.createElement("legend");
      legend.textContent = text;
      field.appendChild(legend);
      for (const [label, value] of [["Agree", "yes"], ["Disagree", "no"]] as const) {
        const lab = document.createElement("label");
        const radio = document.createElement("input");
        radio.type = "radio";
        radio.name = name;
        radio.value = value;
        lab.append(radio, document.createTextNode(` ${label}`));
        field.appendChild(lab);
      }
      return field;
    };
    form.appendChild(agree(
      "transparency",
      "I understood the reason why the two movies have been ranked in the proposed order."));
    form.appendChild(agree("trust", "The explanation increased my trust in the system."));

    const sat = document.createElement("fieldset");
    const legend = document.createElement("legend");
    legend.textContent = "The provided explanation:";
    sat.appendChild(legend);
    for (const [label, value] of [
      ["really captures my tastes.", "really"],
      ["partially captures my tastes.", "partially"],
      ["does not capture my tastes.", "does_not"],
    ] as const) {
      const lab = document.createElement("label");
      const radio = document.createElement("input");
      radio.type = "radio";
      radio.name = "satisfaction";
      radio.value = value;
      lab.append(radio, document.createTextNode(` ${label}`));
      sat.appendChild(lab);
    }
    form.appendChild(sat);
    this.root.appendChild(form);

    const go = document.createElement("button");
    go.dataset.testid = "continue";
    go.textContent = "Finish";
    const answer = (name: string) =>
      form.querySelector<HTMLInputElement>(`input[name=${name}]:checked`)?.value ?? null;
    const update = () => {
      go.disabled = !answer("transparency") || !answer("trust") || !answer("satisfaction");
    };
    form.addEventListener("change", update);
    update();
    go.addEventListener("click", () =>
      this.guard(() =>
        this.api.postQuestionnaire(s.session_id, {
          transparency: answer("transparency") === "yes",
          trust: answer("trust") === "yes",
          satisfaction: answer("satisfaction") as "really" | "partially" | "does_not",
        })));
    this.root.appendChild(go);
  }

  private renderDone(): void {
    const p = document.createElement("p");
    p.dataset.testid = "thanks";
    p.textContent = "Thank you for taking part in the study!";
    this.root.appendChild(p);
  }

  // --- helpers ----------------------------------------------------------

  /** One row per movie with a star widget; returns item id -> widget. */
  private starList(
    movies: { item_id: string; title: string }[],
    testid = "rating-list",
  ): Map<string, StarWidget> {
    const widgets = new Map<string, StarWidget>();
    const list = document.createElement("div");
    list.dataset.testid = testid;
    for (const movie of movies) {
      const row = document.createElement("div");
      row.className = "card";
      const title = document.createElement("span");
      title.textContent = movie.title;
      const w = starWidget(movie.item_id);
      widgets.set(movie.item_id, w);
      row.append(title, w.el);
      list.appendChild(row);
    }
    this.root.appendChild(list);
    return widgets;
  }

  private collect(widgets: Map<string, StarWidget>): Stars {
    const stars: Stars = {};
    for (const [id, w] of widgets) {
      const v = w.value();
      if (v !== null) stars[id] = v;
    }
    return stars;
  }
}

/** Explanation block: server-rendered text plus the structured lists. */
export function renderExplanation(bundle: ExplanationBundle): HTMLElement {
  const box = document.createElement("div");
  box.className = "explanation";
  box.dataset.testid = "explanation";
  box.dataset.style = bundle.style;
  const text = document.createElement("p");
  text.dataset.testid = "explanation-text";
  text.textContent = bundle.rendered;
  box.appendChild(text);

  const featureList = (features: ExplanationBundle["features_i"], testid: string) => {
    const ul = document.createElement("ul");
    ul.dataset.testid = testid;
    for (const f of features) {
      const li = document.createElement("li");
      li.textContent = `(${f.predicate.split(/[/#:]/).pop()}) ${f.label}`;
      ul.appendChild(li);
    }
    return ul;
  };

  if (bundle.style === "pairwise") {
    box.appendChild(featureList(bundle.features_i, "features-i"));
    const over = document.createElement("p");
    over.dataset.testid = "over";
    over.textContent = "over";
    box.appendChild(over);
    box.appendChild(featureList(bundle.features_j, "features-j"));
  } else if (bundle.features_i.length) {
    box.appendChild(featureList(bundle.features_i, "features-i"));
    if (bundle.features_j.length) box.appendChild(featureList(bundle.features_j, "features-j"));
  }
  return box;
}
