/**
 * In-memory stand-in for the study service, implementing the documented
 * wire protocol: the step order, the >=15 selection gate, star validation,
 * and the 404/409/422 error mapping. Tests drive the real UI against it
 * and then inspect the captured snapshots.
 */

import type { ExplanationBundle, SessionState, Step } from "../src/api.js";

export interface MockSession {
  state: SessionState;
  initialRatings: Record<string, number>;
  preRatings: Record<string, number>;
  explanationRatings: Record<string, number>;
  trailerRatings: Record<string, number>;
  questionnaire: Record<string, unknown> | null;
}

const N_CANDIDATES = 24;  // leaves >= 5 unrated after a 15-movie selection
const MIN_SELECT = 15;
const TOP_N = 5;
const RERATE_TOP = 2;

function candidates() {
  return Array.from({ length: N_CANDIDATES }, (_, k) => ({
    item_id: `m${String(k + 1).padStart(2, "0")}`,
    title: `Movie ${String(k + 1).padStart(2, "0")} (19${90 + (k % 10)})`,
  }));
}

function pairwiseBundle(i: string, j: string, ti: string, tj: string): ExplanationBundle {
  const feature = (label: string, weight: number) => ({
    predicate: "dct:subject", iri: `dbc:${label.replace(/ /g, "_")}`, label, weight,
  });
  const fi = [feature("Action films", 0.9), feature("Cyborg films", 0.8)];
  const fj = [feature("Robot films", 0.7), feature("Space operas", 0.6)];
  const lines = (fs: typeof fi) => fs.map((f) => `- (subject) ${f.label}`).join("\n");
  return {
    style: "pairwise",
    k: 5,
    item_i: i,
    item_j: j,
    features_i: fi,
    features_j: fj,
    rendered:
      `We guess you would like to watch ${ti} more than ${tj} because you may prefer:\n` +
      `${lines(fi)}\nover:\n${lines(fj)}`,
    flags: [],
  };
}

export class MockServer {
  sessions = new Map<string, MockSession>();
  private counter = 0;

  /** fetch-compatible entry point. */
  fetch = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const url = new URL(String(input));
    const method = (init?.method ?? "GET").toUpperCase();
    const body = init?.body ? JSON.parse(String(init.body)) : {};
    try {
      return json(this.route(url.pathname, method, body));
    } catch (err) {
      if (err instanceof HttpError) {
        return json({ detail: err.message }, err.status);
      }
      throw err;
    }
  };

  private route(path: string, method: string, body: Record<string, unknown>): unknown {
    if (path === "/health") return { version: "mock", catalog_size: N_CANDIDATES };
    if (path === "/sessions" && method === "POST") return this.create(body);
    const m = path.match(/^\/sessions\/([^/]+)(?:\/(\w+))?$/);
    if (!m) throw new HttpError(404, `no such route ${path}`);
    const session = this.sessions.get(m[1]);
    if (!session) throw new HttpError(404, `unknown session ${m[1]}`);
    const action = m[2];
    if (!action && method === "GET") return session.state;
    switch (action) {
      case "selection":
        return this.selection(session, body.items as string[]);
      case "ratings":
        return this.ratings(session, body.stars as Record<string, number>);
      case "pre_ratings":
        return this.preRatings(session, body.stars as Record<string, number>);
      case "explanation_ratings":
        return this.rerate(session, "explain_rerate", "trailer_rerate",
          body.stars as Record<string, number>, "explanationRatings");
      case "trailer_ratings":
        return this.rerate(session, "trailer_rerate", "questionnaire",
          body.stars as Record<string, number>, "trailerRatings");
      case "questionnaire":
        return this.questionnaire(session, body);
      default:
        throw new HttpError(404, `no such route ${path}`);
    }
  }

  private create(body: Record<string, unknown>): SessionState {
    const id = `s${String(this.counter++).padStart(6, "0")}`;
    const state: SessionState = {
      schema_version: "1",
      session_id: id,
      user_id: (body.user_id as string) ?? id,
      step: "select",
      style: (body.style as string) ?? "pairwise",
      mode: (body.mode as string) ?? "both",
      min_select: MIN_SELECT,
      rerate_top: RERATE_TOP,
      candidates: candidates(),
      selected: [],
    };
    this.sessions.set(id, {
      state,
      initialRatings: {},
      preRatings: {},
      explanationRatings: {},
      trailerRatings: {},
      questionnaire: null,
    });
    return state;
  }

  private expect(session: MockSession, step: Step): void {
    if (session.state.step !== step) {
      throw new HttpError(409, `session is at step ${session.state.step}, not ${step}`);
    }
  }

  private checkStars(stars: Record<string, number>, expected: string[]): void {
    const want = [...expected].sort().join(",");
    const got = Object.keys(stars).sort().join(",");
    if (want !== got) throw new HttpError(422, `ratings must cover exactly ${want}`);
    for (const v of Object.values(stars)) {
      if (!Number.isInteger(v) || v < 1 || v > 5) {
        throw new HttpError(422, "ratings must be integer stars in 1..5");
      }
    }
  }

  private selection(session: MockSession, items: string[]): SessionState {
    this.expect(session, "select");
    const unique = [...new Set(items)];
    if (unique.length < MIN_SELECT) {
      throw new HttpError(422, `select at least ${MIN_SELECT} movies (${unique.length} given)`);
    }
    const offered = new Set(session.state.candidates.map((c) => c.item_id));
    if (unique.some((i) => !offered.has(i))) {
      throw new HttpError(422, "items not offered to this session");
    }
    session.state = { ...session.state, selected: unique, step: "rate" };
    return session.state;
  }

  private ratings(session: MockSession, stars: Record<string, number>): SessionState {
    this.expect(session, "rate");
    this.checkStars(stars, session.state.selected);
    session.initialRatings = { ...stars };
    const unrated = session.state.candidates
      .filter((c) => !(c.item_id in stars))
      .slice(0, TOP_N)
      .map((c, k) => ({ ...c, score: 0.9 - 0.1 * k }));
    session.state = { ...session.state, step: "pre_rate", recommendations: unrated };
    return session.state;
  }

  private preRatings(session: MockSession, stars: Record<string, number>): SessionState {
    this.expect(session, "pre_rate");
    const recs = session.state.recommendations ?? [];
    this.checkStars(stars, recs.map((r) => r.item_id));
    session.preRatings = { ...stars };
    const [i, j] = recs;
    session.state = {
      ...session.state,
      step: "explain_rerate",
      explanation: pairwiseBundle(i.item_id, j.item_id, i.title, j.title),
    };
    return session.state;
  }

  private rerate(
    session: MockSession,
    from: Step,
    to: Step,
    stars: Record<string, number>,
    slot: "explanationRatings" | "trailerRatings",
  ): SessionState {
    this.expect(session, from);
    const top2 = (session.state.recommendations ?? []).slice(0, RERATE_TOP);
    this.checkStars(stars, top2.map((r) => r.item_id));
    session[slot] = { ...stars };
    // both transitions land in a step that shows the trailer links
    session.state = {
      ...session.state,
      step: to,
      trailers: top2.map((r) => ({
        item_id: r.item_id,
        title: r.title,
        trailer_url: `http://trailers.example/${r.item_id}`,
      })),
    };
    return session.state;
  }

  private questionnaire(session: MockSession, body: Record<string, unknown>): SessionState {
    this.expect(session, "questionnaire");
    const { transparency, trust, satisfaction } = body;
    if (typeof transparency !== "boolean" || typeof trust !== "boolean" ||
        !["really", "partially", "does_not"].includes(satisfaction as string)) {
      throw new HttpError(422, "all three questionnaire items must be answered");
    }
    session.questionnaire = { transparency, trust, satisfaction };
    session.state = { ...session.state, step: "done" };
    return session.state;
  }
}

class HttpError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

function json(payload: unknown, status = 200): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}
