/**
 * Typed client for the study wire protocol (JSON over HTTP).
 *
 * Every session endpoint returns the full session state, so the UI never
 * has to guess: it re-renders from whatever the server last said.
 */

export type Step =
  | "select"
  | "rate"
  | "recommend"
  | "pre_rate"
  | "explain_rerate"
  | "trailer_rerate"
  | "questionnaire"
  | "done";

export interface MovieCard {
  item_id: string;
  title: string;
}

export interface ScoredMovie extends MovieCard {
  score: number;
}

export interface TrailerInfo extends MovieCard {
  trailer_url: string | null;
}

export interface BundleFeature {
  predicate: string;
  iri: string;
  label: string;
  weight: number | null;
}

export interface ExplanationBundle {
  style: string;
  k: number;
  item_i: string;
  item_j: string | null;
  features_i: BundleFeature[];
  features_j: BundleFeature[];
  rendered: string;
  flags: string[];
}

export interface SessionState {
  schema_version: string;
  session_id: string;
  user_id: string;
  step: Step;
  style: string;
  mode: string;
  min_select: number;
  rerate_top: number;
  candidates: MovieCard[];
  selected: string[];
  recommendations?: ScoredMovie[];
  explanation?: ExplanationBundle;
  trailers?: TrailerInfo[];
}

export type Stars = Record<string, number>;

export interface Satisfaction {
  transparency: boolean;
  trust: boolean;
  satisfaction: "really" | "partially" | "does_not";
}

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(detail);
  }
}

export class StudyApi {
  constructor(
    private base: string,
    private fetchFn: typeof fetch = globalThis.fetch.bind(globalThis),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.base}${path}`, {
      headers: { "Content-Type": "application/json" },
      ...init,
    });
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      const detail =
        typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail ?? body);
      throw new ApiError(response.status, detail);
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, { method: "POST", body: JSON.stringify(payload) });
  }

  health(): Promise<{ version: string; catalog_size: number }> {
    return this.request("/health");
  }

  createSession(body: { user_id?: string; style?: string; mode?: string } = {}): Promise<SessionState> {
    return this.post("/sessions", body);
  }

  getSession(id: string): Promise<SessionState> {
    return this.request(`/sessions/${id}`);
  }

  postSelection(id: string, items: string[]): Promise<SessionState> {
    return this.post(`/sessions/${id}/selection`, { items });
  }

  postRatings(id: string, stars: Stars): Promise<SessionState> {
    return this.post(`/sessions/${id}/ratings`, { stars });
  }

  postPreRatings(id: string, stars: Stars): Promise<SessionState> {
    return this.post(`/sessions/${id}/pre_ratings`, { stars });
  }

  postExplanationRatings(id: string, stars: Stars): Promise<SessionState> {
    return this.post(`/sessions/${id}/explanation_ratings`, { stars });
  }

  postTrailerRatings(id: string, stars: Stars): Promise<SessionState> {
    return this.post(`/sessions/${id}/trailer_ratings`, { stars });
  }

  postQuestionnaire(id: string, answers: Satisfaction): Promise<SessionState> {
    return this.post(`/sessions/${id}/questionnaire`, answers);
  }
}
