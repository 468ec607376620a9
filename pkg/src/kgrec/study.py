"""The 7-step study protocol: session state machine, arm assignment,
rating capture, questionnaire, and an append-only event store.

A session advances strictly through

    select -> rate -> recommend -> pre_rate -> explain_rerate
           -> trailer_rerate -> questionnaire -> done

The `recommend` step is the training window: it opens when the initial
ratings arrive and closes when the per-session autoencoder has produced the
top-5 list.  Training runs synchronously inside the submit call, so callers
normally observe the session already at `pre_rate`; pollers that look while
a worker is busy see `recommend`.

Every mutation is an event.  The engine folds events into snapshots through
the same pure function the replay path uses, so a store reloaded from disk
reproduces each session exactly.
"""

from __future__ import annotations

import itertools
import json
import logging
import threading
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import explain as ex
from .autoencoder import RatingVector, TrainConfig, UserAutoencoder
from .data import Catalog, FeatureSpace, KgConfig, MaskMatrix, RatingsTable, Triple, build_feature_space
from .errors import KgrecError
from .metrics import ArmRecords, QuestionnaireAnswer, RatingTriplet, SATISFACTION_SCALE, metrics_report
from .profiles import extract_profile, recommend

log = logging.getLogger(__name__)

STEPS = ("select", "rate", "recommend", "pre_rate", "explain_rerate",
         "trailer_rerate", "questionnaire", "done")

SCHEMA_VERSION = "1"


class UnknownSessionError(KgrecError):
    pass


class WrongStepError(KgrecError):
    """Event arrived while the session was at a different step."""


class RejectedInputError(KgrecError):
    """Input violates the protocol (too few selections, bad star value...)."""


@dataclass
class StudyConfig:
    styles: tuple[str, ...] = ("popularity", "non_personalized", "pairwise")
    modes: tuple[str, ...] = ("semantic", "factual", "both")
    top_n: int = 5
    rerate_top: int = 2
    k: int = 5
    min_select: int = 15
    candidate_sample: int = 30
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def arms(self) -> list[tuple[str, str]]:
        return [(s, m) for s in self.styles for m in self.modes]

    def __post_init__(self):
        for s in self.styles:
            if s not in ex.STYLES:
                raise ValueError(f"unknown style {s!r}")


@dataclass
class StudySession:
    session_id: str
    user_id: str
    style: str
    mode: str
    seed: int
    step: str = "select"
    candidates: list[str] = field(default_factory=list)
    selected: list[str] = field(default_factory=list)
    initial_ratings: dict[str, int] = field(default_factory=dict)
    recommendations: list[tuple[str, float]] = field(default_factory=list)
    recommendations_short: bool = False
    pre_ratings: dict[str, int] = field(default_factory=dict)
    explanation: dict | None = None
    post_explanation_ratings: dict[str, int] = field(default_factory=dict)
    post_trailer_ratings: dict[str, int] = field(default_factory=dict)
    questionnaire: dict | None = None
    transitions: list[tuple[str, float]] = field(default_factory=list)

    def top_items(self, k: int) -> list[str]:
        return [item for item, _ in self.recommendations[:k]]

    def snapshot(self) -> dict:
        return asdict(self)


def apply_event(sessions: dict[str, StudySession], event: dict) -> StudySession:
    """Fold one event into the session map; replay and live paths share this."""
    etype = event["type"]
    sid = event["session"]
    data = event["data"]
    ts = event["ts"]
    if etype == "created":
        s = StudySession(session_id=sid, user_id=data["user_id"], style=data["style"],
                         mode=data["mode"], seed=data["seed"], candidates=list(data["candidates"]))
        s.transitions.append(("select", ts))
        sessions[sid] = s
        return s
    s = sessions[sid]
    if etype == "selected":
        s.selected = list(data["items"])
        s.step = "rate"
    elif etype == "rated":
        s.initial_ratings = {k: int(v) for k, v in data["stars"].items()}
        s.step = "recommend"
    elif etype == "trained":
        s.recommendations = [(item, float(score)) for item, score in data["recommendations"]]
        s.recommendations_short = bool(data["short"])
        s.step = "pre_rate"
    elif etype == "pre_rated":
        s.pre_ratings = {k: int(v) for k, v in data["stars"].items()}
        s.explanation = data["explanation"]
        s.step = "explain_rerate"
    elif etype == "explain_rerated":
        s.post_explanation_ratings = {k: int(v) for k, v in data["stars"].items()}
        s.step = "trailer_rerate"
    elif etype == "trailer_rerated":
        s.post_trailer_ratings = {k: int(v) for k, v in data["stars"].items()}
        s.step = "questionnaire"
    elif etype == "questionnaire":
        s.questionnaire = dict(data["answers"])
        s.step = "done"
    else:
        raise KgrecError(f"unknown event type {etype!r}")
    s.transitions.append((s.step, ts))
    return s


class SessionStore:
    """Append-only event log with an optional JSONL file behind it."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.events: list[dict] = []
        self._fh = None
        self._lock = threading.Lock()
        if self.path is not None:
            if self.path.exists():
                self.events = list(_read_events(self.path))
            self._fh = self.path.open("a", encoding="utf-8")

    def append(self, event: dict) -> None:
        with self._lock:
            self.events.append(event)
            if self._fh is not None:
                self._fh.write(json.dumps(event, sort_keys=True) + "\n")
                self._fh.flush()

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None

    def events_for(self, sid: str) -> list[dict]:
        return [e for e in self.events if e["session"] == sid]

    def replay(self) -> dict[str, StudySession]:
        sessions: dict[str, StudySession] = {}
        for event in self.events:
            apply_event(sessions, event)
        return sessions


def _read_events(path: Path) -> Iterable[dict]:
    """Read a JSONL event log, tolerating a torn trailing line."""
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError:
                log.warning("%s: skipping torn trailing record", path)
                return


@dataclass
class _ModeArtifacts:
    space: FeatureSpace
    mask: MaskMatrix


class StudyEngine:
    """Runs sessions over prepared per-mode feature spaces and masks.

    One lock serializes all mutations: per-session event ordering is thereby
    guaranteed, and the store accepts appends from any number of sessions.
    """

    def __init__(self, catalog: Catalog, triples: Iterable[Triple], config: StudyConfig,
                 store: SessionStore | None = None, ratings: RatingsTable | None = None,
                 clock: Callable[[], float] = time.time,
                 kg_defaults: KgConfig | None = None):
        self.catalog = catalog
        self.config = config
        self.store = store if store is not None else SessionStore()
        self.clock = clock
        self._lock = threading.RLock()
        self._counter = itertools.count()
        self._rng = np.random.default_rng(config.seed)
        self.sessions: dict[str, StudySession] = self.store.replay()
        for sid in self.sessions:
            next(self._counter)  # keep ids fresh after a reload
        self._models: dict[str, tuple[UserAutoencoder, RatingVector]] = {}

        base = kg_defaults or KgConfig()
        triples = list(triples)
        self.artifacts: dict[str, _ModeArtifacts] = {}
        for mode in dict.fromkeys(config.modes):
            kg = KgConfig(mode=mode, categorical_predicates=base.categorical_predicates,
                          factual_predicates=base.factual_predicates)
            space, mask = build_feature_space(triples, catalog, kg)
            self.artifacts[mode] = _ModeArtifacts(space=space, mask=mask)

        self._candidate_pool = self._build_candidate_pool(ratings)

    def _build_candidate_pool(self, ratings: RatingsTable | None) -> list[str]:
        """Most-rated quartile of the catalog so participants recognize titles;
        falls back to the whole catalog when that is too small."""
        ids = self.catalog.ids()
        if ratings is None or len(ratings) == 0:
            return ids
        counts = ratings.item_counts()
        ranked = sorted(ids, key=lambda i: (-counts.get(i, 0), i))
        quartile = ranked[:max(1, len(ranked) // 4)]
        if len(quartile) < self.config.candidate_sample:
            return ids
        return sorted(quartile)

    # --- internals -------------------------------------------------------

    def _emit(self, sid: str, etype: str, data: dict) -> StudySession:
        event = {"seq": len(self.store.events), "session": sid,
                 "ts": float(self.clock()), "type": etype, "data": data}
        self.store.append(event)
        return apply_event(self.sessions, event)

    def _session(self, sid: str) -> StudySession:
        try:
            return self.sessions[sid]
        except KeyError:
            raise UnknownSessionError(f"unknown session {sid!r}")

    def _require_step(self, s: StudySession, step: str) -> None:
        if s.step != step:
            raise WrongStepError(f"session {s.session_id} is at step {s.step!r}, not {step!r}")

    @staticmethod
    def _check_stars(stars: dict[str, int], expected_items: set[str]) -> dict[str, int]:
        if set(stars) != expected_items:
            raise RejectedInputError(
                f"ratings must cover exactly {sorted(expected_items)}, got {sorted(stars)}")
        clean = {}
        for item, v in stars.items():
            iv = int(v)
            if iv != v or not (1 <= iv <= 5):
                raise RejectedInputError(f"rating for {item!r} must be an integer star in 1..5")
            clean[item] = iv
        return clean

    # --- protocol operations ----------------------------------------------

    def create_session(self, user_id: str | None = None,
                       arm: tuple[str, str] | None = None) -> StudySession:
        """Open a session at `select` with a random candidate sample and a
        uniformly drawn (style, mode) arm unless one is forced."""
        if len(self.catalog) == 0:
            raise KgrecError("catalog is empty")
        with self._lock:
            idx = next(self._counter)
            sid = f"s{idx:06d}"
            uid = user_id or f"u{idx:06d}"
            arms = self.config.arms()
            if arm is None:
                style, mode = arms[int(self._rng.integers(len(arms)))]
            else:
                style, mode = arm
                if style not in self.config.styles or mode not in self.config.modes:
                    raise RejectedInputError(f"arm {arm!r} outside the configured grid")
            pool = self._candidate_pool
            size = min(self.config.candidate_sample, len(pool))
            picks = self._rng.choice(len(pool), size=size, replace=False)
            candidates = [pool[int(i)] for i in sorted(picks)]
            seed = int(self._rng.integers(2 ** 63 - 1))
            return self._emit(sid, "created", {
                "user_id": uid, "style": style, "mode": mode,
                "seed": seed, "candidates": candidates})

    def get_session(self, sid: str) -> StudySession:
        with self._lock:
            return self._session(sid)

    def submit_selection(self, sid: str, items: list[str]) -> StudySession:
        with self._lock:
            s = self._session(sid)
            self._require_step(s, "select")
            unique = list(dict.fromkeys(items))
            if len(unique) < self.config.min_select:
                raise RejectedInputError(
                    f"select at least {self.config.min_select} movies ({len(unique)} given)")
            outside = [i for i in unique if i not in s.candidates]
            if outside:
                raise RejectedInputError(f"items not offered to this session: {outside}")
            return self._emit(sid, "selected", {"items": unique})

    def submit_ratings(self, sid: str, stars: dict[str, int]) -> StudySession:
        """Store the initial star ratings, then train this session's
        autoencoder and fix the top-5 list.

        Training runs with the lock released: pollers observe the session at
        `recommend` until the model is ready, and a second submit for the
        same session is refused as a step violation.
        """
        with self._lock:
            s = self._session(sid)
            self._require_step(s, "rate")
            clean = self._check_stars(stars, set(s.selected))
            s = self._emit(sid, "rated", {"stars": clean})
        ae, x = self._train_for(s)  # deterministic, session-local work
        with self._lock:
            rec = recommend(ae, x, self.catalog, self.config.top_n, user=s.user_id)
            return self._emit(sid, "trained", {
                "recommendations": [[item, score] for item, score in rec.items],
                "short": rec.short})

    def _train_for(self, s: StudySession) -> tuple[UserAutoencoder, RatingVector]:
        """Train (or deterministically retrain after a restart) the session model."""
        if s.session_id in self._models:
            return self._models[s.session_id]
        art = self.artifacts[s.mode]
        x = RatingVector.from_stars(self.catalog, dict(s.initial_ratings))
        cfg = TrainConfig(epochs=self.config.train.epochs,
                          learning_rate=self.config.train.learning_rate,
                          seed=s.seed,
                          rated_only_loss=self.config.train.rated_only_loss)
        ae = UserAutoencoder(art.mask, cfg).train(x)
        self._models[s.session_id] = (ae, x)
        return ae, x

    def capture_pre_ratings(self, sid: str, stars: dict[str, int]) -> tuple[StudySession, ex.ExplanationBundle]:
        """Store the pre-explanation ratings of the whole top-5, then build
        the arm's explanation for the top-2 pair."""
        with self._lock:
            s = self._session(sid)
            self._require_step(s, "pre_rate")
            clean = self._check_stars(stars, set(s.top_items(self.config.top_n)))
            bundle = self._build_explanation(s)
            s = self._emit(sid, "pre_rated", {"stars": clean, "explanation": bundle.to_dict()})
            return s, bundle

    def _build_explanation(self, s: StudySession) -> ex.ExplanationBundle:
        art = self.artifacts[s.mode]
        top = s.recommendations[:2]
        if len(top) < 2:
            bundle = ex.ExplanationBundle(style=s.style, k=self.config.k,
                                          item_i=top[0][0] if top else "",
                                          flags=["short_recommendations"])
            bundle.rendered = ex.POPULARITY_SENTENCE if s.style == "popularity" else ""
            return bundle
        (item_i, score_i), (item_j, score_j) = top
        profile = None
        if s.style in ("pointwise", "pairwise"):
            ae, x = self._train_for(s)
            profile = extract_profile(ae, x, art.space, user=s.user_id)
        return ex.build_bundle(s.style, profile=profile, item_i=item_i, item_j=item_j,
                               mask=art.mask, space=art.space, catalog=self.catalog,
                               k=self.config.k, seed=s.seed,
                               score_i=score_i, score_j=score_j)

    def capture_post_explanation(self, sid: str, stars: dict[str, int]) -> StudySession:
        with self._lock:
            s = self._session(sid)
            self._require_step(s, "explain_rerate")
            clean = self._check_stars(stars, set(s.top_items(self.config.rerate_top)))
            return self._emit(sid, "explain_rerated", {"stars": clean})

    def capture_post_trailer(self, sid: str, stars: dict[str, int]) -> StudySession:
        with self._lock:
            s = self._session(sid)
            self._require_step(s, "trailer_rerate")
            clean = self._check_stars(stars, set(s.top_items(self.config.rerate_top)))
            return self._emit(sid, "trailer_rerated", {"stars": clean})

    def submit_questionnaire(self, sid: str, transparency: bool | None,
                             trust: bool | None, satisfaction: str | None) -> StudySession:
        with self._lock:
            s = self._session(sid)
            self._require_step(s, "questionnaire")
            if transparency is None or trust is None or satisfaction is None:
                raise RejectedInputError("all three questionnaire items must be answered")
            if satisfaction not in SATISFACTION_SCALE:
                raise RejectedInputError(
                    f"satisfaction must be one of {sorted(SATISFACTION_SCALE)}")
            answers = {"transparency": bool(transparency), "trust": bool(trust),
                       "satisfaction": satisfaction,
                       "satisfaction_score": SATISFACTION_SCALE[satisfaction]}
            return self._emit(sid, "questionnaire", {"answers": answers})

    def trailer_urls(self, sid: str) -> dict[str, str | None]:
        s = self.get_session(sid)
        return {item: self.catalog.item(item).trailer_url
                for item in s.top_items(self.config.rerate_top)}

    # --- metrics ------------------------------------------------------------

    def arm_records(self) -> list[ArmRecords]:
        """Collect RatingTriplets and questionnaire answers from done sessions."""
        by_arm: dict[tuple[str, str], ArmRecords] = {}
        for style, mode in self.config.arms():
            by_arm[(style, mode)] = ArmRecords(style=style, mode=mode)
        for s in self.sessions.values():
            if s.step != "done":
                continue
            arm = by_arm.setdefault((s.style, s.mode), ArmRecords(style=s.style, mode=s.mode))
            for item in s.top_items(self.config.rerate_top):
                arm.triplets.append(RatingTriplet(
                    user=s.user_id, item=item,
                    r=float(s.pre_ratings[item]),
                    r_e=float(s.post_explanation_ratings[item]),
                    r_t=float(s.post_trailer_ratings[item])))
            q = s.questionnaire or {}
            arm.answers.append(QuestionnaireAnswer(
                user=s.user_id, transparency=q["transparency"], trust=q["trust"],
                satisfaction=q["satisfaction"]))
        return list(by_arm.values())

    def report(self) -> dict:
        return metrics_report(self.arm_records(), n_rerated=self.config.rerate_top)
