"""JSON-over-HTTP wire protocol for the study engine.

Every session response carries `schema_version`, `session_id` and `step`
plus whatever the current step needs (candidates with titles, the top-5
list, the explanation bundle, trailer URLs).  State transitions happen only
through the POST endpoints, so no client can drive the state machine off
the rails.
"""

from __future__ import annotations

import logging
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import __version__
from .errors import KgrecError
from .study import (RejectedInputError, SCHEMA_VERSION, StudyEngine, StudySession,
                    UnknownSessionError, WrongStepError)

log = logging.getLogger(__name__)


class CreateSessionBody(BaseModel):
    user_id: Optional[str] = None
    style: Optional[str] = None
    mode: Optional[str] = None


class SelectionBody(BaseModel):
    items: list[str]


class StarsBody(BaseModel):
    stars: dict[str, int]


class QuestionnaireBody(BaseModel):
    transparency: Optional[bool] = None
    trust: Optional[bool] = None
    satisfaction: Optional[str] = None


def session_payload(engine: StudyEngine, s: StudySession) -> dict:
    catalog = engine.catalog
    payload: dict = {
        "schema_version": SCHEMA_VERSION,
        "session_id": s.session_id,
        "user_id": s.user_id,
        "step": s.step,
        "style": s.style,
        "mode": s.mode,
        "min_select": engine.config.min_select,
        "rerate_top": engine.config.rerate_top,
        "candidates": [{"item_id": i, "title": catalog.title(i)} for i in s.candidates],
        "selected": list(s.selected),
    }
    if s.recommendations:
        payload["recommendations"] = [
            {"item_id": item, "title": catalog.title(item), "score": score}
            for item, score in s.recommendations]
    if s.explanation is not None:
        payload["explanation"] = s.explanation
    if s.step in ("trailer_rerate", "questionnaire", "done"):
        payload["trailers"] = [
            {"item_id": item, "title": catalog.title(item), "trailer_url": url}
            for item, url in engine.trailer_urls(s.session_id).items()]
    return payload


def create_app(engine: StudyEngine) -> FastAPI:
    app = FastAPI(title="kgrec study service", version=__version__)
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])

    def run(fn, *args):
        try:
            return fn(*args)
        except UnknownSessionError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except WrongStepError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except RejectedInputError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except KgrecError as exc:
            log.exception("engine failure")
            raise HTTPException(status_code=500, detail=str(exc))

    @app.get("/health")
    def health() -> dict:
        return {"schema_version": SCHEMA_VERSION, "version": __version__,
                "catalog_size": len(engine.catalog)}

    @app.post("/sessions")
    def create_session(body: CreateSessionBody) -> dict:
        arm = None
        if body.style is not None or body.mode is not None:
            if body.style is None or body.mode is None:
                raise HTTPException(status_code=422,
                                    detail="forcing an arm needs both style and mode")
            arm = (body.style, body.mode)
        s = run(engine.create_session, body.user_id, arm)
        return session_payload(engine, s)

    @app.get("/sessions/{sid}")
    def get_session(sid: str) -> dict:
        return session_payload(engine, run(engine.get_session, sid))

    @app.post("/sessions/{sid}/selection")
    def post_selection(sid: str, body: SelectionBody) -> dict:
        return session_payload(engine, run(engine.submit_selection, sid, body.items))

    @app.post("/sessions/{sid}/ratings")
    def post_ratings(sid: str, body: StarsBody) -> dict:
        return session_payload(engine, run(engine.submit_ratings, sid, body.stars))

    @app.get("/sessions/{sid}/recommendations")
    def get_recommendations(sid: str) -> dict:
        s = run(engine.get_session, sid)
        payload = session_payload(engine, s)
        payload.setdefault("recommendations", [])
        return payload

    @app.post("/sessions/{sid}/pre_ratings")
    def post_pre_ratings(sid: str, body: StarsBody) -> dict:
        def op():
            s, bundle = engine.capture_pre_ratings(sid, body.stars)
            return s
        return session_payload(engine, run(op))

    @app.post("/sessions/{sid}/explanation_ratings")
    def post_explanation_ratings(sid: str, body: StarsBody) -> dict:
        return session_payload(engine, run(engine.capture_post_explanation, sid, body.stars))

    @app.post("/sessions/{sid}/trailer_ratings")
    def post_trailer_ratings(sid: str, body: StarsBody) -> dict:
        return session_payload(engine, run(engine.capture_post_trailer, sid, body.stars))

    @app.post("/sessions/{sid}/questionnaire")
    def post_questionnaire(sid: str, body: QuestionnaireBody) -> dict:
        return session_payload(engine, run(engine.submit_questionnaire, sid,
                                           body.transparency, body.trust, body.satisfaction))

    @app.get("/metrics/report")
    def get_report() -> dict:
        return engine.report()

    return app
