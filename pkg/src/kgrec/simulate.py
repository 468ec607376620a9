"""Synthetic participants for offline study runs.

Each simulated user carries a latent affinity in [0, 1] per feature column;
an item's appeal is the mean affinity over its features.  Appeal drives the
selection, every star rating, and the questionnaire.  The explanation
response is explicit configuration: `lift` says how many stars a user adds
(or removes) after seeing each style, which makes the expected
persuasiveness of an arm a designed-in quantity that tests can assert.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import KgrecError
from .study import StudyEngine, StudySession

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CohortModel:
    """Behavior knobs for the synthetic cohort."""

    lift: dict = field(default_factory=lambda: {
        "popularity": 0, "non_personalized": 0, "pointwise": 1, "pairwise": 1})
    seed: int = 0

    def lift_for(self, style: str) -> int:
        return int(self.lift.get(style, 0))


class _SimulatedUser:
    def __init__(self, engine: StudyEngine, affinity: np.ndarray, model: CohortModel):
        self.engine = engine
        # appeal is judged on the richest configured mode so behavior does not
        # depend on which arm the user lands in
        mode = "both" if "both" in engine.artifacts else next(iter(engine.artifacts))
        self.art = engine.artifacts[mode]
        self.affinity = affinity
        self.model = model

    def appeal(self, item_id: str) -> float:
        row = self.engine.catalog.row(item_id)
        cols = self.art.mask.row_support(row)
        if len(cols) == 0:
            return 0.5
        return float(np.mean(self.affinity[cols]))

    def stars(self, item_id: str) -> int:
        return int(np.clip(round(1 + 4 * self.appeal(item_id)), 1, 5))

    def run(self, session: StudySession) -> StudySession:
        eng = self.engine
        sid = session.session_id
        take = eng.config.min_select
        chosen = sorted(session.candidates, key=lambda i: (-self.appeal(i), i))[:take]
        eng.submit_selection(sid, chosen)
        eng.submit_ratings(sid, {i: self.stars(i) for i in chosen})
        s = eng.get_session(sid)
        top5 = s.top_items(eng.config.top_n)
        pre = {i: self.stars(i) for i in top5}
        s, _bundle = eng.capture_pre_ratings(sid, pre)
        top2 = s.top_items(eng.config.rerate_top)
        delta = self.model.lift_for(s.style)
        r_e = {i: int(np.clip(pre[i] + delta, 1, 5)) for i in top2}
        eng.capture_post_explanation(sid, r_e)
        # the trailer reveals the item; the user falls back on true appeal
        eng.capture_post_trailer(sid, {i: self.stars(i) for i in top2})
        personalized = s.style in ("pointwise", "pairwise")
        satisfaction = "really" if personalized else (
            "partially" if s.style == "non_personalized" else "does_not")
        return eng.submit_questionnaire(sid, transparency=personalized,
                                        trust=personalized, satisfaction=satisfaction)


def simulate_cohort(engine: StudyEngine, per_arm: int,
                    model: CohortModel | None = None) -> None:
    """Drive `per_arm` complete synthetic sessions through every configured arm."""
    if per_arm < 1:
        raise KgrecError("per_arm must be >= 1")
    model = model or CohortModel()
    mode = "both" if "both" in engine.artifacts else next(iter(engine.artifacts))
    n_features = len(engine.artifacts[mode].space)
    arms = engine.config.arms()
    rng = np.random.default_rng(model.seed)
    for arm_idx, arm in enumerate(arms):
        for u in range(per_arm):
            affinity = rng.uniform(0.0, 1.0, n_features)
            session = engine.create_session(user_id=f"sim-{arm_idx}-{u}", arm=arm)
            _SimulatedUser(engine, affinity, model).run(session)
    log.info("simulated %d sessions across %d arms", per_arm * len(arms), len(arms))
