"""Study metrics: persuasiveness, effectiveness, questionnaire scores,
Wilcoxon rank-sum significance, and the per-arm report.

Persuasiveness is the mean (over users) of the mean rating delta once the
explanation is shown; positive means the explanation raised ratings.
Effectiveness is the mean of mean absolute gaps between the post-explanation
rating and the post-trailer rating; lower means the explanation let the user
estimate the item better.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import KgrecError

SATISFACTION_SCALE = {"really": 2, "partially": 1, "does_not": 0}
MIN_SAMPLE_SIZE = 73
EXACT_WILCOXON_MAX_N = 12


class MetricsError(KgrecError):
    pass


@dataclass(frozen=True)
class RatingTriplet:
    """Ratings of one recommended item: before explanation (r), after the
    explanation (r_e) and after watching the trailer (r_t)."""

    user: str
    item: str
    r: float
    r_e: float | None = None
    r_t: float | None = None


@dataclass(frozen=True)
class QuestionnaireAnswer:
    user: str
    transparency: bool
    trust: bool
    satisfaction: str  # "really" | "partially" | "does_not"

    def __post_init__(self):
        if self.satisfaction not in SATISFACTION_SCALE:
            raise MetricsError(f"unknown satisfaction answer {self.satisfaction!r}")


def _group_by_user(records: Iterable[RatingTriplet], n: int) -> dict[str, list[RatingTriplet]]:
    groups: dict[str, list[RatingTriplet]] = {}
    for rec in records:
        groups.setdefault(rec.user, []).append(rec)
    for user, recs in groups.items():
        if len(recs) != n:
            raise MetricsError(f"user {user!r} has {len(recs)} records, expected {n}")
    if not groups:
        raise MetricsError("no records")
    return groups


def per_user_persuasiveness(records: Iterable[RatingTriplet], n: int) -> dict[str, float]:
    groups = _group_by_user(records, n)
    out: dict[str, float] = {}
    for user, recs in groups.items():
        deltas = []
        for rec in recs:
            if rec.r_e is None:
                raise MetricsError(f"missing post-explanation rating for user {rec.user!r} item {rec.item!r}")
            deltas.append(rec.r_e - rec.r)
        out[user] = sum(deltas) / n
    return out


def persuasiveness(records: Iterable[RatingTriplet], n: int) -> float:
    per_user = per_user_persuasiveness(records, n)
    return sum(per_user.values()) / len(per_user)


def per_user_effectiveness(records: Iterable[RatingTriplet], n: int) -> dict[str, float]:
    groups = _group_by_user(records, n)
    out: dict[str, float] = {}
    for user, recs in groups.items():
        gaps = []
        for rec in recs:
            if rec.r_e is None or rec.r_t is None:
                raise MetricsError(f"missing rating for user {rec.user!r} item {rec.item!r}")
            gaps.append(abs(rec.r_e - rec.r_t))
        out[user] = sum(gaps) / n
    return out


def effectiveness(records: Iterable[RatingTriplet], n: int) -> float:
    per_user = per_user_effectiveness(records, n)
    return sum(per_user.values()) / len(per_user)


def questionnaire_metrics(answers: Sequence[QuestionnaireAnswer]) -> tuple[float, float, float]:
    """(transparency, trust, satisfaction): the first two are the fraction of
    positive answers, the third the mean of the mapped {2, 1, 0} scale."""
    if not answers:
        raise MetricsError("empty questionnaire answer list")
    t = sum(1 for a in answers if a.transparency) / len(answers)
    r = sum(1 for a in answers if a.trust) / len(answers)
    s = sum(SATISFACTION_SCALE[a.satisfaction] for a in answers) / len(answers)
    return t, r, s


# --- Wilcoxon rank-sum (Mann-Whitney U) -------------------------------------

def _midranks(pooled: Sequence[float]) -> list[float]:
    """Fractional ranks, 1-based; tied values share the mean of their ranks."""
    order = sorted(range(len(pooled)), key=lambda i: pooled[i])
    ranks = [0.0] * len(pooled)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and pooled[order[j + 1]] == pooled[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for t in range(i, j + 1):
            ranks[order[t]] = avg
        i = j + 1
    return ranks


def _u_statistic(ranks_a: Sequence[float], n_a: int) -> float:
    return sum(ranks_a) - n_a * (n_a + 1) / 2.0


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def wilcoxon_ranksum(a: Sequence[float], b: Sequence[float],
                     method: str = "auto") -> tuple[float, float]:
    """Two-sided rank-sum test; returns (U of sample a, p-value).

    Ties get midranks.  With a pooled size of at most 12 the p-value comes
    from full enumeration of rank assignments; beyond that a normal
    approximation with tie and continuity corrections is used.
    """
    a = list(a)
    b = list(b)
    if not a or not b:
        raise MetricsError("both samples must be non-empty")
    if method not in ("auto", "exact", "normal"):
        raise ValueError(f"unknown method {method!r}")
    n_a, n_b = len(a), len(b)
    n = n_a + n_b
    pooled = a + b
    ranks = _midranks(pooled)
    u_obs = _u_statistic(ranks[:n_a], n_a)
    mu = n_a * n_b / 2.0

    if method == "exact" or (method == "auto" and n <= EXACT_WILCOXON_MAX_N):
        dev = abs(u_obs - mu)
        hits = 0
        total = 0
        for combo in itertools.combinations(range(n), n_a):
            u = _u_statistic([ranks[i] for i in combo], n_a)
            if abs(u - mu) >= dev - 1e-9:
                hits += 1
            total += 1
        return u_obs, hits / total

    # normal approximation with tie correction
    counts: dict[float, int] = {}
    for v in pooled:
        counts[v] = counts.get(v, 0) + 1
    tie_term = sum(c ** 3 - c for c in counts.values())
    var = n_a * n_b / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0:
        return u_obs, 1.0  # all observations tied
    z = (abs(u_obs - mu) - 0.5) / math.sqrt(var)
    if z < 0:
        z = 0.0
    return u_obs, min(1.0, 2.0 * _normal_sf(z))


@dataclass(frozen=True)
class GateReport:
    n: int
    minimum: int
    passed: bool


def sample_size_gate(n_per_arm: int, minimum: int = MIN_SAMPLE_SIZE) -> GateReport:
    """Flag an arm as under-powered when it has fewer than the minimum subjects."""
    if n_per_arm < 0:
        raise ValueError("sample size cannot be negative")
    return GateReport(n=n_per_arm, minimum=minimum, passed=n_per_arm >= minimum)


# --- per-arm report ----------------------------------------------------------

@dataclass
class ArmRecords:
    """All completed-session records of one (style x KG mode) study arm."""

    style: str
    mode: str
    triplets: list[RatingTriplet] = field(default_factory=list)
    answers: list[QuestionnaireAnswer] = field(default_factory=list)

    @property
    def name(self) -> str:
        return f"{self.style}/{self.mode}"


def metrics_report(arms: Sequence[ArmRecords], n_rerated: int = 2,
                   minimum: int = MIN_SAMPLE_SIZE) -> dict:
    """Machine-readable per-arm metrics block plus pairwise significance.

    The rank-sum test is run on the per-user persuasiveness values and,
    labeled separately, on the per-user effectiveness values of every arm
    pair, since either quantity can carry the arm difference.
    """
    report: dict = {
        "schema_version": "1",
        "n_rerated": n_rerated,
        "satisfaction_scale": dict(SATISFACTION_SCALE),
        "minimum_sample_size": minimum,
        "arms": {},
        "wilcoxon": {"persuasiveness": {}, "effectiveness": {}},
    }
    per_user_p: dict[str, list[float]] = {}
    per_user_e: dict[str, list[float]] = {}
    for arm in sorted(arms, key=lambda a: a.name):
        users_p = per_user_persuasiveness(arm.triplets, n_rerated) if arm.triplets else {}
        users_e = per_user_effectiveness(arm.triplets, n_rerated) if arm.triplets else {}
        n_users = len(users_p)
        gate = sample_size_gate(n_users, minimum)
        block: dict = {"n": n_users, "sample_size_ok": gate.passed}
        if n_users:
            block.update({
                "persuasiveness": sum(users_p.values()) / n_users,
                "effectiveness": sum(users_e.values()) / n_users,
            })
        if arm.answers:
            t, r, s = questionnaire_metrics(arm.answers)
            block.update({"transparency": t, "trust": r, "satisfaction": s})
        report["arms"][arm.name] = block
        per_user_p[arm.name] = [users_p[u] for u in sorted(users_p)]
        per_user_e[arm.name] = [users_e[u] for u in sorted(users_e)]

    for (a, b) in itertools.combinations(sorted(per_user_p), 2):
        if per_user_p[a] and per_user_p[b]:
            _, p = wilcoxon_ranksum(per_user_p[a], per_user_p[b])
            report["wilcoxon"]["persuasiveness"][f"{a} vs {b}"] = p
        if per_user_e[a] and per_user_e[b]:
            _, p = wilcoxon_ranksum(per_user_e[a], per_user_e[b])
            report["wilcoxon"]["effectiveness"][f"{a} vs {b}"] = p
    return report


def report_json(report: dict) -> str:
    """Canonical byte-stable JSON encoding of a report."""
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def render_report(report: dict) -> str:
    """Human-readable block per arm."""
    lines = []
    for name, block in report["arms"].items():
        lines.append(f"arm {name}")
        lines.append(f"  n={block['n']} sample_size_ok={block['sample_size_ok']}")
        if "persuasiveness" in block:
            lines.append(f"  persuasiveness={block['persuasiveness']:+.4f}")
            lines.append(f"  effectiveness={block['effectiveness']:.4f}")
        if "transparency" in block:
            lines.append(f"  transparency={block['transparency']:.3f}"
                         f" trust={block['trust']:.3f}"
                         f" satisfaction={block['satisfaction']:.3f}")
    for label in ("persuasiveness", "effectiveness"):
        pairs = report["wilcoxon"][label]
        if pairs:
            lines.append(f"wilcoxon rank-sum on per-user {label}:")
            for pair, p in sorted(pairs.items()):
                lines.append(f"  {pair}: p={p:.6g}")
    return "\n".join(lines) + "\n"
