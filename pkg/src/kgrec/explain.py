"""The four explanation styles and their fixed-template rendering.

Selection rules, with k defaulting to 5 everywhere a style selects features:

* popularity      - no features, one canned sentence.
* non_personalized- k features sampled uniformly from F_i union F_j.
* pointwise       - top-k profile-weighted features of each item.
* pairwise        - the pointwise list for the higher-ranked item; the lower
                    item's list is refilled from its remaining features so
                    the two lists never overlap (shared features are always
                    awarded to the winner).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .data import FeatureSpace, Feature, MaskMatrix, Catalog, local_name
from .errors import KgrecError
from .profiles import UserProfile

STYLES = ("popularity", "non_personalized", "pointwise", "pairwise")
DEFAULT_K = 5

POPULARITY_SENTENCE = ("We suggest these items since they are very popular "
                       "among people who like the same movies as you.")


class UnknownItemError(KgrecError):
    pass


class PairwiseOrderError(KgrecError):
    """Pairwise explanations require the first item to outrank the second."""


class RenderError(KgrecError):
    pass


@dataclass(frozen=True)
class SelectedFeature:
    predicate: str
    iri: str
    label: str
    weight: float | None  # None for the random (non-personalized) style

    @property
    def key(self) -> tuple[str, str]:
        return (self.predicate, self.iri)


@dataclass
class ExplanationBundle:
    style: str
    k: int
    item_i: str
    item_j: str | None = None
    features_i: list[SelectedFeature] = field(default_factory=list)
    features_j: list[SelectedFeature] = field(default_factory=list)
    rendered: str = ""
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        def feats(fs):
            return [{"predicate": f.predicate, "iri": f.iri, "label": f.label,
                     "weight": f.weight} for f in fs]
        return {
            "style": self.style,
            "k": self.k,
            "item_i": self.item_i,
            "item_j": self.item_j,
            "features_i": feats(self.features_i),
            "features_j": feats(self.features_j),
            "rendered": self.rendered,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExplanationBundle":
        def feats(rows):
            return [SelectedFeature(r["predicate"], r["iri"], r["label"], r["weight"])
                    for r in rows]
        return cls(style=d["style"], k=d["k"], item_i=d["item_i"], item_j=d["item_j"],
                   features_i=feats(d["features_i"]), features_j=feats(d["features_j"]),
                   rendered=d["rendered"], flags=list(d["flags"]))


def item_features(item_id: str, mask: MaskMatrix, space: FeatureSpace,
                  catalog: Catalog) -> frozenset[Feature]:
    """The mask-row support of an item, as feature descriptors."""
    if item_id not in catalog:
        raise UnknownItemError(f"unknown item {item_id!r}")
    row = catalog.row(item_id)
    return frozenset(space.feature(int(col)) for col in mask.row_support(row))


def _ranked(profile: UserProfile, features: Iterable[Feature]) -> list[SelectedFeature]:
    """Features sorted by descending profile weight, ties by (predicate, IRI)."""
    selected = []
    for f in features:
        w = profile.weight_of(f.predicate, f.iri)
        selected.append(SelectedFeature(f.predicate, f.iri, f.label, w))
    selected.sort(key=lambda s: (-s.weight, s.key))
    return selected


def pointwise(profile: UserProfile, features_i: Iterable[Feature], k: int = DEFAULT_K
              ) -> list[SelectedFeature]:
    """Top-k profile-weighted features among the item's own features."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return _ranked(profile, features_i)[:k]


def pairwise(profile: UserProfile, features_i: Iterable[Feature],
             features_j: Iterable[Feature], k: int = DEFAULT_K,
             score_i: float | None = None, score_j: float | None = None,
             ) -> tuple[list[SelectedFeature], list[SelectedFeature]]:
    """Disjoint lists justifying ranking item i above item j.

    Shared features stay with i.  The replacement features drawn for j are
    themselves excluded if they collide with i's list, and the refill
    continues until j holds k features or runs out.
    """
    if score_i is not None and score_j is not None and score_i <= score_j:
        raise PairwiseOrderError(
            f"pairwise explanation requires score_i > score_j (got {score_i} <= {score_j})")
    list_i = pointwise(profile, features_i, k)
    taken = {s.key for s in list_i}
    list_j = [s for s in _ranked(profile, features_j) if s.key not in taken][:k]
    return list_i, list_j


def non_personalized(features_i: Iterable[Feature], features_j: Iterable[Feature],
                     k: int = DEFAULT_K, seed: int = 0) -> list[SelectedFeature]:
    """Uniform sample without replacement from F_i union F_j."""
    if k < 1:
        raise ValueError("k must be >= 1")
    union = sorted({f for f in features_i} | {f for f in features_j},
                   key=lambda f: f.key)
    rng = random.Random(seed)
    chosen = rng.sample(union, min(k, len(union)))
    return [SelectedFeature(f.predicate, f.iri, f.label, None) for f in chosen]


def _feature_lines(features: list[SelectedFeature]) -> str:
    return "\n".join(f"- ({local_name(s.predicate)}) {s.label}" for s in features)


def render(bundle: ExplanationBundle, titles: Mapping[str, str]) -> str:
    """Fill the style's fixed template; pure function of the bundle."""
    def title(item_id: str) -> str:
        try:
            return titles[item_id]
        except KeyError:
            raise RenderError(f"no title for item {item_id!r}")

    if bundle.style == "popularity":
        return POPULARITY_SENTENCE

    ti = title(bundle.item_i)
    if bundle.style == "pairwise":
        if bundle.item_j is None:
            raise RenderError("pairwise bundle lacks the second item")
        tj = title(bundle.item_j)
        return (f"We guess you would like to watch {ti} more than {tj} "
                f"because you may prefer:\n{_feature_lines(bundle.features_i)}\n"
                f"over:\n{_feature_lines(bundle.features_j)}")

    if bundle.style in ("pointwise", "non_personalized"):
        if bundle.item_j is not None:
            tj = title(bundle.item_j)
            head = f"We guess you would like to watch {ti} and {tj} since they are about:"
        else:
            head = f"We guess you would like to watch {ti} since it is about:"
        body = _feature_lines(bundle.features_i)
        if bundle.style == "pointwise" and bundle.item_j is not None:
            return f"{head}\n{body}\nand:\n{_feature_lines(bundle.features_j)}"
        return f"{head}\n{body}"

    raise RenderError(f"unknown style {bundle.style!r}")


def build_bundle(style: str, *, profile: UserProfile | None, item_i: str,
                 item_j: str | None, mask: MaskMatrix, space: FeatureSpace,
                 catalog: Catalog, k: int = DEFAULT_K, seed: int = 0,
                 score_i: float | None = None, score_j: float | None = None,
                 ) -> ExplanationBundle:
    """Assemble feature selections plus rendered text for one top-2 pair."""
    if style not in STYLES:
        raise ValueError(f"unknown style {style!r}, expected one of {STYLES}")
    bundle = ExplanationBundle(style=style, k=k, item_i=item_i, item_j=item_j)
    if style != "popularity":
        f_i = item_features(item_i, mask, space, catalog)
        f_j = item_features(item_j, mask, space, catalog) if item_j is not None else frozenset()
        if not f_i:
            bundle.flags.append("empty_features_i")
        if item_j is not None and not f_j:
            bundle.flags.append("empty_features_j")
        if style == "pointwise":
            assert profile is not None
            bundle.features_i = pointwise(profile, f_i, k)
            if item_j is not None:
                bundle.features_j = pointwise(profile, f_j, k)
        elif style == "pairwise":
            assert profile is not None
            bundle.features_i, bundle.features_j = pairwise(
                profile, f_i, f_j, k, score_i=score_i, score_j=score_j)
            if f_j and not bundle.features_j:
                bundle.flags.append("exhausted_features_j")
        else:
            bundle.features_i = non_personalized(f_i, f_j, k, seed=seed)
    titles = {item_id: catalog.title(item_id)
              for item_id in (bundle.item_i, bundle.item_j) if item_id is not None}
    bundle.rendered = render(bundle, titles)
    return bundle


def write_bundles(bundles: Iterable[ExplanationBundle], path: str | Path) -> None:
    """Line-delimited JSON export, one bundle per line."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for b in bundles:
            fh.write(json.dumps(b.to_dict(), sort_keys=True) + "\n")
