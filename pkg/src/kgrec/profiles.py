"""Labeled user profiles and score-ranked top-N recommendation.

The profile weight of a feature is its hidden activation on the user's
rating vector: a rating fed into an item node can only flow through the
features that item is connected to, so features attached to well-rated
items end up with larger activations.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .autoencoder import NotTrainedError, RatingVector, UserAutoencoder
from .data import Catalog, FeatureSpace


@dataclass(frozen=True)
class ProfileEntry:
    predicate: str
    iri: str
    label: str
    weight: float

    @property
    def key(self) -> tuple[str, str]:
        return (self.predicate, self.iri)


@dataclass(frozen=True)
class UserProfile:
    """One entry per feature column, sorted by descending weight, ties by key."""

    user: str
    entries: tuple[ProfileEntry, ...]

    def weight_of(self, predicate: str, iri: str) -> float:
        return self._weights[(predicate, iri)]

    @property
    def _weights(self) -> dict[tuple[str, str], float]:
        cached = self.__dict__.get("_weights_cache")
        if cached is None:
            cached = {e.key: e.weight for e in self.entries}
            self.__dict__["_weights_cache"] = cached
        return cached


@dataclass(frozen=True)
class RecommendationList:
    user: str
    items: tuple[tuple[str, float], ...]  # (item id, score), best first
    requested: int
    short: bool  # fewer unrated items existed than requested

    def top(self, k: int) -> tuple[tuple[str, float], ...]:
        return self.items[:k]


def extract_profile(ae: UserAutoencoder, x: RatingVector, space: FeatureSpace,
                    user: str = "") -> UserProfile:
    """Read the hidden activations off the trained model as the user profile."""
    if not ae.trained:
        raise NotTrainedError("profile extraction needs a trained autoencoder")
    if len(space) != ae.mask.n:
        raise ValueError(f"feature space size {len(space)} != mask columns {ae.mask.n}")
    h, _ = ae.forward(x)
    entries = [ProfileEntry(predicate=f.predicate, iri=f.iri, label=f.label, weight=float(h[col]))
               for col, f in enumerate(space.features)]
    entries.sort(key=lambda e: (-e.weight, e.key))
    return UserProfile(user=user, entries=tuple(entries))


def recommend(ae: UserAutoencoder, x: RatingVector, catalog: Catalog,
              n: int, user: str = "") -> RecommendationList:
    """Top-n unrated items by reconstruction score, ties broken by item id."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not ae.trained:
        raise NotTrainedError("recommendation needs a trained autoencoder")
    _, o = ae.forward(x)
    unrated = [(it.item_id, float(o[row]))
               for row, it in enumerate(catalog.items) if row not in x.rated]
    unrated.sort(key=lambda p: (-p[1], p[0]))
    return RecommendationList(user=user, items=tuple(unrated[:n]),
                              requested=n, short=len(unrated) < n)


def write_profile(profile: UserProfile, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("rank\tpredicate\tfeatureIRI\tweight\n")
        for rank, e in enumerate(profile.entries, start=1):
            fh.write(f"{rank}\t{e.predicate}\t{e.iri}\t{e.weight:.17g}\n")


def write_recommendations(rec: RecommendationList, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("rank\titemId\tscore\n")
        for rank, (item_id, score) in enumerate(rec.items, start=1):
            fh.write(f"{rank}\t{item_id}\t{score:.17g}\n")
