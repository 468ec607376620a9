"""Triple / ratings / mapping ingestion and item-feature mask construction.

The mask is the binary item x feature adjacency that later gates which
autoencoder weights exist.  Everything built here is immutable after
construction and safe to share across training workers.
"""

from __future__ import annotations

import csv
import logging
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import KgrecError

log = logging.getLogger(__name__)

MODES = ("semantic", "factual", "both")

DEFAULT_CATEGORICAL = frozenset({"dct:subject"})
DEFAULT_FACTUAL = frozenset({"dbo:starring", "dbo:director", "dbo:writer"})


class DataFormatError(KgrecError):
    """Malformed input file."""


class ConfigError(KgrecError):
    """Invalid ingestion configuration."""


class EmptyFeatureSpaceError(KgrecError):
    """The active predicate set matched no triple of any catalog item."""


class DuplicateItemError(KgrecError):
    """The item mapping contains the same item id twice."""


def local_name(iri: str) -> str:
    """Human label for an IRI: the fragment after the last /, # or prefix colon,
    underscores replaced by spaces ("dbc:Cyberpunk_films" -> "Cyberpunk films")."""
    name = iri.rsplit("/", 1)[-1]
    name = name.rsplit("#", 1)[-1]
    if ":" in name:
        name = name.rsplit(":", 1)[-1]
    return name.replace("_", " ")


@dataclass(frozen=True)
class Triple:
    subject: str
    predicate: str
    object: str

    def __post_init__(self):
        if not (self.subject and self.predicate and self.object):
            raise DataFormatError(f"triple with empty field: {self!r}")


@dataclass(frozen=True)
class KgConfig:
    """Which slice of the graph feeds the feature space."""

    mode: str = "both"
    categorical_predicates: frozenset = DEFAULT_CATEGORICAL
    factual_predicates: frozenset = DEFAULT_FACTUAL

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if not self.active_predicates():
            raise ConfigError(f"mode {self.mode!r} has an empty predicate set")

    def active_predicates(self) -> frozenset:
        if self.mode == "semantic":
            return frozenset(self.categorical_predicates)
        if self.mode == "factual":
            return frozenset(self.factual_predicates)
        return frozenset(self.categorical_predicates) | frozenset(self.factual_predicates)


# N-Triples: <s> <p> <o> .   or   <s> <p> "literal"[@lang|^^<type>] .
_NT_LINE = re.compile(r"^<([^<>\s]+)>\s+<([^<>\s]+)>\s+(.+?)\s*\.\s*$")


def load_triples(path: str | Path, fmt: str = "ntriples") -> list[Triple]:
    """Parse a triple file, preserving order.

    Literal-valued objects cannot become mask features (features are graph
    entities), so those lines are dropped and counted instead of kept.
    """
    if fmt not in ("ntriples", "tsv"):
        raise ConfigError(f"unknown triple format {fmt!r}, expected 'ntriples' or 'tsv'")
    path = Path(path)
    triples: list[Triple] = []
    literals = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if fmt == "ntriples":
                m = _NT_LINE.match(line)
                if not m:
                    raise DataFormatError(f"{path}: malformed N-Triples at line {lineno}: {line!r}")
                subj, pred, obj = m.group(1), m.group(2), m.group(3)
                if obj.startswith('"'):
                    literals += 1
                    continue
                if not (obj.startswith("<") and obj.endswith(">")):
                    raise DataFormatError(f"{path}: malformed object at line {lineno}: {obj!r}")
                obj = obj[1:-1]
            else:
                parts = line.split("\t")
                if len(parts) != 3:
                    raise DataFormatError(
                        f"{path}: expected 3 tab-separated fields at line {lineno}, got {len(parts)}"
                    )
                subj, pred, obj = (p.strip() for p in parts)
            triples.append(Triple(subj, pred, obj))
    log.info("loaded %d triples from %s (%d literal objects skipped)", len(triples), path, literals)
    return triples


@dataclass(frozen=True)
class CatalogItem:
    item_id: str
    entity_iri: str
    title: str
    trailer_url: str | None = None


class Catalog:
    """Ordered item list; row positions are the autoencoder's input indices."""

    def __init__(self, items: Iterable[CatalogItem]):
        self.items: list[CatalogItem] = list(items)
        self.index: dict[str, int] = {}
        self._rows_by_iri: dict[str, list[int]] = {}
        for row, it in enumerate(self.items):
            if it.item_id in self.index:
                raise DuplicateItemError(f"duplicate item id {it.item_id!r}")
            self.index[it.item_id] = row
            self._rows_by_iri.setdefault(it.entity_iri, []).append(row)

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self.index

    def row(self, item_id: str) -> int:
        return self.index[item_id]

    def item(self, item_id: str) -> CatalogItem:
        return self.items[self.index[item_id]]

    def title(self, item_id: str) -> str:
        return self.items[self.index[item_id]].title

    def rows_for_iri(self, iri: str) -> list[int]:
        return self._rows_by_iri.get(iri, [])

    def ids(self) -> list[str]:
        return [it.item_id for it in self.items]


def load_item_mapping(path: str | Path) -> Catalog:
    """Read the item -> entity TSV (itemId, entityIRI, title[, trailerUrl])."""
    path = Path(path)
    items: list[CatalogItem] = []
    seen: set[str] = set()
    excluded = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if lineno == 1 and parts[0].strip().lower() == "itemid":
                continue
            if len(parts) < 3:
                raise DataFormatError(f"{path}: expected >=3 tab-separated fields at line {lineno}")
            item_id, iri, title = parts[0].strip(), parts[1].strip(), parts[2].strip()
            trailer = parts[3].strip() if len(parts) > 3 and parts[3].strip() else None
            if not item_id:
                raise DataFormatError(f"{path}: empty item id at line {lineno}")
            if item_id in seen:
                raise DuplicateItemError(f"{path}: duplicate item id {item_id!r} at line {lineno}")
            seen.add(item_id)
            if not iri:
                excluded += 1
                continue
            items.append(CatalogItem(item_id, iri, title, trailer))
    log.info("loaded %d catalog items from %s (%d without entity IRI excluded)", len(items), path, excluded)
    catalog = Catalog(items)
    catalog.excluded_count = excluded  # type: ignore[attr-defined]
    return catalog


@dataclass(frozen=True)
class Feature:
    iri: str
    predicate: str
    label: str

    @property
    def key(self) -> tuple[str, str]:
        return (self.predicate, self.iri)


class FeatureSpace:
    """Deterministically ordered feature columns, keyed by (predicate, entity IRI).

    The same entity reached through two predicates is two distinct features;
    explanation lines are labeled per predicate.
    """

    def __init__(self, features: Iterable[Feature]):
        self.features: list[Feature] = list(features)
        self.index: dict[tuple[str, str], int] = {f.key: col for col, f in enumerate(self.features)}
        if len(self.index) != len(self.features):
            raise ConfigError("duplicate feature keys in feature space")

    def __len__(self) -> int:
        return len(self.features)

    def feature(self, col: int) -> Feature:
        return self.features[col]

    def col(self, predicate: str, iri: str) -> int:
        return self.index[(predicate, iri)]


class MaskMatrix:
    """Sparse binary item x feature adjacency; stored entries are the ones."""

    def __init__(self, m: int, n: int, entries: Iterable[tuple[int, int]]):
        coords = sorted(set(entries))
        self.m = int(m)
        self.n = int(n)
        self.rows = np.asarray([r for r, _ in coords], dtype=np.int64)
        self.cols = np.asarray([c for _, c in coords], dtype=np.int64)
        if len(coords) and (self.rows.min() < 0 or self.rows.max() >= m
                            or self.cols.min() < 0 or self.cols.max() >= n):
            raise ConfigError("mask entry out of bounds")

    @property
    def nnz(self) -> int:
        return len(self.rows)

    def dense(self) -> np.ndarray:
        d = np.zeros((self.m, self.n))
        d[self.rows, self.cols] = 1.0
        return d

    def row_support(self, i: int) -> np.ndarray:
        """Feature columns connected to item row i."""
        lo = np.searchsorted(self.rows, i, side="left")
        hi = np.searchsorted(self.rows, i, side="right")
        return self.cols[lo:hi]

    def featureless_rows(self) -> list[int]:
        present = set(self.rows.tolist())
        return [i for i in range(self.m) if i not in present]

    def transpose_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Entries of the transposed mask as (feature, item), sorted by (feature, item)."""
        order = np.lexsort((self.rows, self.cols))
        return self.cols[order], self.rows[order]

    def __eq__(self, other) -> bool:
        return (isinstance(other, MaskMatrix) and self.m == other.m and self.n == other.n
                and np.array_equal(self.rows, other.rows) and np.array_equal(self.cols, other.cols))


def build_feature_space(triples: Iterable[Triple], catalog: Catalog,
                        config: KgConfig) -> tuple[FeatureSpace, MaskMatrix]:
    """Collect every (item, predicate, entity) edge under the active config.

    Columns are sorted by (predicate, IRI) so repeated builds are identical.
    Items with no feature under the config stay in the catalog but are
    reported; they cannot anchor a content-based explanation.
    """
    if len(catalog) == 0:
        raise ConfigError("catalog is empty")
    active = config.active_predicates()
    keys: set[tuple[str, str]] = set()
    raw_entries: set[tuple[int, tuple[str, str]]] = set()
    for t in triples:
        if t.predicate not in active:
            continue
        rows = catalog.rows_for_iri(t.subject)
        if not rows:
            continue
        key = (t.predicate, t.object)
        keys.add(key)
        for r in rows:
            raw_entries.add((r, key))
    if not keys:
        raise EmptyFeatureSpaceError(f"empty feature space under mode={config.mode!r}")
    ordered = sorted(keys)
    space = FeatureSpace(Feature(iri=iri, predicate=pred, label=local_name(iri))
                         for pred, iri in ordered)
    mask = MaskMatrix(len(catalog), len(space),
                      ((r, space.index[key]) for r, key in raw_entries))
    lonely = mask.featureless_rows()
    if lonely:
        log.warning("%d catalog items have no feature under mode=%s: %s",
                    len(lonely), config.mode,
                    ", ".join(catalog.items[i].item_id for i in lonely[:10]))
    return space, mask


@dataclass(frozen=True)
class RatingRecord:
    user_id: str
    item_id: str
    rating: float
    timestamp: int


class RatingsTable:
    def __init__(self, records: Iterable[RatingRecord], scale: tuple[float, float] = (0.5, 5.0),
                 dropped: int = 0):
        self.records: list[RatingRecord] = list(records)
        self.scale = scale
        self.dropped = dropped
        self.by_user: dict[str, dict[str, RatingRecord]] = {}
        for rec in self.records:
            self.by_user.setdefault(rec.user_id, {})[rec.item_id] = rec

    def __len__(self) -> int:
        return len(self.records)

    def users(self) -> list[str]:
        return sorted(self.by_user)

    def user_ratings(self, user_id: str) -> dict[str, float]:
        return {i: rec.rating for i, rec in self.by_user.get(user_id, {}).items()}

    def item_counts(self) -> Counter:
        return Counter(rec.item_id for rec in self.records)


def load_ratings(path: str | Path, scale: tuple[float, float] = (0.5, 5.0)) -> RatingsTable:
    """Read a ratings CSV with header userId,movieId,rating,timestamp.

    Duplicate (user, item) pairs keep the latest timestamp; ratings outside
    the scale are dropped and counted.
    """
    path = Path(path)
    lo, hi = scale
    kept: dict[tuple[str, str], RatingRecord] = {}
    dropped = 0
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"userId", "movieId", "rating", "timestamp"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DataFormatError(
                f"{path}: expected columns userId,movieId,rating,timestamp, got {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rating = float(row["rating"])
                ts = int(row["timestamp"])
            except (TypeError, ValueError) as exc:
                raise DataFormatError(f"{path}: bad numeric field at line {lineno}") from exc
            if not (lo <= rating <= hi):
                dropped += 1
                continue
            rec = RatingRecord(row["userId"].strip(), row["movieId"].strip(), rating, ts)
            key = (rec.user_id, rec.item_id)
            prev = kept.get(key)
            if prev is None or rec.timestamp >= prev.timestamp:
                kept[key] = rec
    records = list(kept.values())
    log.info("loaded %d ratings from %s (%d outside scale dropped)", len(records), path, dropped)
    if dropped:
        log.warning("%d ratings outside scale [%s, %s] dropped", dropped, lo, hi)
    return RatingsTable(records, scale=scale, dropped=dropped)


# --- disk formats -----------------------------------------------------------

def write_mask(mask: MaskMatrix, path: str | Path) -> None:
    """Coordinate text format: header 'rows cols nnz', then sorted 0-based 'i j' lines."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"{mask.m} {mask.n} {mask.nnz}\n")
        for i, j in zip(mask.rows, mask.cols):
            fh.write(f"{i} {j}\n")


def read_mask(path: str | Path) -> MaskMatrix:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise DataFormatError(f"{path}: bad mask header")
        m, n, nnz = (int(x) for x in header)
        entries = []
        for line in fh:
            if not line.strip():
                continue
            i, j = line.split()
            entries.append((int(i), int(j)))
    if len(entries) != nnz:
        raise DataFormatError(f"{path}: header says nnz={nnz} but file has {len(entries)} entries")
    return MaskMatrix(m, n, entries)


def write_features(space: FeatureSpace, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("col\tpredicate\tfeatureIRI\tlabel\n")
        for col, f in enumerate(space.features):
            fh.write(f"{col}\t{f.predicate}\t{f.iri}\t{f.label}\n")


def read_features(path: str | Path) -> FeatureSpace:
    path = Path(path)
    feats = []
    with path.open(encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("col\t"):
            raise DataFormatError(f"{path}: bad feature index header")
        for line in fh:
            if not line.strip():
                continue
            _, pred, iri, label = line.rstrip("\n").split("\t")
            feats.append(Feature(iri=iri, predicate=pred, label=label))
    return FeatureSpace(feats)


def write_catalog(catalog: Catalog, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("itemId\tentityIRI\ttitle\ttrailerUrl\n")
        for it in catalog.items:
            fh.write(f"{it.item_id}\t{it.entity_iri}\t{it.title}\t{it.trailer_url or ''}\n")
