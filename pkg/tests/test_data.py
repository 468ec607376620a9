import numpy as np
import pytest

from kgrec.data import (Catalog, CatalogItem, DataFormatError, ConfigError,
                        DuplicateItemError, EmptyFeatureSpaceError, KgConfig,
                        Triple, build_feature_space, load_item_mapping,
                        load_ratings, load_triples, local_name, read_features,
                        read_mask, write_features, write_mask)

from conftest import make_toy_kg


class TestLoadTriples:
    def test_ntriples_direct_parse(self, tmp_path):
        p = tmp_path / "t.nt"
        p.write_text("<dbr:I_Robot> <dct:subject> <dbc:Robot_films> .\n")
        triples = load_triples(p, "ntriples")
        assert triples == [Triple("dbr:I_Robot", "dct:subject", "dbc:Robot_films")]

    def test_tsv_starring_edge(self, tmp_path):
        p = tmp_path / "t.tsv"
        p.write_text("dbr:I_Robot\tdbo:starring\tdbr:Will_Smith\n")
        triples = load_triples(p, "tsv")
        assert triples == [Triple("dbr:I_Robot", "dbo:starring", "dbr:Will_Smith")]

    def test_empty_file(self, tmp_path):
        p = tmp_path / "t.nt"
        p.write_text("")
        assert load_triples(p, "ntriples") == []

    def test_malformed_line_reports_line_number(self, tmp_path):
        p = tmp_path / "t.nt"
        p.write_text("<a> <b> <c> .\nnot a triple\n")
        with pytest.raises(DataFormatError, match="line 2"):
            load_triples(p, "ntriples")

    def test_unknown_format(self, tmp_path):
        p = tmp_path / "t.nt"
        p.write_text("")
        with pytest.raises(ConfigError):
            load_triples(p, "xml")

    def test_literal_objects_are_dropped(self, tmp_path):
        p = tmp_path / "t.nt"
        p.write_text('<a> <p> "some literal" .\n<a> <p> <b> .\n')
        triples = load_triples(p, "ntriples")
        assert triples == [Triple("a", "p", "b")]

    def test_order_preserved_and_comments_skipped(self, tmp_path):
        p = tmp_path / "t.tsv"
        p.write_text("# header comment\nb\tp\tc\na\tp\tc\n")
        triples = load_triples(p, "tsv")
        assert [t.subject for t in triples] == ["b", "a"]


class TestKgConfig:
    def test_modes(self):
        assert KgConfig(mode="semantic").active_predicates() == {"dct:subject"}
        assert KgConfig(mode="factual").active_predicates() == {
            "dbo:starring", "dbo:director", "dbo:writer"}
        assert KgConfig(mode="both").active_predicates() == {
            "dct:subject", "dbo:starring", "dbo:director", "dbo:writer"}

    def test_bad_mode(self):
        with pytest.raises(ConfigError):
            KgConfig(mode="ontological")

    def test_empty_predicate_set(self):
        with pytest.raises(ConfigError):
            KgConfig(mode="semantic", categorical_predicates=frozenset())


@pytest.fixture
def small_catalog():
    return Catalog([CatalogItem("i1", "e1", "Item One"),
                    CatalogItem("i2", "e2", "Item Two")])


@pytest.fixture
def small_triples():
    return [Triple("e1", "dct:subject", "c1"),
            Triple("e1", "dbo:starring", "p1"),
            Triple("e2", "dct:subject", "c1")]


class TestBuildFeatureSpace:
    def test_semantic(self, small_triples, small_catalog):
        space, mask = build_feature_space(small_triples, small_catalog, KgConfig(mode="semantic"))
        assert [f.iri for f in space.features] == ["c1"]
        assert np.array_equal(mask.dense(), [[1.0], [1.0]])

    def test_both_mode_deterministic_order(self, small_triples, small_catalog):
        space, mask = build_feature_space(small_triples, small_catalog, KgConfig(mode="both"))
        # sorted by (predicate, IRI): dbo:starring < dct:subject
        assert [(f.predicate, f.iri) for f in space.features] == [
            ("dbo:starring", "p1"), ("dct:subject", "c1")]
        assert mask.nnz == 3

    def test_factual_reports_featureless_row(self, small_triples, small_catalog):
        space, mask = build_feature_space(small_triples, small_catalog, KgConfig(mode="factual"))
        assert [f.iri for f in space.features] == ["p1"]
        assert np.array_equal(mask.dense(), [[1.0], [0.0]])
        assert mask.featureless_rows() == [1]

    def test_empty_feature_space(self, small_catalog):
        with pytest.raises(EmptyFeatureSpaceError):
            build_feature_space([Triple("e1", "dbo:other", "z")], small_catalog,
                                KgConfig(mode="semantic"))

    def test_entry_bijection_against_rescan(self):
        triples, catalog = make_toy_kg(n_items=12, seed=3)
        config = KgConfig(mode="both")
        space, mask = build_feature_space(triples, catalog, config)
        got = {(int(i), int(j)) for i, j in zip(mask.rows, mask.cols)}
        # brute-force rescan of the adjacency definition
        expected = set()
        active = config.active_predicates()
        for t in triples:
            if t.predicate in active:
                for row in catalog.rows_for_iri(t.subject):
                    expected.add((row, space.col(t.predicate, t.object)))
        assert got == expected

    def test_repeated_builds_identical(self):
        triples, catalog = make_toy_kg(n_items=10, seed=5)
        a = build_feature_space(triples, catalog, KgConfig(mode="both"))
        b = build_feature_space(triples, catalog, KgConfig(mode="both"))
        assert a[1] == b[1]
        assert [f.key for f in a[0].features] == [f.key for f in b[0].features]

    def test_both_equals_union_of_semantic_and_factual(self):
        triples, catalog = make_toy_kg(n_items=15, seed=6)
        def entry_keys(mode):
            space, mask = build_feature_space(triples, catalog, KgConfig(mode=mode))
            return {(int(i), space.feature(int(j)).key)
                    for i, j in zip(mask.rows, mask.cols)}
        assert entry_keys("both") == entry_keys("semantic") | entry_keys("factual")

    def test_no_all_zero_columns(self, toy_space_mask):
        space, mask = toy_space_mask
        assert set(mask.cols.tolist()) == set(range(len(space)))


class TestLoadRatings:
    def header(self):
        return "userId,movieId,rating,timestamp\n"

    def test_direct_parse(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text(self.header() + "1,296,5.0,1147880044\n")
        table = load_ratings(p)
        assert table.user_ratings("1") == {"296": 5.0}

    def test_duplicate_keeps_latest_timestamp(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text(self.header() + "1,296,2.0,100\n1,296,4.0,200\n")
        assert load_ratings(p).user_ratings("1") == {"296": 4.0}
        p.write_text(self.header() + "1,296,4.0,200\n1,296,2.0,100\n")
        assert load_ratings(p).user_ratings("1") == {"296": 4.0}

    def test_out_of_scale_dropped_with_count(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text(self.header() + "1,296,7.0,100\n1,297,3.0,100\n")
        table = load_ratings(p)
        assert table.dropped == 1
        assert table.user_ratings("1") == {"297": 3.0}

    def test_missing_columns(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("userId,movieId,rating\n1,296,5.0\n")
        with pytest.raises(DataFormatError):
            load_ratings(p)


class TestLoadItemMapping:
    def test_paper_title_row(self, tmp_path):
        p = tmp_path / "map.tsv"
        p.write_text("589\tdbr:Terminator_2:_Judgment_Day\tTerminator 2: Judgment Day (1991)\n")
        catalog = load_item_mapping(p)
        assert catalog.title("589") == "Terminator 2: Judgment Day (1991)"
        assert catalog.item("589").entity_iri == "dbr:Terminator_2:_Judgment_Day"

    def test_empty_iri_excluded_and_counted(self, tmp_path):
        p = tmp_path / "map.tsv"
        p.write_text("1\te1\tOne\n2\t\tTwo\n")
        catalog = load_item_mapping(p)
        assert len(catalog) == 1
        assert catalog.excluded_count == 1

    def test_duplicate_id_errors_naming_it(self, tmp_path):
        p = tmp_path / "map.tsv"
        p.write_text("1\te1\tOne\n1\te2\tOther\n")
        with pytest.raises(DuplicateItemError, match="'1'"):
            load_item_mapping(p)

    def test_optional_trailer_column(self, tmp_path):
        p = tmp_path / "map.tsv"
        p.write_text("1\te1\tOne\thttp://t/1\n")
        assert load_item_mapping(p).item("1").trailer_url == "http://t/1"


class TestMaskRoundTrip:
    def test_mask_file_round_trip(self, tmp_path, toy_space_mask):
        space, mask = toy_space_mask
        path = tmp_path / "mask.txt"
        write_mask(mask, path)
        header = path.read_text().splitlines()[0]
        assert header == f"{mask.m} {mask.n} {mask.nnz}"
        assert read_mask(path) == mask

    def test_features_round_trip(self, tmp_path, toy_space_mask):
        space, _ = toy_space_mask
        path = tmp_path / "features.tsv"
        write_features(space, path)
        again = read_features(path)
        assert [f.key for f in again.features] == [f.key for f in space.features]


def test_local_name():
    assert local_name("dbc:Cyberpunk_films") == "Cyberpunk films"
    assert local_name("http://dbpedia.org/resource/Category:Drone_films") == "Drone films"
    assert local_name("dct:subject") == "subject"
    assert local_name("plain") == "plain"


def test_row_support(toy_space_mask, toy_catalog):
    space, mask = toy_space_mask
    dense = mask.dense()
    for row in range(mask.m):
        assert set(mask.row_support(row).tolist()) == set(np.nonzero(dense[row])[0].tolist())
