import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from securiot.ids import cache
from securiot.ids.data import (ClassTooSmall, Dataset, FeatureSchema, HeaderMismatch, LabelMap,
                               MissingFile, SchemaMismatch, build_dataset, clean,
                               correlation_matrix, ingest_csv, normalize_label, select_features,
                               split, subsample, reference_counts, table_from_arrays, write_csv)
from securiot.ids.pipeline import count_diff, ingest_path, prepare
from securiot.ids.synthetic import FEATURE_NAMES, class_sizes, synthetic_corpus

HEADER = " Flow ID, Destination Port, Flow Duration, Total Fwd Packets, Label\n"


def write(tmp_path, body, name="flows.csv", header=HEADER):
    p = tmp_path / name
    p.write_text(header + body)
    return p


def test_ingest_strips_header_spaces_and_maps_labels(tmp_path):
    p = write(tmp_path, "a,80,10,2,BENIGN\nb,443,5,1,DDoS\nc,22,7,3,Web Attack \x96 Brute Force\n")
    t = ingest_csv(p)
    assert len(t) == 3
    assert t.names == ["Destination Port", "Flow Duration", "Total Fwd Packets"]
    assert list(t.labels) == ["Benign", "DDos", "Web Brute Force"]
    assert list(t.text["Flow ID"]) == ["a", "b", "c"]
    np.testing.assert_array_equal(t.X[:, 1], [10, 5, 7])


@pytest.mark.parametrize("raw,canonical", [
    ("BENIGN", "Benign"), ("DoS Hulk", "Dos Hulk"), ("DoS slowloris", "Dos slowloris"),
    ("FTP-Patator", "FTP Patator"), ("PortScan", "PortScan"), ("Web Attack - Sql Injection", "Web SQL Injection"),
    ("Web Attack � XSS", "Web XSS"), ("Bot", "Bot"), ("nonsense", None),
])
def test_label_aliases(raw, canonical):
    assert normalize_label(raw) == canonical


def test_repeated_header_row_is_dropped_by_cleaning(tmp_path):
    p = write(tmp_path, "a,80,10,2,BENIGN\nFlow ID,Destination Port,Flow Duration,Total Fwd Packets,Label\n"
                        "b,81,11,3,BENIGN\n")
    t = ingest_csv(p)
    assert len(t) == 3 and t.invalid[1].any()
    out, report = clean(t)
    assert len(out) == 2 and report.removed["unknown-label"] == 1


def test_unparsable_cells_are_flagged_not_zeroed(tmp_path):
    t = ingest_csv(write(tmp_path, "a,80,oops,2,BENIGN\nb,81,4,3,BENIGN\n"))
    assert t.invalid[0, 1] and np.isnan(t.X[0, 1])
    out, report = clean(t)
    assert report.removed["invalid-cell"] == 1 and len(out) == 1


def test_ingest_errors(tmp_path):
    with pytest.raises(MissingFile):
        ingest_csv(tmp_path / "absent.csv")
    with pytest.raises(HeaderMismatch):
        ingest_csv(write(tmp_path, "1,2\n", header="a,b\n"))
    p = write(tmp_path, "a,80,10,2,BENIGN\n")
    with pytest.raises(HeaderMismatch):
        ingest_csv(p, raw_schema=["Flow ID", "Label"])


def test_directory_ingest_concatenates_sorted_files(tmp_path):
    write(tmp_path, "b,81,1,1,BENIGN\n", "2.csv")
    write(tmp_path, "a,80,1,1,Bot\n", "1.csv")
    t = ingest_path(tmp_path)
    assert list(t.text["Flow ID"]) == ["a", "b"]
    with pytest.raises(MissingFile):
        ingest_path(tmp_path / "empty")


def test_clean_strict_and_lenient_policies():
    X = np.array([[1.0, 2.0], [np.inf, 1.0], [np.nan, 0.0], [1.0, 2.0], [3.0, 4.0]])
    t = table_from_arrays(["a", "b"], X, ["Benign"] * 5)
    out, rep = clean(t)
    assert len(out) == 2
    assert rep.removed == {"unknown-label": 0, "invalid-cell": 0, "missing-value": 1,
                           "non-finite": 1, "duplicate": 1}
    assert rep.retained == 2
    out, rep = clean(t, "lenient")
    assert len(out) == 4 and rep.replaced_infinite == 1
    assert out.X[1, 0] == 3.0 and np.isfinite(out.X).all()
    with pytest.raises(ValueError):
        clean(t, "loose")


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([0.0, 1.0, np.inf, np.nan, 2.5]),
                          st.sampled_from([0.0, 1.0, -np.inf])), min_size=1, max_size=30))
def test_clean_is_idempotent(rows):
    t = table_from_arrays(["a", "b"], np.array(rows), ["Benign"] * len(rows))
    once, _ = clean(t)
    twice, rep = clean(once)
    assert len(twice) == len(once) and sum(rep.removed.values()) == 0
    assert np.isfinite(once.X).all()


def test_correlation_examples():
    rng = np.random.default_rng(0)
    a = rng.normal(size=5000)
    b = rng.normal(size=5000)
    c = correlation_matrix(np.column_stack([a, -a, b, np.full(5000, 3.0)]))
    m = c.matrix
    assert m[0, 0] == 1.0
    assert m[0, 1] == pytest.approx(-1.0)
    assert abs(m[0, 2]) < 0.05
    np.testing.assert_array_equal(m[:3, :3], m[:3, :3].T)
    assert c.constant.tolist() == [False, False, False, True] and np.isnan(m[3]).all()


def test_feature_selection_reasons():
    rng = np.random.default_rng(1)
    n = 200
    base = rng.normal(size=n)
    cols = {
        "Destination Port": rng.integers(0, 1000, n),
        "Flow Duration": base,
        "Flow Duration Copy": base * 2 + 1,
        "Fwd PSH Flags": rng.integers(0, 2, n),
        "Fwd Avg Bulk Rate": rng.normal(size=n),
        "Constant": np.zeros(n),
        "Packets": rng.normal(size=n),
    }
    t = table_from_arrays(list(cols), np.column_stack(list(cols.values())), ["Benign"] * n,
                          text={"Flow ID": [str(i) for i in range(n)]})
    schema = select_features(t)
    assert schema.names == ("Flow Duration", "Packets")
    assert schema.dropped == {
        "Flow ID": "named-drop", "Destination Port": "identifier",
        "Fwd PSH Flags": "named-drop", "Fwd Avg Bulk Rate": "named-drop",
        "Constant": "zero-variance", "Flow Duration Copy": "high-correlation"}


def _dataset(counts: dict[str, int]) -> Dataset:
    labels = LabelMap.default()
    y = np.concatenate([np.full(n, labels.index[c]) for c, n in counts.items()])
    return Dataset(np.arange(len(y), dtype=float)[:, None], y, FeatureSchema(("f",)), labels)


def test_split_examples():
    train, test = split(_dataset({"Benign": 100}), 0.3, seed=0)
    assert len(test) == 30 and len(train) == 70
    train, test = split(_dataset({"Benign": 50, "Bot": 50}), 0.3, seed=4)
    assert test.per_class_counts["Benign"] == 15 and test.per_class_counts["Bot"] == 15
    _, test = split(_dataset({"Benign": 20, "Heartbleed": 11}), 0.3, seed=2)
    assert test.per_class_counts["Heartbleed"] in (3, 4)
    with pytest.raises(ClassTooSmall):
        split(_dataset({"Benign": 20, "Heartbleed": 1}), 0.3, seed=2)
    with pytest.raises(ValueError):
        split(_dataset({"Benign": 20}), 1.0, seed=0)


@settings(max_examples=30, deadline=None)
@given(st.dictionaries(st.sampled_from(LabelMap.default().classes), st.integers(2, 60), min_size=1),
       st.floats(0.05, 0.95), st.integers(0, 2**32 - 1))
def test_split_partitions_and_stratifies(counts, frac, seed):
    ds = _dataset(counts)
    train, test = split(ds, frac, seed)
    assert sorted(np.concatenate([train.X[:, 0], test.X[:, 0]])) == sorted(ds.X[:, 0])
    for c, n in counts.items():
        assert abs(test.per_class_counts[c] - n * frac) <= 1
        assert train.per_class_counts[c] >= 1 and test.per_class_counts[c] >= 1
    again = split(ds, frac, seed)
    np.testing.assert_array_equal(again[1].X, test.X)


def test_subsample_keeps_minimum():
    ds = _dataset({"Benign": 1000, "Heartbleed": 11})
    sub = subsample(ds, 0.01, seed=0)
    assert sub.per_class_counts["Benign"] == 10 and sub.per_class_counts["Heartbleed"] == 2


def test_build_dataset_schema_mismatch():
    t = table_from_arrays(["a"], np.zeros((2, 1)), ["Benign", "Bot"])
    with pytest.raises(SchemaMismatch):
        build_dataset(t, FeatureSchema(("b",)))


def test_cache_round_trip(tmp_path, synthetic):
    path = tmp_path / "d.cache"
    cache.save(synthetic.test, path)
    back = cache.load(path)
    np.testing.assert_array_equal(back.X, synthetic.test.X)
    np.testing.assert_array_equal(back.y, synthetic.test.y)
    assert back.schema == synthetic.test.schema and back.labels == synthetic.test.labels
    assert cache.dumps(back) == path.read_bytes()
    data = path.read_bytes()
    for bad in (b"X" + data[1:], data[:-3], data + b"\0"):
        with pytest.raises(cache.CacheError):
            cache.loads(bad)


def test_csv_round_trip(tmp_path):
    t = synthetic_corpus(3, corrupt=5)
    write_csv(t, tmp_path / "s.csv")
    back = ingest_csv(tmp_path / "s.csv")
    assert back.names == t.names
    np.testing.assert_array_equal(back.X, t.X)
    assert list(back.labels) == list(t.labels)


def test_synthetic_corpus_shape_and_determinism():
    t = synthetic_corpus(0)
    assert len(t) == sum(class_sizes().values()) == 2880
    assert tuple(["Flow ID", *t.names]) == ("Flow ID", *FEATURE_NAMES)
    np.testing.assert_array_equal(synthetic_corpus(0).X, t.X)
    assert not np.array_equal(synthetic_corpus(1).X, t.X)


def test_prepare_pipeline_reports_every_step():
    p = prepare(synthetic_corpus(0, corrupt=4), seed=0)
    r = p.report
    assert r.removed["non-finite"] == 4 and r.removed["missing-value"] == 4
    assert r.removed["duplicate"] == 4 and r.retained == 2880
    text = p.summary_text()
    assert "retained_rows=2880" in text and "dropped.Destination Port=identifier" in text


def test_count_diff():
    assert count_diff(reference_counts()) == []
    total = sum(reference_counts().values())
    off = dict(reference_counts(), Heartbleed=10)
    assert count_diff(off) == ["Heartbleed: got 10, expected 11 (-1)",
                               f"total: got {total - 1}, expected {total} (-1)"]
