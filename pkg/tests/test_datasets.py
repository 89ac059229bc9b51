import numpy as np
import pytest

from bicog.datasets import CsvSplitSpec, generate_dataset, load_csv
from bicog.errors import InvalidParams, MissingColumn, ParseError


def test_blobs_counts():
    d = generate_dataset("blobs", {"num_classes": 4, "per_class": 100}, seed=0)
    assert len(d.labeled) == 400
    assert np.bincount(d.labeled.labels).tolist() == [100] * 4
    assert len(d.test) == 200


def test_zero_separation_still_generates():
    d = generate_dataset("blobs", {"separation": 0.0}, seed=1)
    assert len(d.labeled) == 400


def test_same_seed_same_dataset():
    a = generate_dataset("rings", {"dim": 3}, seed=7)
    b = generate_dataset("rings", {"dim": 3}, seed=7)
    np.testing.assert_array_equal(a.labeled.features, b.labeled.features)
    np.testing.assert_array_equal(a.test.features, b.test.features)
    c = generate_dataset("rings", {"dim": 3}, seed=8)
    assert not np.array_equal(a.labeled.features, c.labeled.features)


def test_ids_unique_across_pool_and_test():
    d = generate_dataset("blobs", {}, seed=0)
    ids = np.concatenate([d.labeled.ids, d.test.ids])
    assert len(set(ids.tolist())) == len(ids)


def test_rings_are_concentric():
    d = generate_dataset("rings", {"num_classes": 3, "cluster_std": 0.1, "ring_gap": 2.0}, seed=0)
    r = np.hypot(d.labeled.features[:, 0], d.labeled.features[:, 1])
    means = [r[d.labeled.labels == c].mean() for c in range(3)]
    np.testing.assert_allclose(means, [2.0, 4.0, 6.0], atol=0.1)


def test_biased_blobs_inflate_one_class():
    d = generate_dataset("biased_blobs", {"per_class": 50, "bias_class": 2, "bias_skew": 3.0}, seed=0)
    counts = np.bincount(d.labeled.labels)
    assert counts[2] == 150 and counts[0] == 50
    assert np.bincount(d.test.labels).tolist() == [50] * 4


@pytest.mark.parametrize("params", [{"num_classes": 1}, {"dim": 0}, {"bias_skew": 0.5}, {"nope": 1}])
def test_invalid_generator_params(params):
    with pytest.raises(InvalidParams):
        generate_dataset("blobs", params, seed=0)


def test_unknown_generator():
    with pytest.raises(InvalidParams):
        generate_dataset("spirals", {}, seed=0)


def write(tmp_path, text):
    p = tmp_path / "data.csv"
    p.write_text(text)
    return p


def test_csv_label_map_first_appearance(tmp_path):
    p = write(tmp_path, "f1,f2,y,split\n1,2,a,labeled\n3,4,b,unlabeled\n5,6,a,test\n")
    d, label_map = load_csv(p, ["f1", "f2"], "y", split_column="split")
    assert d.num_classes == 2
    assert label_map == {"a": 0, "b": 1}
    assert d.labeled.labels.tolist() == [0]
    assert d.unlabeled.labels is None
    assert d._hidden_labels.tolist() == [1]


def test_csv_parse_error_names_row_and_column(tmp_path):
    p = write(tmp_path, "f1,f2,y\nx,2,a\n")
    with pytest.raises(ParseError) as err:
        load_csv(p, ["f1", "f2"], "y")
    assert err.value.row == 2 and err.value.column == "f1"
    assert "row 2, column f1" in str(err.value)


def test_csv_missing_column(tmp_path):
    p = write(tmp_path, "f1,y\n1,a\n")
    with pytest.raises(MissingColumn):
        load_csv(p, ["f1", "f2"], "y")


def test_csv_unknown_split_value(tmp_path):
    p = write(tmp_path, "f1,y,s\n1,a,train\n")
    with pytest.raises(ParseError):
        load_csv(p, ["f1"], "y", split_column="s")


def test_csv_seeded_split_is_deterministic(tmp_path):
    rows = "".join(f"{i},{i % 3},{'abc'[i % 3]}\n" for i in range(60))
    p = write(tmp_path, "f1,f2,y\n" + rows)
    spec = CsvSplitSpec(base_fraction=1.0, shots_per_class=2, test_fraction=0.25, seed=4)
    a, _ = load_csv(p, ["f1", "f2"], "y", split=spec)
    b, _ = load_csv(p, ["f1", "f2"], "y", split=spec)
    assert a.labeled.ids.tolist() == b.labeled.ids.tolist()
    assert a.test.ids.tolist() == b.test.ids.tolist()
    assert len(a.test) == 15 and len(a.labeled) == 6
