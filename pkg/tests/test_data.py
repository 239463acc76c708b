import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dgossip.data import (
    DatasetConfig,
    LabeledDataset,
    PartitionConfig,
    generate_synthetic,
    load_csv,
    load_datasets,
    partition,
    partition_dirichlet,
    partition_iid,
    partition_pathological,
)
from dgossip.utils import ConfigError, StorageError


def nearest_centroid_accuracy(ds: LabeledDataset) -> float:
    centroids = np.stack([ds.features[ds.labels == c].mean(axis=0) for c in range(ds.num_classes)])
    distances = ((ds.features[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return float(np.mean(distances.argmin(axis=1) == ds.labels))


def test_synthetic_shape_and_balance():
    ds = generate_synthetic(C=4, d=6, per_class=25, cluster_spread=1.0, seed=0)
    assert ds.n == 100 and ds.d == 6 and ds.num_classes == 4
    assert ds.class_counts().tolist() == [25, 25, 25, 25]


def test_synthetic_is_deterministic():
    first = generate_synthetic(C=3, d=4, per_class=10, cluster_spread=1.0, seed=9)
    second = generate_synthetic(C=3, d=4, per_class=10, cluster_spread=1.0, seed=9)
    assert np.array_equal(first.features, second.features)
    assert np.array_equal(first.labels, second.labels)


def test_tight_clusters_are_separable():
    ds = generate_synthetic(C=3, d=5, per_class=50, cluster_spread=0.01, seed=2)
    assert nearest_centroid_accuracy(ds) >= 0.99


def test_held_out_draw_shares_means_not_samples():
    train, test = load_datasets(DatasetConfig(classes=3, dim=4, per_class=40, test_per_class=40), seed=4)
    assert not np.array_equal(train.features, test.features)
    for c in range(3):
        gap = train.features[train.labels == c].mean(axis=0) - test.features[test.labels == c].mean(axis=0)
        assert np.linalg.norm(gap) < 1.0


@pytest.mark.parametrize("kwargs", [{"C": 1, "d": 2, "per_class": 3}, {"C": 2, "d": 0, "per_class": 3}])
def test_synthetic_rejects_bad_shape(kwargs):
    with pytest.raises(ConfigError):
        generate_synthetic(cluster_spread=1.0, seed=0, **kwargs)


def test_load_csv(tmp_path):
    path = tmp_path / "train.csv"
    path.write_text("f1,f2,label\n0.5,1.0,0\n-1.0,2.0,2\n3.0,0.0,1\n")
    ds = load_csv(path)
    assert ds.n == 3 and ds.d == 2 and ds.num_classes == 3
    assert ds.labels.tolist() == [0, 2, 1]
    np.testing.assert_array_equal(ds.features[1], [-1.0, 2.0])


def test_load_csv_label_sets_class_count(tmp_path):
    path = tmp_path / "train.csv"
    path.write_text("f1,label\n0.0,2\n1.0,2\n")
    assert load_csv(path).num_classes == 3


@pytest.mark.parametrize(
    "body,message",
    [
        ("f1,f2,label\n", "empty dataset"),
        ("f1,f2,label\n1.0,2.0,0\nabc,2.0,1\n", "Could not parse row"),
        ("f1,f2,label\n1.0,2.0,0\n1.0,2.0,-1\n", "Negative label"),
        ("f1,f2,label\n1.0,2.0,0.5\n", "Label is not an integer"),
        ("f1,f2,label\n1.0,2.0,0\n1.0,2.0\n", "Inconsistent column count"),
        ("f1,f2,label\n1.0,2.0,0\n1.0,2.0,3.0,1\n", "Inconsistent column count"),
    ],
)
def test_load_csv_errors(tmp_path, body, message):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(ConfigError) as exc:
        load_csv(path)
    assert exc.value.message == message


def test_load_csv_reports_row_number(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("f1,label\n1.0,0\n2.0,1\nx,1\n")
    with pytest.raises(ConfigError) as exc:
        load_csv(path)
    assert "row 4" in exc.value.detail


def test_short_row_is_a_column_count_error(tmp_path):
    path = tmp_path / "short.csv"
    path.write_text("f1,f2,label\n1.0,2.0,0\n0.5,1.5,1\n1.0,2.0\n")
    with pytest.raises(ConfigError) as exc:
        load_csv(path)
    assert exc.value.message == "Inconsistent column count"
    assert "row 4" in exc.value.detail


def test_empty_field_is_a_parse_error(tmp_path):
    path = tmp_path / "hole.csv"
    path.write_text("f1,f2,label\n1.0,,0\n")
    with pytest.raises(ConfigError) as exc:
        load_csv(path)
    assert exc.value.message == "Could not parse row"


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(StorageError):
        load_csv(tmp_path / "absent.csv")


def assert_set_partition(plan, n: int, m: int) -> None:
    assert plan.m == m
    joined = np.concatenate(plan.assignments)
    assert joined.size == n
    assert np.array_equal(np.sort(joined), np.arange(n))
    assert all(idx.size > 0 for idx in plan.assignments)


@given(
    scheme=st.sampled_from(["iid", "dirichlet", "pathological"]),
    m=st.integers(min_value=1, max_value=12),
    seed=st.integers(min_value=0, max_value=10_000),
    alpha=st.floats(min_value=0.05, max_value=100.0),
)
def test_partitions_are_set_partitions(scheme, m, seed, alpha):
    ds = generate_synthetic(C=4, d=2, per_class=15, cluster_spread=1.0, seed=3)
    cfg = PartitionConfig(scheme=scheme, alpha=alpha, classes_per_client=4 if m == 1 else 2)
    assert_set_partition(partition(ds, m, cfg, seed), ds.n, m)


def test_partition_is_deterministic(small_dataset):
    cfg = PartitionConfig(scheme="dirichlet", alpha=0.3)
    first = partition(small_dataset, 5, cfg, seed=8)
    second = partition(small_dataset, 5, cfg, seed=8)
    assert all(np.array_equal(a, b) for a, b in zip(first.assignments, second.assignments))


def test_iid_sizes_differ_by_at_most_one():
    ds = generate_synthetic(C=3, d=2, per_class=33, cluster_spread=1.0, seed=0)
    sizes = [idx.size for idx in partition_iid(ds, 10, seed=1).assignments]
    assert max(sizes) - min(sizes) <= 1


def test_single_client_gets_everything(small_dataset):
    plan = partition_dirichlet(small_dataset, 1, alpha=0.1, seed=0)
    assert np.array_equal(plan.assignments[0], np.arange(small_dataset.n))


def test_huge_alpha_is_near_iid():
    ds = generate_synthetic(C=10, d=2, per_class=100, cluster_spread=1.0, seed=0)
    plan = partition_dirichlet(ds, 10, alpha=1e6, seed=3)
    hist = plan.label_histograms(ds).astype(float)
    local = hist / hist.sum(axis=1, keepdims=True)
    tv = 0.5 * np.abs(local - 0.1).sum(axis=1)
    assert np.all(tv < 0.05)


def test_heterogeneity_shrinks_with_alpha():
    ds = generate_synthetic(C=10, d=2, per_class=100, cluster_spread=1.0, seed=0)
    alphas = [0.1, 0.3, 1.0, 10.0, 1e6]
    mean_tv = [
        np.mean([partition_dirichlet(ds, 10, alpha, seed).heterogeneity(ds) for seed in range(10)])
        for alpha in alphas
    ]
    assert all(a >= b for a, b in zip(mean_tv, mean_tv[1:]))


def test_pathological_class_counts():
    ds = generate_synthetic(C=10, d=2, per_class=100, cluster_spread=1.0, seed=0)
    plan = partition_pathological(ds, 100, classes_per_client=2, seed=5)
    hist = plan.label_histograms(ds)
    assert np.all((hist > 0).sum(axis=1) == 2)
    assert np.all(hist.sum(axis=0) > 0)


def test_pathological_tight_cover():
    ds = generate_synthetic(C=10, d=2, per_class=10, cluster_spread=1.0, seed=0)
    plan = partition_pathological(ds, 5, classes_per_client=2, seed=0)
    hist = plan.label_histograms(ds)
    assert np.all((hist > 0).sum(axis=0) == 1)


def test_pathological_infeasible():
    ds = generate_synthetic(C=10, d=2, per_class=10, cluster_spread=1.0, seed=0)
    with pytest.raises(ConfigError, match="infeasible"):
        partition_pathological(ds, 4, classes_per_client=2, seed=0)


def test_more_clients_than_samples():
    ds = generate_synthetic(C=2, d=2, per_class=2, cluster_spread=1.0, seed=0)
    with pytest.raises(ConfigError):
        partition_iid(ds, 5, seed=0)


def test_plan_dump(tmp_path, small_dataset):
    plan = partition_iid(small_dataset, 3, seed=0)
    plan.dump(tmp_path / "partition.json")
    payload = json.loads((tmp_path / "partition.json").read_text())
    assert payload["scheme"] == "iid"
    assert sorted(sum(payload["clients"].values(), [])) == list(range(small_dataset.n))
