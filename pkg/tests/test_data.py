"""Label scaling, chronological splits, and dataset file IO."""

import numpy as np
import pytest

from opinionlab import data
from opinionlab.data import (
    DatasetError,
    OpinionDataset,
    Post,
    ProfileCorpus,
    SplitSpec,
    chronological_split,
    discretize_opinion,
    label_to_continuous,
    load_dataset,
    load_profiles,
    save_dataset,
    save_profiles,
)


def make_dataset(posts, num_users=None, num_classes=5, horizon=None):
    num_users = num_users or max(p.user_id for p in posts) + 1
    horizon = horizon if horizon is not None else max(p.time for p in posts)
    return OpinionDataset(tuple(posts), num_users, num_classes, horizon)


class TestScaling:
    def test_five_class_bin_edges(self):
        # [-1,-0.6) -> 0, [-0.6,-0.2) -> 1, [-0.2,0.2) -> 2, [0.2,0.6) -> 3, [0.6,1] -> 4
        assert discretize_opinion(-1.0) == 0
        assert discretize_opinion(-0.61) == 0
        assert discretize_opinion(-0.6) == 1
        assert discretize_opinion(-0.2) == 2
        assert discretize_opinion(0.19) == 2
        assert discretize_opinion(0.2) == 3
        assert discretize_opinion(0.6) == 4
        assert discretize_opinion(1.0) == 4

    def test_out_of_range_clamped(self):
        assert discretize_opinion(-3.7) == 0
        assert discretize_opinion(2.5) == 4

    def test_midpoints(self):
        np.testing.assert_allclose(
            [label_to_continuous(c, 5) for c in range(5)],
            [-0.8, -0.4, 0.0, 0.4, 0.8],
        )
        np.testing.assert_allclose([label_to_continuous(c, 2) for c in range(2)], [-0.5, 0.5])

    @pytest.mark.parametrize("num_classes", [2, 3, 4, 5, 7])
    def test_round_trip_identity(self, num_classes):
        for c in range(num_classes):
            assert discretize_opinion(label_to_continuous(c, num_classes), num_classes) == c

    def test_vectorized(self):
        x = np.array([-0.9, -0.5, 0.0, 0.5, 0.9])
        np.testing.assert_array_equal(discretize_opinion(x), [0, 1, 2, 3, 4])
        np.testing.assert_allclose(label_to_continuous(np.arange(5), 5),
                                   [-0.8, -0.4, 0.0, 0.4, 0.8])

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            label_to_continuous(5, 5)
        with pytest.raises(ValueError):
            label_to_continuous(-1, 5)


class TestDatasetInvariants:
    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            make_dataset([Post(0, 2.0, 1), Post(0, 1.0, 1)])

    def test_rejects_out_of_range_user(self):
        with pytest.raises(ValueError):
            OpinionDataset((Post(3, 0.0, 1),), 2, 5, 1.0)

    def test_rejects_out_of_range_label(self):
        with pytest.raises(ValueError):
            OpinionDataset((Post(0, 0.0, 7),), 2, 5, 1.0)

    def test_accessors(self):
        ds = make_dataset([Post(1, 0.0, 2), Post(0, 1.0, 4)])
        np.testing.assert_array_equal(ds.users(), [1, 0])
        np.testing.assert_array_equal(ds.times(), [0.0, 1.0])
        np.testing.assert_array_equal(ds.labels(), [2, 4])


class TestSplit:
    def test_sizes_and_order(self):
        posts = [Post(0, float(t), t % 5) for t in range(10)]
        ds = make_dataset(posts)
        train, val, test = chronological_split(ds, SplitSpec(0.5, 0.2, 0.3))
        assert (len(train), len(val), len(test)) == (5, 2, 3)
        np.testing.assert_array_equal(train.times(), np.arange(5.0))
        np.testing.assert_array_equal(val.times(), [5.0, 6.0])
        np.testing.assert_array_equal(test.times(), [7.0, 8.0, 9.0])

    def test_partition_property_random(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(1, 60))
            times = np.sort(rng.uniform(0, 100, size=n))
            posts = [Post(int(rng.integers(0, 4)), float(t), int(rng.integers(0, 5)))
                     for t in times]
            ds = make_dataset(posts, num_users=4)
            fr = rng.dirichlet([1, 1, 1])
            parts = chronological_split(ds, SplitSpec(fr[0], fr[1], 1.0 - fr[0] - fr[1]))
            recombined = parts[0].posts + parts[1].posts + parts[2].posts
            assert recombined == ds.posts  # partition, order preserved

    def test_bad_fractions(self):
        with pytest.raises(ValueError):
            SplitSpec(0.5, 0.2, 0.2)
        with pytest.raises(ValueError):
            SplitSpec(1.2, -0.1, -0.1)


class TestFileIO:
    def test_round_trip(self, tmp_path):
        ds = make_dataset([Post(0, 0.0, 1), Post(2, 0.5, 4), Post(1, 3.0, 0)],
                          num_users=5, horizon=10.0)
        path = tmp_path / "ds.jsonl"
        save_dataset(ds, path)
        loaded = load_dataset(path)
        assert loaded == ds

    def test_meta_preserves_population(self, tmp_path):
        # num_users larger than any posting user must survive the round trip
        ds = make_dataset([Post(0, 0.0, 1)], num_users=10, horizon=7.0)
        path = tmp_path / "ds.jsonl"
        save_dataset(ds, path)
        loaded = load_dataset(path)
        assert loaded.num_users == 10
        assert loaded.horizon == 7.0

    def test_missing_meta_infers(self, tmp_path):
        path = tmp_path / "ds.jsonl"
        path.write_text('{"user": 3, "time": 1.0, "label": 2}\n')
        loaded = load_dataset(path)
        assert loaded.num_users == 4
        assert loaded.num_classes == 3
        assert loaded.horizon == 1.0

    def test_invalid_json_reports_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"user": 0, "time": 0, "label": 1}\nnot json\n')
        with pytest.raises(DatasetError, match="line 2"):
            load_dataset(path)

    def test_label_out_of_range_reports_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"meta": {"num_users": 2, "num_classes": 3, "horizon": 5}}\n'
            '{"user": 0, "time": 0, "label": 1}\n'
            '{"user": 1, "time": 1, "label": 9}\n'
        )
        with pytest.raises(DatasetError, match="line 3"):
            load_dataset(path)

    def test_meta_not_first_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"user": 0, "time": 0, "label": 1}\n'
            '{"meta": {"num_users": 2, "num_classes": 3, "horizon": 5}}\n'
        )
        with pytest.raises(DatasetError, match="meta"):
            load_dataset(path)

    def test_unsorted_is_sorted_with_warning(self, tmp_path):
        path = tmp_path / "ds.jsonl"
        path.write_text(
            '{"user": 0, "time": 2.0, "label": 1}\n'
            '{"user": 0, "time": 1.0, "label": 0}\n'
        )
        with pytest.warns(UserWarning, match="not sorted"):
            loaded = load_dataset(path)
        np.testing.assert_array_equal(loaded.times(), [1.0, 2.0])

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(DatasetError):
            load_dataset(path)

    def test_profiles_round_trip(self, tmp_path):
        corpus = ProfileCorpus({0: "climate activist", 3: "sports fan"})
        path = tmp_path / "profiles.json"
        save_profiles(corpus, path)
        loaded = load_profiles(path)
        assert loaded.get(0) == "climate activist"
        assert loaded.get(3) == "sports fan"
        assert loaded.get(1) == ""  # missing users read as empty text

    def test_profiles_must_be_object(self, tmp_path):
        path = tmp_path / "profiles.json"
        path.write_text("[1, 2, 3]")
        with pytest.raises(DatasetError):
            load_profiles(path)


class TestPostValidation:
    def test_negative_fields_rejected(self):
        with pytest.raises(ValueError):
            Post(-1, 0.0, 0)
        with pytest.raises(ValueError):
            Post(0, -1.0, 0)
        with pytest.raises(ValueError):
            Post(0, 0.0, -2)
