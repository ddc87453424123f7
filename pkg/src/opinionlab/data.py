"""Post sequences: label scaling, chronological splits, and JSONL IO.

Opinions live on two scales.  Models work with a continuous value in
[-1, 1]; observations are discrete class labels.  ``discretize_opinion``
and ``label_to_continuous`` convert between the two such that
discretize(label_to_continuous(c)) == c for every class.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

# Five-class bin edges over [-1, 1]; bins are half-open on the left four,
# closed at +1.0.
FIVE_CLASS_EDGES = (-1.0, -0.6, -0.2, 0.2, 0.6, 1.0)


class DatasetError(ValueError):
    """Malformed dataset file or record."""


@dataclass(frozen=True)
class Post:
    """One labeled observation: user `user_id` posted opinion class `label` at `time`."""

    user_id: int
    time: float
    label: int

    def __post_init__(self):
        if self.time < 0:
            raise ValueError(f"negative post time {self.time}")
        if self.label < 0:
            raise ValueError(f"negative label {self.label}")
        if self.user_id < 0:
            raise ValueError(f"negative user id {self.user_id}")


@dataclass(frozen=True)
class OpinionDataset:
    """Time-ordered post collection with its population and label space."""

    posts: tuple[Post, ...]
    num_users: int
    num_classes: int
    horizon: float

    def __post_init__(self):
        times = [p.time for p in self.posts]
        if any(a > b for a, b in zip(times, times[1:])):
            raise ValueError("posts must be sorted by time")
        for p in self.posts:
            if p.user_id >= self.num_users:
                raise ValueError(f"user id {p.user_id} >= num_users {self.num_users}")
            if p.label >= self.num_classes:
                raise ValueError(f"label {p.label} >= num_classes {self.num_classes}")

    def __len__(self):
        return len(self.posts)

    def users(self) -> np.ndarray:
        return np.array([p.user_id for p in self.posts], dtype=int)

    def times(self) -> np.ndarray:
        return np.array([p.time for p in self.posts])

    def labels(self) -> np.ndarray:
        return np.array([p.label for p in self.posts], dtype=int)

    def replace_posts(self, posts) -> "OpinionDataset":
        return OpinionDataset(tuple(posts), self.num_users, self.num_classes, self.horizon)


@dataclass(frozen=True)
class ProfileCorpus:
    """Map from user id to free-text profile description (may be empty)."""

    descriptions: dict[int, str]

    def get(self, user_id: int) -> str:
        return self.descriptions.get(user_id, "")


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float
    val_frac: float
    test_frac: float

    def __post_init__(self):
        total = self.train_frac + self.val_frac + self.test_frac
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions sum to {total}, expected 1")
        if min(self.train_frac, self.val_frac, self.test_frac) < 0:
            raise ValueError("split fractions must be non-negative")


def discretize_opinion(x: float, num_classes: int = 5):
    """Bin a continuous opinion in [-1, 1] into a class index.

    Values outside [-1, 1] are clamped first.  For the default five classes
    the bins are [-1,-0.6), [-0.6,-0.2), [-0.2,0.2), [0.2,0.6), [0.6,1.0];
    for other class counts the bins are uniform over [-1, 1].
    """
    x = np.clip(x, -1.0, 1.0)
    idx = np.floor((np.asarray(x) + 1.0) * num_classes / 2.0).astype(int)
    idx = np.clip(idx, 0, num_classes - 1)
    return int(idx) if np.isscalar(x) or np.asarray(x).ndim == 0 else idx


def label_to_continuous(label, num_classes: int):
    """Midpoint of the label's bin: -1 + (2*label + 1)/C."""
    if num_classes < 2:
        raise ValueError("need at least two classes")
    label_arr = np.asarray(label)
    if np.any(label_arr < 0) or np.any(label_arr >= num_classes):
        raise ValueError(f"label {label} out of range for {num_classes} classes")
    value = -1.0 + (2.0 * label_arr + 1.0) / num_classes
    return float(value) if label_arr.ndim == 0 else value


def chronological_split(dataset: OpinionDataset, spec: SplitSpec):
    """Split a time-sorted dataset into (train, val, test) by post index.

    Train takes the first floor(n*train_frac) posts, val the next
    floor(n*val_frac), test the remainder; order is preserved.
    """
    n = len(dataset)
    if n == 0:
        raise DatasetError("cannot split an empty dataset")
    n_train = int(np.floor(n * spec.train_frac))
    n_val = int(np.floor(n * spec.val_frac))
    parts = (
        dataset.posts[:n_train],
        dataset.posts[n_train : n_train + n_val],
        dataset.posts[n_train + n_val :],
    )
    return tuple(dataset.replace_posts(p) for p in parts)


# ----- file IO ----------------------------------------------------------------
#
# Dataset file: JSON Lines, one {"user", "time", "label"} record per line,
# with an optional leading {"meta": {"num_users", "num_classes", "horizon"}}
# line.  Profiles: one JSON object mapping user-id strings to descriptions.


def save_dataset(dataset: OpinionDataset, path):
    with open(path, "w", encoding="utf-8") as fh:
        meta = {
            "num_users": dataset.num_users,
            "num_classes": dataset.num_classes,
            "horizon": dataset.horizon,
        }
        fh.write(json.dumps({"meta": meta}) + "\n")
        for p in dataset.posts:
            fh.write(json.dumps({"user": p.user_id, "time": p.time, "label": p.label}) + "\n")


def load_dataset(path) -> OpinionDataset:
    """Read a JSONL dataset; unsorted times are sorted with a warning."""
    meta = None
    posts = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise DatasetError(f"{path}: line {lineno}: invalid JSON ({err.msg})") from err
            if "meta" in record:
                if lineno != 1:
                    raise DatasetError(f"{path}: line {lineno}: meta must be the first line")
                meta = record["meta"]
                continue
            try:
                post = Post(int(record["user"]), float(record["time"]), int(record["label"]))
            except (KeyError, TypeError, ValueError) as err:
                raise DatasetError(f"{path}: line {lineno}: bad record ({err})") from err
            if meta is not None:
                if post.label >= int(meta["num_classes"]):
                    raise DatasetError(
                        f"{path}: line {lineno}: label {post.label} >= num_classes {meta['num_classes']}"
                    )
                if post.user_id >= int(meta["num_users"]):
                    raise DatasetError(
                        f"{path}: line {lineno}: user {post.user_id} >= num_users {meta['num_users']}"
                    )
            posts.append(post)
    if not posts:
        raise DatasetError(f"{path}: no posts found")

    times = [p.time for p in posts]
    if any(a > b for a, b in zip(times, times[1:])):
        warnings.warn(f"{path}: posts not sorted by time; sorting", stacklevel=2)
        posts.sort(key=lambda p: p.time)

    if meta is not None:
        num_users = int(meta["num_users"])
        num_classes = int(meta["num_classes"])
        horizon = float(meta["horizon"])
    else:
        num_users = max(p.user_id for p in posts) + 1
        num_classes = max(p.label for p in posts) + 1
        horizon = max(p.time for p in posts)
    return OpinionDataset(tuple(posts), num_users, num_classes, horizon)


def save_profiles(corpus: ProfileCorpus, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({str(k): v for k, v in sorted(corpus.descriptions.items())}, fh)


def load_profiles(path) -> ProfileCorpus:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise DatasetError(f"{path}: profile file must be a JSON object")
    return ProfileCorpus({int(k): str(v) for k, v in raw.items()})
