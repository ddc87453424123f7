"""Grid search, ablation runner, and comparison-table generation.

Grid cells are trained independently and cached on disk under a hash of
their configuration, so an interrupted search resumes without retraining.
Ranking is by validation macro-F1 with ties broken by cell index.
"""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from . import baselines, model as model_mod
from .data import OpinionDataset, ProfileCorpus
from .metrics import Metrics, compute_metrics
from .model import TrainConfig, train

DEFAULT_AXES = {
    "num_layers": [3, 5, 7],
    "width": [8, 12, 16],
    "alpha": [0.1, 1.0, 5.0],
    "beta": [0.1, 1.0, 5.0],
    "latent_dim": [1, 2, 3],
    "variant": ["degroot", "fj", "bcm", "sbcm"],
}


@dataclass(frozen=True)
class GridSpec:
    axes: dict[str, list] = field(default_factory=lambda: dict(DEFAULT_AXES))

    def __post_init__(self):
        if not self.axes:
            raise ValueError("grid must have at least one axis")

    def cells(self) -> list[dict]:
        names = list(self.axes)
        return [dict(zip(names, combo)) for combo in product(*(self.axes[n] for n in names))]


def config_hash(config: TrainConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class CellResult:
    index: int
    config: TrainConfig
    hash: str
    val_acc: float
    val_f1: float
    test_acc: float | None = None
    test_f1: float | None = None
    error: str | None = None


def evaluate_model(trained, dataset_split: OpinionDataset) -> Metrics:
    preds = trained.predict_proba(dataset_split.users(), dataset_split.times()).argmax(axis=1)
    return compute_metrics(dataset_split.labels(), preds, trained.num_classes)


def run_cell(splits, profiles: ProfileCorpus, config: TrainConfig, cache_dir: Path | None = None):
    """Train one configuration, reading/writing the on-disk cache."""
    h = config_hash(config)
    cache_file = None
    if cache_dir is not None:
        cache_file = Path(cache_dir) / h / "metrics.json"
        if cache_file.exists():
            with open(cache_file, encoding="utf-8") as fh:
                return json.load(fh)

    trained, history = train(splits, profiles, config)
    val = evaluate_model(trained, splits[1])
    result = {"hash": h, "val_acc": val.accuracy, "val_f1": val.macro_f1}
    if len(splits) > 2 and len(splits[2]) > 0:
        test = evaluate_model(trained, splits[2])
        result["test_acc"] = test.accuracy
        result["test_f1"] = test.macro_f1
    if cache_dir is not None:
        run_dir = Path(cache_dir) / h
        run_dir.mkdir(parents=True, exist_ok=True)
        model_mod.save_model(trained, run_dir / "checkpoint.json")
        model_mod.history_to_csv(history, run_dir / "history.csv")
        with open(cache_file, "w", encoding="utf-8") as fh:
            json.dump(result, fh, sort_keys=True)
    return result


def _run_cell_worker(args):
    splits, profiles, config_doc, cache_dir = args
    config = TrainConfig.from_dict(config_doc)
    try:
        return config_hash(config), run_cell(splits, profiles, config, cache_dir), None
    except Exception as err:  # cell failures are recorded, the search continues
        return config_hash(config), None, f"{type(err).__name__}: {err}"


def grid_search(splits, profiles: ProfileCorpus, spec: GridSpec, base_config: TrainConfig,
                cache_dir=None, jobs: int = 1):
    """Train every grid cell; returns (leaderboard, best CellResult).

    The leaderboard is ordered by validation macro-F1 descending with the
    cell index as the deterministic tie-break.  Test metrics are reported
    only for the winner.
    """
    base = base_config.to_dict()
    configs = []
    for overrides in GridSpec(spec.axes).cells():
        doc = dict(base)
        doc.update(overrides)
        configs.append(TrainConfig.from_dict(doc))

    results: list[CellResult] = []
    if jobs > 1:
        work = [(splits, profiles, c.to_dict(), cache_dir) for c in configs]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_cell_worker, work))
        for i, (config, (h, res, err)) in enumerate(zip(configs, outcomes)):
            results.append(_to_cell_result(i, config, h, res, err))
    else:
        for i, config in enumerate(configs):
            try:
                res = run_cell(splits, profiles, config, cache_dir)
                results.append(_to_cell_result(i, config, res["hash"], res, None))
            except Exception as err:
                results.append(_to_cell_result(i, config, config_hash(config), None, str(err)))

    scored = [r for r in results if r.error is None]
    if not scored:
        raise RuntimeError("every grid cell failed")
    leaderboard = sorted(scored, key=lambda r: (-r.val_f1, r.index))
    best = leaderboard[0]
    return leaderboard, best


def _to_cell_result(index, config, h, res, err):
    if err is not None or res is None:
        return CellResult(index, config, h, float("nan"), float("nan"), error=err or "unknown")
    return CellResult(index, config, h, res["val_acc"], res["val_f1"],
                      res.get("test_acc"), res.get("test_f1"))


def leaderboard_to_csv(leaderboard, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config_hash", "variant", "L", "width", "alpha", "beta", "K",
                         "val_f1", "val_acc"])
        for r in leaderboard:
            c = r.config
            writer.writerow([r.hash, c.variant, c.num_layers, c.width, repr(c.alpha),
                             repr(c.beta), c.latent_dim, repr(r.val_f1), repr(r.val_acc)])


# ----- gradient check ---------------------------------------------------------------


def gradient_check(variant: str = "sbcm", seed: int = 0, epsilon: float = 1e-6):
    """Backpropagated vs central-finite-difference gradients on a tiny model.

    Builds a small synthetic problem, evaluates the full composite loss with
    frozen collocation times and noise, and compares every coordinate of
    every parameter.  Returns {group: max relative error}.
    """
    from .data import OpinionDataset, Post, ProfileCorpus

    rng = np.random.default_rng(seed)
    num_users, num_classes = 4, 3
    posts = tuple(
        Post(u, float(t), int(rng.integers(0, num_classes)))
        for t in range(6) for u in range(num_users)
    )
    train_ds = OpinionDataset(posts, num_users, num_classes, 6.0)
    profiles = ProfileCorpus({u: f"user {u} talks about topic {u % 2}" for u in range(num_users)})
    config = TrainConfig(variant=variant, num_layers=2, width=5, latent_dim=2,
                         alpha=0.7, beta=0.3, collocation=2, seed=seed, embed_dim=6)
    trained = model_mod.build_model(train_ds, profiles, config)

    colloc = rng.uniform(0.0, train_ds.horizon, size=config.collocation)
    noise = model_mod.gumbel_noise(rng, (config.collocation, num_users, num_users))
    users, times, labels = train_ds.users(), train_ds.times(), train_ds.labels()

    def loss_value() -> float:
        loss, _ = model_mod.total_loss(trained, users, times, labels, colloc, noise)
        return loss.item()

    loss, _ = model_mod.total_loss(trained, users, times, labels, colloc, noise)
    for p in trained.parameters():
        p.grad = None
    loss.backward()

    groups = {
        "fnn": trained.fnn.parameters(),
        "head": [trained.head_w, trained.head_b],
        "attention": trained.attention.parameters(),
        "ode": trained.ode.parameters(),
    }
    errors = {}
    for name, params in groups.items():
        worst = 0.0
        for p in params:
            grad = np.zeros_like(p.data) if p.grad is None else p.grad
            flat = p.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                up = loss_value()
                flat[i] = orig - epsilon
                down = loss_value()
                flat[i] = orig
                fd = (up - down) / (2.0 * epsilon)
                g = grad.reshape(-1)[i]
                denom = max(abs(fd) + abs(g), 1e-8)
                worst = max(worst, float(abs(fd - g) / denom))
        errors[name] = worst
    return errors


# ----- ablation --------------------------------------------------------------------


def ablation_sinn_vs_nn(splits, profiles: ProfileCorpus, config: TrainConfig, seeds):
    """Paired runs: full model vs the alpha=beta=0 arm with matched seeds.

    Returns rows of per-seed test metrics plus a median row.
    """
    rows = []
    full_acc, full_f1, nn_acc, nn_f1 = [], [], [], []
    test_split = splits[2] if len(splits) > 2 else splits[1]
    for seed in seeds:
        cfg_full = TrainConfig.from_dict({**config.to_dict(), "seed": int(seed)})
        cfg_nn = TrainConfig.from_dict({**config.to_dict(), "seed": int(seed),
                                        "alpha": 0.0, "beta": 0.0})
        trained_full, _ = train(splits, profiles, cfg_full)
        trained_nn, _ = train(splits, profiles, cfg_nn)
        m_full = evaluate_model(trained_full, test_split)
        m_nn = evaluate_model(trained_nn, test_split)
        rows.append({"seed": int(seed),
                     "sinn_acc": m_full.accuracy, "sinn_f1": m_full.macro_f1,
                     "nn_acc": m_nn.accuracy, "nn_f1": m_nn.macro_f1})
        full_acc.append(m_full.accuracy)
        full_f1.append(m_full.macro_f1)
        nn_acc.append(m_nn.accuracy)
        nn_f1.append(m_nn.macro_f1)
    rows.append({"seed": "median",
                 "sinn_acc": float(np.median(full_acc)), "sinn_f1": float(np.median(full_f1)),
                 "nn_acc": float(np.median(nn_acc)), "nn_f1": float(np.median(nn_f1))})
    return rows


# ----- baselines + comparison table --------------------------------------------------


def run_baselines(train_ds: OpinionDataset, test_ds: OpinionDataset, methods,
                  seed: int = 0, voter_repeats: int = 10):
    """Score the named baselines on the test posts.

    Returns {method: {"acc", "f1", "predictions"}}; voter metrics are the
    mean over its repeated runs and its predictions are the first run's.
    """
    out = {}
    test_posts = list(test_ds.posts)
    true_labels = test_ds.labels()
    for method in methods:
        if method == "voter":
            preds = baselines.voter_predict(train_ds, test_posts, repeats=voter_repeats, seed=seed)
            scores = [compute_metrics(true_labels, p, test_ds.num_classes) for p in preds]
            out[method] = {
                "acc": float(np.mean([s.accuracy for s in scores])),
                "f1": float(np.mean([s.macro_f1 for s in scores])),
                "predictions": preds[0],
            }
            continue
        series = baselines.regularize_series(train_ds)
        if method == "degroot":
            fit = baselines.fit_degroot(series)
            preds = baselines.degroot_predict(fit, test_posts, test_ds.num_classes)
        elif method == "aslm":
            fit = baselines.fit_aslm(series)
            preds = baselines.aslm_predict(fit, test_posts, test_ds.num_classes)
        else:
            raise ValueError(f"unknown baseline {method!r}")
        m = compute_metrics(true_labels, preds, test_ds.num_classes)
        out[method] = {"acc": m.accuracy, "f1": m.macro_f1, "predictions": preds}
    return out


COMPARISON_ROWS = ["voter", "degroot", "aslm", "slant", "slant+", "nn", "proposed"]


def comparison_table(rows: dict) -> list[list[str]]:
    """Methods x {ACC, F1} table; methods without results get blank cells."""
    table = [["method", "acc", "f1"]]
    for name in COMPARISON_ROWS:
        if name in rows:
            table.append([name, repr(rows[name]["acc"]), repr(rows[name]["f1"])])
        else:
            table.append([name, "", ""])  # not implemented here (e.g. point-process models)
    return table


def save_predictions_csv(test_posts, true_labels, pred_labels, method: str, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user", "time", "true_label", "pred_label", "method"])
        for post, t, p in zip(test_posts, true_labels, pred_labels):
            writer.writerow([post.user_id, repr(post.time), int(t), int(p), method])
