"""Comparison methods: voter copying, a fitted linear-influence model, and
one-step linear regression.

All three operate on a regularized series: post labels are mapped to bin
midpoints in [-1, 1] and carried forward onto a uniform time grid (last
observation carried forward; a user's first value is back-filled before
their first post).  Long-horizon predictions roll the fitted dynamics
forward from the end of training and are discretized back to labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import OpinionDataset, discretize_opinion, label_to_continuous


@dataclass
class RegularSeries:
    """Continuous opinions resampled onto a uniform grid."""

    values: np.ndarray      # (U, S)
    t_start: float
    dt: float
    users_without_posts: tuple[int, ...] = ()

    @property
    def t_end(self) -> float:
        return self.t_start + (self.values.shape[1] - 1) * self.dt


@dataclass
class DegrootFit:
    """Linear influence matrix (zero diagonal) plus the end-of-train state."""

    interaction: np.ndarray   # (U, U)
    x_end: np.ndarray         # (U,)
    t_end: float
    grid_dt: float


@dataclass
class AslmFit:
    """One-step linear map x(t+1) = weights @ x(t) + bias."""

    weights: np.ndarray
    bias: np.ndarray
    x_end: np.ndarray
    t_end: float
    grid_dt: float
    ridge: float


def default_grid_dt(dataset: OpinionDataset) -> float:
    """Median gap between consecutive post times (1.0 if degenerate)."""
    times = dataset.times()
    gaps = np.diff(times)
    gaps = gaps[gaps > 0]
    return float(np.median(gaps)) if gaps.size else 1.0


def regularize_series(dataset: OpinionDataset, grid_dt: float | None = None) -> RegularSeries:
    """Forward-fill label midpoints onto a uniform grid over the data span.

    Users with no posts are kept in the matrix (at opinion 0) but reported
    in ``users_without_posts`` so callers can exclude them.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if grid_dt is None:
        grid_dt = default_grid_dt(dataset)
    times = dataset.times()
    t_start, t_last = float(times[0]), float(times[-1])
    num_steps = int(np.floor((t_last - t_start) / grid_dt + 1e-9)) + 1
    grid = t_start + grid_dt * np.arange(num_steps)

    values = np.zeros((dataset.num_users, num_steps))
    seen = np.zeros(dataset.num_users, dtype=bool)
    # Walk posts once; for each user fill from their previous post onward.
    last_value = np.zeros(dataset.num_users)
    last_index = np.zeros(dataset.num_users, dtype=int)
    for post in dataset.posts:
        value = label_to_continuous(post.label, dataset.num_classes)
        idx = int(np.searchsorted(grid, post.time + 1e-12) - 1)
        idx = max(idx, 0)
        u = post.user_id
        if not seen[u]:
            values[u, : idx + 1] = value  # back-fill before the first post
            seen[u] = True
        else:
            values[u, last_index[u] : idx + 1] = last_value[u]
            values[u, idx] = value
        last_value[u] = value
        last_index[u] = idx
    for u in range(dataset.num_users):
        if seen[u]:
            values[u, last_index[u] :] = last_value[u]
    missing = tuple(int(u) for u in range(dataset.num_users) if not seen[u])
    return RegularSeries(values, t_start, float(grid_dt), missing)


# ----- voter ---------------------------------------------------------------------


def voter_predict(train: OpinionDataset, test_posts, repeats: int = 10, seed: int = 0,
                  grid_dt: float | None = None) -> np.ndarray:
    """Simulate uniform-random opinion copying forward from the train end.

    Returns an (repeats, n_test) array of predicted labels; callers score
    each run and average the metrics.
    """
    series = regularize_series(train, grid_dt)
    x_end = series.values[:, -1]
    num_users = train.num_users
    rng = np.random.default_rng(seed)
    test_times = np.array([p.time for p in test_posts])
    test_users = np.array([p.user_id for p in test_posts], dtype=int)
    horizon_steps = max(0, int(np.ceil((test_times.max() - series.t_end) / series.dt))) if len(test_posts) else 0

    preds = np.zeros((repeats, len(test_posts)), dtype=int)
    for r in range(repeats):
        states = np.empty((horizon_steps + 1, num_users))
        states[0] = x_end
        x = x_end
        for k in range(1, horizon_steps + 1):
            x = x[rng.integers(0, num_users, size=num_users)]
            states[k] = x
        steps = np.clip(np.round((test_times - series.t_end) / series.dt).astype(int), 0, horizon_steps)
        continuous = states[steps, test_users]
        preds[r] = [discretize_opinion(v, train.num_classes) for v in continuous]
    return preds


# ----- linear-influence fit --------------------------------------------------------


def fit_degroot(series: RegularSeries, ridge: float = 1e-6) -> DegrootFit:
    """Least-squares fit of dx/dt = A x with a zero diagonal.

    Each row of A is regressed separately on the other users' opinions; a
    ridge term is added when the normal equations are ill-conditioned.
    """
    x = series.values
    num_users, num_steps = x.shape
    if num_steps < 2:
        raise ValueError("need a grid with at least two steps")
    x0 = x[:, :-1]
    rates = (x[:, 1:] - x[:, :-1]) / series.dt
    interaction = np.zeros((num_users, num_users))
    for u in range(num_users):
        others = np.delete(np.arange(num_users), u)
        design = x0[others].T                      # (S-1, U-1)
        gram = design.T @ design
        if num_steps - 1 < num_users - 1 or np.linalg.cond(gram) > 1e12:
            gram = gram + ridge * np.eye(num_users - 1)
        row = np.linalg.solve(gram, design.T @ rates[u])
        interaction[u, others] = row
    return DegrootFit(interaction, x[:, -1].copy(), series.t_end, series.dt)


def _integrate_linear(a: np.ndarray, x0: np.ndarray, t_span: float, step: float) -> np.ndarray:
    """Fixed-step RK4 for dx/dt = A x over t_span (may be zero)."""
    if t_span <= 0:
        return x0.copy()
    steps = max(1, int(np.ceil(t_span / step)))
    h = t_span / steps
    x = x0.copy()
    for _ in range(steps):
        k1 = a @ x
        k2 = a @ (x + 0.5 * h * k1)
        k3 = a @ (x + 0.5 * h * k2)
        k4 = a @ (x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def degroot_predict(fit: DegrootFit, test_posts, num_classes: int) -> np.ndarray:
    """Integrate the fitted linear system to each test time and discretize."""
    order = np.argsort([p.time for p in test_posts], kind="stable")
    preds = np.zeros(len(test_posts), dtype=int)
    x = fit.x_end.copy()
    t = fit.t_end
    step = fit.grid_dt / 4.0
    for i in order:
        post = test_posts[i]
        x = _integrate_linear(fit.interaction, x, post.time - t, step)
        t = max(t, post.time)
        preds[i] = discretize_opinion(x[post.user_id], num_classes)
    return preds


# ----- one-step linear regression ---------------------------------------------------


def fit_aslm(series: RegularSeries, ridge: float = 1e-6) -> AslmFit:
    """Ridge regression of each step on the previous one.

    The map is fit in difference form, x(t+1) = x(t) + G x(t) + b, so the
    ridge prior shrinks toward the identity map rather than toward zero;
    the returned weights are I + G.
    """
    x = series.values
    num_users, num_steps = x.shape
    if num_steps < 2:
        raise ValueError("need a grid with at least two steps")
    design = np.hstack([x[:, :-1].T, np.ones((num_steps - 1, 1))])  # (S-1, U+1)
    target = (x[:, 1:] - x[:, :-1]).T                                # (S-1, U)
    gram = design.T @ design + ridge * np.eye(num_users + 1)
    coef = np.linalg.solve(gram, design.T @ target)                  # (U+1, U)
    weights = np.eye(num_users) + coef[:-1].T
    bias = coef[-1]
    return AslmFit(weights, bias, x[:, -1].copy(), series.t_end, series.dt, ridge)


def aslm_step(fit: AslmFit, x: np.ndarray) -> np.ndarray:
    return fit.weights @ x + fit.bias


def aslm_predict(fit: AslmFit, test_posts, num_classes: int) -> np.ndarray:
    """Iterate the one-step map to each test time and discretize."""
    if not len(test_posts):
        return np.zeros(0, dtype=int)
    times = np.array([p.time for p in test_posts])
    max_steps = max(0, int(np.ceil((times.max() - fit.t_end) / fit.grid_dt)))
    states = np.empty((max_steps + 1, fit.x_end.shape[0]))
    states[0] = fit.x_end
    for k in range(1, max_steps + 1):
        states[k] = aslm_step(fit, states[k - 1])
    steps = np.clip(np.round((times - fit.t_end) / fit.grid_dt).astype(int), 0, max_steps)
    preds = np.array([
        discretize_opinion(states[k, p.user_id], num_classes)
        for k, p in zip(steps, test_posts)
    ])
    return preds
