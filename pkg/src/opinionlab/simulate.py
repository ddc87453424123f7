"""Difference-equation opinion simulators and the synthetic data generator.

The stochastic bounded-confidence generator picks a batch of initiators per
step; each initiator samples an interaction partner with probability
proportional to ``max(|x_u - x_v|, eps) ** -rho`` and moves toward (or, with
the literal additive rule, by a multiple of) the partner's opinion.  Run
long enough, different exponents produce consensus, polarization, or
clustering of the population.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .data import OpinionDataset, Post, discretize_opinion

DISTANCE_EPS = 1e-6

# Regime presets: exponent plus the update rule that realizes the regime.
# Consensus needs the attractive pull toward the partner; polarization and
# clustering rely on the additive rule, which is sign-reinforcing under
# homophily (like-minded partners push each other further out) when the
# initial opinions straddle zero.  The *-appx variants use the alternative
# exponents quoted for the same regimes elsewhere.
PRESETS = {
    "consensus": {"rho": -1.0, "update_rule": "attractive"},
    "polarization": {"rho": 0.5, "update_rule": "additive"},
    "clustering": {"rho": 0.05, "update_rule": "additive"},
    "consensus-appx": {"rho": -1.0, "update_rule": "attractive"},
    "polarization-appx": {"rho": 1.0, "update_rule": "additive"},
    "clustering-appx": {"rho": 0.1, "update_rule": "additive"},
}


def preset_config(name: str, **overrides) -> "SbcmGenConfig":
    """SbcmGenConfig for a named regime preset, with optional overrides."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    merged = {**PRESETS[name], **overrides}
    return SbcmGenConfig(**merged)


@dataclass
class SimState:
    """Continuous opinions of all users at one step, plus the RNG."""

    opinions: np.ndarray
    step: int
    rng: np.random.Generator

    def __post_init__(self):
        self.opinions = np.asarray(self.opinions, dtype=float)
        if not np.all(np.isfinite(self.opinions)):
            raise ValueError("non-finite opinions")


@dataclass(frozen=True)
class SbcmGenConfig:
    num_users: int = 200
    num_steps: int = 200
    initiators_per_step: int = 15
    mu: float = 0.1
    rho: float = -1.0
    update_rule: str = "attractive"  # or "additive"
    init_range: tuple[float, float] = (-1.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        if self.num_users < 2:
            raise ValueError("need at least two users")
        if self.initiators_per_step > self.num_users:
            raise ValueError("more initiators than users")
        if not 0 < self.mu <= 1:
            raise ValueError("mu must be in (0, 1]")
        if self.update_rule not in ("attractive", "additive"):
            raise ValueError(f"unknown update rule {self.update_rule!r}")


@dataclass
class InteractionLog:
    """(step, initiator, partner) triples of realized interactions."""

    entries: list[tuple[int, int, int]] = field(default_factory=list)

    def add(self, step: int, initiator: int, partner: int):
        if initiator == partner:
            raise ValueError("self-interaction")
        self.entries.append((step, initiator, partner))


def interaction_weights(distances, rho, eps: float = DISTANCE_EPS):
    """Unnormalized partner weights max(d, eps)^(-rho).

    Works on ndarrays and on autodiff Tensors (rho may be a Tensor too),
    so the simulator and the differentiable training path share one kernel.
    """
    return ad.exp(ad.log(ad.maximum(distances, eps)) * (-1.0 * rho))


def sbcm_partner_probs(opinions, u: int, rho, eps: float = DISTANCE_EPS):
    """Probability of user `u` picking each partner; entry u is zero."""
    opinions = np.asarray(opinions, dtype=float)
    if opinions.size < 2:
        raise ValueError("need at least two users")
    w = interaction_weights(np.abs(opinions[u] - opinions), rho, eps)
    w[u] = 0.0
    return w / w.sum()

def sbcm_partner_matrix(opinions, rho, eps: float = DISTANCE_EPS):
    """Row-stochastic matrix of partner probabilities, zero diagonal.

    Accepts an ndarray or a Tensor of opinions; in the latter case the
    result is differentiable in the opinions and in `rho`.
    """
    n = opinions.shape[0]
    col = opinions.reshape(n, 1) if isinstance(opinions, ad.Tensor) else np.reshape(opinions, (n, 1))
    dist = ad.absolute(col - opinions.reshape(1, n))
    w = interaction_weights(dist, rho, eps)
    off_diag = 1.0 - np.eye(n)
    w = w * off_diag
    return w / w.sum(axis=1, keepdims=True)


def step_sbcm(state: SimState, config: SbcmGenConfig, log: InteractionLog | None = None) -> SimState:
    """One generator step: sampled initiators interact sequentially."""
    x = state.opinions.copy()
    rng = state.rng
    initiators = rng.choice(config.num_users, size=config.initiators_per_step, replace=False)
    for u in initiators:
        probs = sbcm_partner_probs(x, int(u), config.rho)
        v = int(rng.choice(config.num_users, p=probs))
        if log is not None:
            log.add(state.step, int(u), v)
        if config.update_rule == "attractive":
            x[u] = x[u] + config.mu * (x[v] - x[u])
        else:
            x[u] = x[u] + config.mu * x[v]
    return SimState(x, state.step + 1, rng)


def step_degroot(state: SimState, weights: np.ndarray) -> SimState:
    """Synchronous update x_u += sum_{v != u} a_uv x_v; the diagonal of
    `weights` is ignored."""
    a = np.array(weights, dtype=float)
    np.fill_diagonal(a, 0.0)
    x = state.opinions + a @ state.opinions
    return replace(state, opinions=x, step=state.step + 1)


def step_fj(state: SimState, susceptibility: np.ndarray, innate: np.ndarray) -> SimState:
    """x_u(t+1) = s_u * sum_{v != u} x_v(t) + (1 - s_u) * x_u(0)."""
    s = np.asarray(susceptibility, dtype=float)
    x = state.opinions
    others = x.sum() - x
    return replace(state, opinions=s * others + (1.0 - s) * np.asarray(innate, dtype=float), step=state.step + 1)


def step_hk(state: SimState, delta: float) -> SimState:
    """Bounded-confidence averaging; the neighborhood includes the user."""
    x = state.opinions
    near = np.abs(x[:, None] - x[None, :]) <= delta
    counts = near.sum(axis=1)
    x_new = x + (near @ x) / counts - x  # mean over neighborhood of (x_v - x_u)
    return replace(state, opinions=x_new, step=state.step + 1)


def step_voter(state: SimState) -> SimState:
    """Every user copies a uniformly random user's opinion (synchronously)."""
    n = state.opinions.shape[0]
    picks = state.rng.integers(0, n, size=n)
    return SimState(state.opinions[picks], state.step + 1, state.rng)


def trajectory_to_dataset(trajectory: np.ndarray, num_classes: int = 5) -> OpinionDataset:
    """One post per user per step; label = discretized opinion, time = step."""
    num_users, num_steps = trajectory.shape
    posts = []
    for t in range(num_steps):
        for u in range(num_users):
            posts.append(Post(u, float(t), discretize_opinion(trajectory[u, t], num_classes)))
    return OpinionDataset(tuple(posts), num_users, num_classes, float(num_steps))


def generate_sbcm_dataset(config: SbcmGenConfig):
    """Run the generator and return (dataset, interaction log, U x T trajectory)."""
    rng = np.random.default_rng(config.seed)
    low, high = config.init_range
    state = SimState(rng.uniform(low, high, size=config.num_users), 0, rng)
    log = InteractionLog()
    trajectory = np.empty((config.num_users, config.num_steps))
    for t in range(config.num_steps):
        trajectory[:, t] = state.opinions
        state = step_sbcm(state, config, log)
    return trajectory_to_dataset(trajectory), log, trajectory


def generate_degroot_dataset(num_users: int, num_steps: int, weights: np.ndarray,
                             num_classes: int = 5, seed: int = 0,
                             init_range: tuple[float, float] = (-1.0, 1.0)):
    """Synchronous DeGroot rollout, discretized like the SBCM generator."""
    rng = np.random.default_rng(seed)
    low, high = init_range
    state = SimState(rng.uniform(low, high, size=num_users), 0, rng)
    trajectory = np.empty((num_users, num_steps))
    for t in range(num_steps):
        trajectory[:, t] = state.opinions
        state = step_degroot(state, weights)
    return trajectory_to_dataset(trajectory, num_classes), trajectory


# ----- regime diagnostics and file export -------------------------------------


def cluster_summary(opinions: np.ndarray, bin_width: float = 0.1, min_frac: float = 0.02):
    """Locate opinion clusters as runs of occupied histogram bins.

    Returns (cluster centers, max gap between adjacent centers).  A bin
    counts as occupied when it holds at least `min_frac` of the users.
    """
    opinions = np.asarray(opinions)
    lo = min(-1.0, opinions.min())
    hi = max(1.0, opinions.max())
    nbins = int(np.ceil((hi - lo) / bin_width))
    counts, edges = np.histogram(opinions, bins=nbins, range=(lo, lo + nbins * bin_width))
    occupied = counts >= max(1, int(np.ceil(min_frac * opinions.size)))
    centers = []
    run_idx = []
    for i, occ in enumerate(occupied):
        if occ:
            run_idx.append(i)
        elif run_idx:
            centers.append(_run_center(run_idx, counts, edges))
            run_idx = []
    if run_idx:
        centers.append(_run_center(run_idx, counts, edges))
    gaps = np.diff(centers) if len(centers) > 1 else np.array([0.0])
    return np.array(centers), float(gaps.max())


def _run_center(run_idx, counts, edges):
    mids = (edges[:-1] + edges[1:]) / 2.0
    w = counts[run_idx]
    return float(np.average(mids[run_idx], weights=w))


def save_trajectory_csv(trajectory: np.ndarray, path):
    num_users = trajectory.shape[0]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step"] + [f"u{u}" for u in range(num_users)])
        for t in range(trajectory.shape[1]):
            writer.writerow([t] + [repr(float(v)) for v in trajectory[:, t]])


def save_interactions_csv(log: InteractionLog, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "initiator", "partner"])
        writer.writerows(log.entries)
