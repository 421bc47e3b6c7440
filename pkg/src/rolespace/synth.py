"""Synthetic editor populations with planted roles and churn hazards.

Each user gets a primary role (round-robin for balance) and draws a quarterly
mixture theta from a Dirichlet peaked on that role; edits then sample a role
by theta and a namespace by the planted role distribution. After each active
quarter the user departs with probability expit(logit(base) + slope * shift),
where shift is the L1 distance to the previous active quarter's theta. With
slope zero the hazard is exactly the base constant, so lifetimes are
geometric; with positive slope, mixture fluctuation causes churn, which is
the signal the downstream feature ablation is expected to find.

Per-user generators are derived from (seed, user index), so the event stream
is reproducible and independent of generation order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import expit, logit

from .dtm import DtmModel
from .ingest import DEFAULT_EPOCH, EditEvent, quarter_start
from .validation import check_probability_rows

_TOPIC_STREAM_TAG = 1_000_003
_CLIP_EPS = 1e-9


@dataclass(frozen=True)
class SynthConfig:
    """Planted generative model parameters."""

    topics: np.ndarray
    n_quarters: int
    n_users: int
    concentration_primary: float = 8.0
    concentration_other: float = 0.3
    edits_mean: float = 40.0
    edits_dispersion: float = 0.0
    hazard_base: float = 0.15
    hazard_shift_slope: float = 0.0
    drift_sigma2: float = 0.0
    join_max_quarter: int = 0
    skip_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        topics = np.array(self.topics, dtype=np.float64)
        if topics.ndim != 2:
            raise ValueError("topics must have shape (K, V)")
        check_probability_rows(topics, "planted topics", atol=1e-6)
        topics.setflags(write=False)
        object.__setattr__(self, "topics", topics)
        if self.n_quarters < 1 or self.n_users < 1:
            raise ValueError("need at least one quarter and one user")
        if self.concentration_primary <= 0 or self.concentration_other <= 0:
            raise ValueError("Dirichlet concentrations must be > 0")
        if self.edits_mean < 1:
            raise ValueError("edits_mean must be >= 1 (active quarters have edits)")
        if self.edits_dispersion < 0:
            raise ValueError("edits_dispersion must be >= 0")
        if not 0.0 <= self.hazard_base <= 1.0:
            raise ValueError(f"hazard_base must be in [0, 1], got {self.hazard_base}")
        if self.drift_sigma2 < 0:
            raise ValueError("drift_sigma2 must be >= 0")
        if not 0 <= self.join_max_quarter < self.n_quarters:
            raise ValueError("join_max_quarter must lie inside the horizon")
        if not 0.0 <= self.skip_prob < 1.0:
            raise ValueError(f"skip_prob must be in [0, 1), got {self.skip_prob}")

    @property
    def n_roles(self) -> int:
        return self.topics.shape[0]

    @property
    def n_terms(self) -> int:
        return self.topics.shape[1]


@dataclass(frozen=True)
class GroundTruth:
    """What the generator actually did, for recovery scoring."""

    topics_by_slice: np.ndarray
    primary_roles: Mapping[str, int]
    trajectories: Mapping[str, tuple[tuple[int, np.ndarray], ...]]
    join_quarter: Mapping[str, int]
    final_active: Mapping[str, int]

    @property
    def n_slices(self) -> int:
        return self.topics_by_slice.shape[0]

    @property
    def n_roles(self) -> int:
        return self.topics_by_slice.shape[1]

    @property
    def n_terms(self) -> int:
        return self.topics_by_slice.shape[2]


@dataclass(frozen=True)
class RecoveryReport:
    permutation: tuple[int, ...]
    mean_cosine: float
    per_slice_cosine: tuple[float, ...]
    per_topic_cosine: tuple[float, ...]


def _drifted_topics(config: SynthConfig) -> np.ndarray:
    """Per-slice planted topics; identical across slices when sigma2 is 0."""
    T, K, V = config.n_quarters, config.n_roles, config.n_terms
    out = np.empty((T, K, V))
    out[0] = config.topics
    if config.drift_sigma2 == 0.0:
        for t in range(1, T):
            out[t] = config.topics
        return out
    rng = np.random.default_rng(
        np.random.SeedSequence([config.seed, _TOPIC_STREAM_TAG]))
    sigma = np.sqrt(config.drift_sigma2)
    for t in range(1, T):
        noisy = np.clip(out[t - 1] + rng.normal(0.0, sigma, (K, V)), _CLIP_EPS, None)
        out[t] = noisy / noisy.sum(axis=1, keepdims=True)
    return out


def _hazard(config: SynthConfig, shift: float) -> float:
    if config.hazard_shift_slope == 0.0:
        return config.hazard_base
    base = np.clip(config.hazard_base, 1e-9, 1.0 - 1e-9)
    return float(expit(logit(base) + config.hazard_shift_slope * shift))


def _draw_edit_count(rng: np.random.Generator, config: SynthConfig) -> int:
    extra_mean = config.edits_mean - 1.0
    if extra_mean <= 0:
        return 1
    if config.edits_dispersion == 0.0:
        return 1 + int(rng.poisson(extra_mean))
    size = config.edits_dispersion
    p = size / (size + extra_mean)
    return 1 + int(rng.negative_binomial(size, p))


def generate_population(config: SynthConfig) -> tuple[list[EditEvent], GroundTruth]:
    """Run the generative model forward; events sorted by (timestamp, user)."""
    topics_by_slice = _drifted_topics(config)
    K, V, T = config.n_roles, config.n_terms, config.n_quarters
    width = len(str(config.n_users - 1))
    events: list[EditEvent] = []
    primary_roles: dict[str, int] = {}
    trajectories: dict[str, tuple[tuple[int, np.ndarray], ...]] = {}
    join_quarter: dict[str, int] = {}
    final_active: dict[str, int] = {}
    quarter_seconds = {}
    for user_index in range(config.n_users):
        user_id = f"u{user_index:0{width}d}"
        rng = np.random.default_rng(
            np.random.SeedSequence([config.seed, user_index]))
        role = user_index % K
        alpha = np.full(K, config.concentration_other)
        alpha[role] += config.concentration_primary
        join = int(rng.integers(0, config.join_max_quarter + 1)) \
            if config.join_max_quarter > 0 else 0
        primary_roles[user_id] = role
        join_quarter[user_id] = join
        trajectory: list[tuple[int, np.ndarray]] = []
        theta_prev = None
        alive = True
        q = join
        while alive and q < T:
            if config.skip_prob > 0.0 and trajectory and rng.random() < config.skip_prob:
                q += 1
                continue
            theta = rng.dirichlet(alpha)
            n_edits = _draw_edit_count(rng, config)
            role_draws = rng.choice(K, size=n_edits, p=theta)
            if q not in quarter_seconds:
                quarter_seconds[q] = int(
                    (quarter_start(DEFAULT_EPOCH, q) - DEFAULT_EPOCH).days) * 86400
            base_ts = quarter_seconds[q]
            offset = 0
            for k in range(K):
                count = int(np.sum(role_draws == k))
                if count == 0:
                    continue
                namespaces = rng.choice(V, size=count, p=topics_by_slice[q, k])
                for v in namespaces:
                    events.append(EditEvent(user_id, base_ts + offset, int(v)))
                    offset += 1
            trajectory.append((q, theta))
            shift = float(np.abs(theta - theta_prev).sum()) if theta_prev is not None else 0.0
            theta_prev = theta
            if rng.random() < _hazard(config, shift):
                alive = False
            q += 1
        trajectories[user_id] = tuple(trajectory)
        final_active[user_id] = trajectory[-1][0] if trajectory else -1
    events.sort(key=lambda e: (e.timestamp, e.user_id))
    truth = GroundTruth(
        topics_by_slice=topics_by_slice,
        primary_roles=primary_roles,
        trajectories=trajectories,
        join_quarter=join_quarter,
        final_active=final_active,
    )
    return events, truth


def separated_topics(n_roles: int, n_terms: int, peak: float = 0.85) -> np.ndarray:
    """Well-separated planted roles: each concentrates on its own term block."""
    if n_terms < n_roles:
        raise ValueError("need at least one term per role")
    if not 0.0 < peak < 1.0:
        raise ValueError("peak must be in (0, 1)")
    topics = np.full((n_roles, n_terms), (1.0 - peak) / n_terms)
    bounds = np.linspace(0, n_terms, n_roles + 1).astype(int)
    for k in range(n_roles):
        block = slice(bounds[k], bounds[k + 1])
        width = bounds[k + 1] - bounds[k]
        topics[k, block] += peak / width
    return topics / topics.sum(axis=1, keepdims=True)


def _cosine_rows(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise cosine matrix between the rows of A and the rows of B."""
    An = A / np.linalg.norm(A, axis=1, keepdims=True)
    Bn = B / np.linalg.norm(B, axis=1, keepdims=True)
    return An @ Bn.T


def evaluate_recovery(model: DtmModel, truth: GroundTruth) -> RecoveryReport:
    """Match fitted topics to planted ones and score alignment.

    One global permutation (Hungarian on time-averaged cosine similarity)
    aligns fitted topic k' to planted topic k; the report carries the mean
    matched cosine plus per-slice and per-topic breakdowns.
    """
    if model.n_topics != truth.n_roles:
        raise ValueError(
            f"model has {model.n_topics} topics, ground truth {truth.n_roles}")
    if model.n_terms != truth.n_terms:
        raise ValueError(
            f"model vocabulary size {model.n_terms} != planted {truth.n_terms}")
    T = min(model.n_slices, truth.n_slices)
    if T == 0:
        raise ValueError("no overlapping slices to compare")
    K = model.n_topics
    mean_sim = np.zeros((K, K))
    per_slice_sim = []
    for t in range(T):
        sim = _cosine_rows(truth.topics_by_slice[t], model.beta[t])
        per_slice_sim.append(sim)
        mean_sim += sim / T
    rows, cols = linear_sum_assignment(-mean_sim)
    permutation = tuple(int(cols[np.flatnonzero(rows == k)[0]]) for k in range(K))
    per_topic = np.zeros(K)
    per_slice = np.zeros(T)
    for t, sim in enumerate(per_slice_sim):
        matched = sim[np.arange(K), list(permutation)]
        per_topic += matched / T
        per_slice[t] = matched.mean()
    return RecoveryReport(
        permutation=permutation,
        mean_cosine=float(per_topic.mean()),
        per_slice_cosine=tuple(float(x) for x in per_slice),
        per_topic_cosine=tuple(float(x) for x in per_topic),
    )


def save_ground_truth(truth: GroundTruth, path: str | Path) -> None:
    payload = {
        "topics_by_slice": truth.topics_by_slice.tolist(),
        "primary_roles": dict(truth.primary_roles),
        "trajectories": {
            user: [[q, list(map(float, theta))] for q, theta in traj]
            for user, traj in truth.trajectories.items()},
        "join_quarter": dict(truth.join_quarter),
        "final_active": dict(truth.final_active),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")


def load_ground_truth(path: str | Path) -> GroundTruth:
    payload = json.loads(Path(path).read_text())
    return GroundTruth(
        topics_by_slice=np.asarray(payload["topics_by_slice"]),
        primary_roles={u: int(r) for u, r in payload["primary_roles"].items()},
        trajectories={
            user: tuple((int(q), np.asarray(theta)) for q, theta in traj)
            for user, traj in payload["trajectories"].items()},
        join_quarter={u: int(q) for u, q in payload["join_quarter"].items()},
        final_active={u: int(q) for u, q in payload["final_active"].items()},
    )
