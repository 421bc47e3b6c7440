"""Sliding-window churn labeling and feature extraction from role mixtures.

A window [j, j+w-1] looks at one user's mixtures inside it; the label comes
from what happens after the window end e: silence means Departed, activity at
or beyond e+n means Staying, and activity only inside the gap (e, e+n) is
Excluded. Windows whose staying horizon would pass the final observed quarter
are never enumerated, so censored users cannot leak in as Departed.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dtm import RoleMixture
from .ingest import ActivityRecord
from .validation import check_consistent_length

logger = logging.getLogger(__name__)

_SCALAR_FEATURES = (
    "first_active_quarter",
    "cumulative_active_quarters",
    "frac_active_lifespan",
    "frac_active_window",
    "diversity_entropy",
)


class Label(enum.Enum):
    DEPARTED = "departed"
    STAYING = "staying"
    EXCLUDED = "excluded"


@dataclass(frozen=True)
class ChurnConfig:
    """Window geometry, stabilizer delta and target class ratio."""

    w: int = 4
    m: int = 1
    n: int = 3
    delta: float = 0.001
    class_ratio: tuple[int, int] = (1, 2)

    def __post_init__(self):
        if self.w < 1:
            raise ValueError(f"w must be >= 1, got {self.w}")
        if not 1 <= self.m < self.n:
            raise ValueError(f"need 1 <= m < n, got m={self.m}, n={self.n}")
        if self.delta <= 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        ratio = tuple(self.class_ratio)
        if len(ratio) != 2 or ratio[0] < 1 or ratio[1] < 1:
            raise ValueError(f"class_ratio must be two positive ints, got {ratio}")
        object.__setattr__(self, "class_ratio", ratio)


@dataclass(frozen=True)
class ChurnExample:
    user_id: str
    window: int
    features: np.ndarray
    label: Label

    def __post_init__(self):
        if self.label is Label.EXCLUDED:
            raise ValueError("excluded instances are filtered before materialization")
        features = np.array(self.features, dtype=np.float64)
        features.setflags(write=False)
        object.__setattr__(self, "features", features)


@dataclass(frozen=True)
class ChurnDataset:
    """Balanced examples across all windows, Departed encoded as y=1."""

    user_ids: tuple[str, ...]
    window_ids: tuple[int, ...]
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y, dtype=np.int64)
        check_consistent_length(self.user_ids, self.window_ids, X, y)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ValueError(
                f"feature matrix shape {X.shape} does not match "
                f"{len(self.feature_names)} feature names")
        if y.size and not np.isin(np.unique(y), (0, 1)).all():
            raise ValueError("labels must be 0/1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n_examples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


def feature_names(n_roles: int) -> tuple[str, ...]:
    names = list(_SCALAR_FEATURES)
    names += [f"mean_poap_{k}" for k in range(n_roles)]
    names += [f"delta_poap_mean_{k}" for k in range(n_roles)]
    names += [f"delta_poap_max_{k}" for k in range(n_roles)]
    return tuple(names)


def feature_groups(n_roles: int) -> dict[str, tuple[int, ...]]:
    """Column indices per named group; both delta aggregates form one group."""
    base = len(_SCALAR_FEATURES)
    groups = {name: (i,) for i, name in enumerate(_SCALAR_FEATURES)}
    groups["mean_poap"] = tuple(range(base, base + n_roles))
    groups["delta_poap"] = tuple(range(base + n_roles, base + 3 * n_roles))
    return groups


def enumerate_windows(n_quarters: int, config: ChurnConfig) -> list[tuple[int, int]]:
    """Inclusive [j, j+w-1] ranges for j = 0 .. T-w-n; empty when T < w+n."""
    last_start = n_quarters - config.w - config.n
    if last_start < 0:
        logger.warning(
            "no labelable window: %d quarters < w+n = %d",
            n_quarters, config.w + config.n)
        return []
    return [(j, j + config.w - 1) for j in range(last_start + 1)]


def label_user(active_quarters: set[int], window: tuple[int, int],
               config: ChurnConfig) -> Label:
    start, end = window
    if not any(start <= q <= end for q in active_quarters):
        raise ValueError(f"user inactive throughout window [{start}, {end}]")
    after = [q for q in active_quarters if q > end]
    if not after:
        return Label.DEPARTED
    if any(q >= end + config.n for q in after):
        return Label.STAYING
    return Label.EXCLUDED


def _entropy(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum()) if nz.size else 0.0


def compute_features(
    records: Sequence[ActivityRecord],
    mixtures: Sequence[RoleMixture],
    window: tuple[int, int],
    config: ChurnConfig,
    n_quarters: int | None = None,
) -> np.ndarray:
    """Feature vector for one user over one window.

    Layout: the five scalar features, then per-role mean mixture over the
    window, then per-role mean and max of the quarter-over-quarter change
    ratio (POAP_j - POAP_{j-1} + delta) / (POAP_{j-1} + delta).
    """
    start, end = window
    if start < 0 or end < start:
        raise ValueError(f"invalid window [{start}, {end}]")
    if end - start + 1 != config.w:
        raise ValueError(f"window [{start}, {end}] does not span w={config.w} quarters")
    if n_quarters is not None and end >= n_quarters:
        raise ValueError(f"window [{start}, {end}] extends past quarter {n_quarters - 1}")
    active = {r.quarter for r in records}
    if not any(start <= q <= end for q in active):
        raise ValueError(f"user inactive throughout window [{start}, {end}]")
    theta_by_quarter = {m.quarter: m.theta for m in mixtures}
    for q in active:
        if start <= q <= end and q not in theta_by_quarter:
            raise ValueError(f"missing mixture for active quarter {q} in window")
    K = next(iter(theta_by_quarter.values())).shape[0]
    poap = np.zeros((config.w, K))
    for i, q in enumerate(range(start, end + 1)):
        if q in theta_by_quarter:
            poap[i] = theta_by_quarter[q]
    first_active = min(active)
    cumulative = sum(1 for q in active if q <= end)
    frac_lifespan = cumulative / (end - first_active + 1)
    frac_window = sum(1 for q in active if start <= q <= end) / config.w
    entropy = float(np.mean([_entropy(poap[i]) for i in range(config.w)]))
    mean_poap = poap.mean(axis=0)
    if config.w >= 2:
        prev = poap[:-1]
        cur = poap[1:]
        ratios = (cur - prev + config.delta) / (prev + config.delta)
        delta_mean = ratios.mean(axis=0)
        delta_max = ratios.max(axis=0)
    else:
        # single-quarter window has no change pairs; a flat trajectory's ratio
        delta_mean = np.ones(K)
        delta_max = np.ones(K)
    return np.concatenate([
        [first_active, cumulative, frac_lifespan, frac_window, entropy],
        mean_poap, delta_mean, delta_max])


def build_dataset(
    records: Iterable[ActivityRecord],
    mixtures: Iterable[RoleMixture],
    config: ChurnConfig,
    seed: int = 0,
    n_quarters: int | None = None,
    eligible_min_quarters: int = 4,
) -> ChurnDataset:
    """Label every eligible (user, window) pair and balance classes per window.

    Per window, with ratio r_c : r_n, keep k*r_c churners and k*r_n
    non-churners where k = min(churners // r_c, stayers // r_n); windows that
    cannot fill the ratio are skipped. Down-sampling is seeded and users are
    visited in sorted order, so output is deterministic.
    """
    by_user_records: dict[str, list[ActivityRecord]] = {}
    for r in records:
        by_user_records.setdefault(r.user_id, []).append(r)
    by_user_mixtures: dict[str, list[RoleMixture]] = {}
    n_roles = None
    for m in mixtures:
        by_user_mixtures.setdefault(m.user_id, []).append(m)
        n_roles = m.theta.shape[0] if n_roles is None else n_roles
    if n_roles is None:
        raise ValueError("no mixtures supplied")
    if n_quarters is None:
        n_quarters = max(r.quarter for rs in by_user_records.values() for r in rs) + 1
    windows = enumerate_windows(n_quarters, config)
    names = feature_names(n_roles)
    rng = np.random.default_rng(seed)
    r_c, r_n = config.class_ratio
    kept: list[ChurnExample] = []
    for j, window in enumerate(windows):
        churners: list[ChurnExample] = []
        stayers: list[ChurnExample] = []
        for user_id in sorted(by_user_records):
            user_records = by_user_records[user_id]
            active = {r.quarter for r in user_records}
            if len(active) < eligible_min_quarters:
                continue
            if not any(window[0] <= q <= window[1] for q in active):
                continue
            label = label_user(active, window, config)
            if label is Label.EXCLUDED:
                continue
            features = compute_features(
                user_records, by_user_mixtures.get(user_id, []), window,
                config, n_quarters)
            example = ChurnExample(user_id, j, features, label)
            (churners if label is Label.DEPARTED else stayers).append(example)
        k = min(len(churners) // r_c, len(stayers) // r_n)
        if k == 0:
            logger.warning(
                "window %d skipped: %d churners / %d stayers cannot fill %d:%d",
                j, len(churners), len(stayers), r_c, r_n)
            continue
        keep_c = sorted(rng.choice(len(churners), size=k * r_c, replace=False))
        keep_s = sorted(rng.choice(len(stayers), size=k * r_n, replace=False))
        kept.extend(churners[i] for i in keep_c)
        kept.extend(stayers[i] for i in keep_s)
    if not kept:
        return ChurnDataset((), (), np.empty((0, len(names))),
                            np.empty(0, dtype=np.int64), names)
    return ChurnDataset(
        user_ids=tuple(e.user_id for e in kept),
        window_ids=tuple(e.window for e in kept),
        X=np.vstack([e.features for e in kept]),
        y=np.asarray([1 if e.label is Label.DEPARTED else 0 for e in kept],
                     dtype=np.int64),
        feature_names=names,
    )


_FLOAT_FMT = "%.17g"


def write_dataset_csv(dataset: ChurnDataset, path: str | Path) -> None:
    """CSV ``user,window,label,f_0..`` plus a sidecar JSON naming columns."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user", "window", "label"]
                        + [f"f_{i}" for i in range(dataset.n_features)])
        for i in range(dataset.n_examples):
            label = Label.DEPARTED if dataset.y[i] == 1 else Label.STAYING
            writer.writerow([dataset.user_ids[i], dataset.window_ids[i], label.value]
                            + [_FLOAT_FMT % x for x in dataset.X[i]])
    sidecar = path.with_suffix(".features.json")
    sidecar.write_text(json.dumps(
        {"columns": list(dataset.feature_names)}, indent=2) + "\n")


def read_dataset_csv(path: str | Path) -> ChurnDataset:
    path = Path(path)
    sidecar = path.with_suffix(".features.json")
    names = tuple(json.loads(sidecar.read_text())["columns"])
    user_ids: list[str] = []
    window_ids: list[int] = []
    rows: list[list[float]] = []
    labels: list[int] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:3] != ["user", "window", "label"]:
            raise ValueError(f"{path}: missing dataset header")
        for row in reader:
            if not row:
                continue
            user_ids.append(row[0])
            window_ids.append(int(row[1]))
            labels.append(1 if row[2] == Label.DEPARTED.value else 0)
            rows.append([float(x) for x in row[3:]])
    X = np.asarray(rows) if rows else np.empty((0, len(names)))
    return ChurnDataset(tuple(user_ids), tuple(window_ids), X,
                        np.asarray(labels, dtype=np.int64), names)
