"""Profile-trajectory matrix construction and NMF clustering.

Per-user trajectories concatenate quarterly role mixtures (quarter-major:
column t*K + k holds role k's weight at quarter t), zero-filled for inactive
quarters and L2-normalized per row. Factorization uses deterministic NNDSVD
initialization and an alternating nonnegative least-squares scheme where each
subproblem is solved by projected gradient with Armijo step search. Cluster
ids come from the argmax of each coefficient row.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator

from .dtm import RoleMixture
from .ingest import ActivityRecord
from .validation import as_float_array, check_non_negative

logger = logging.getLogger(__name__)

#: A role counts as dominant for a cluster when its mean mixture weight
#: across the cluster's user-quarters reaches this value.
DOMINANT_ROLE_THRESHOLD = 0.15

_INNER_TOL_SCALE = 1e-4
_MAX_INNER_ITER = 50


@dataclass(frozen=True)
class ProfileMatrix:
    """Users by (quarters * roles) trajectory matrix, rows L2-normalized."""

    user_ids: tuple[str, ...]
    values: np.ndarray
    n_quarters: int
    n_roles: int

    def __post_init__(self):
        values = as_float_array(np.array(self.values, dtype=np.float64), "profile matrix")
        if values.shape != (len(self.user_ids), self.n_quarters * self.n_roles):
            raise ValueError(
                f"profile matrix shape {values.shape} != "
                f"({len(self.user_ids)}, {self.n_quarters * self.n_roles})")
        check_non_negative(values, "profile matrix")
        norms = np.linalg.norm(values, axis=1)
        if (norms == 0).any():
            raise ValueError("profile matrix must not contain zero rows")
        if np.abs(norms - 1.0).max() > 1e-9:
            raise ValueError("profile matrix rows must be L2-normalized")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)


@dataclass(frozen=True)
class NmfModel:
    """Nonnegative factors plus the squared Frobenius error per iteration."""

    W: np.ndarray
    H: np.ndarray
    objective_trace: tuple[float, ...]

    def __post_init__(self):
        W = as_float_array(np.array(self.W, dtype=np.float64), "W")
        H = as_float_array(np.array(self.H, dtype=np.float64), "H")
        if W.shape[1] != H.shape[0]:
            raise ValueError(f"factor shapes {W.shape} and {H.shape} do not chain")
        check_non_negative(W, "W")
        check_non_negative(H, "H")
        if not self.objective_trace:
            raise ValueError("objective trace must hold at least the initial error")
        if any(b > a for a, b in zip(self.objective_trace, self.objective_trace[1:])):
            raise ValueError("objective trace must be non-increasing")
        W.setflags(write=False)
        H.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "H", H)

    @property
    def n_components(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class ClusterAssignment:
    """user_id -> cluster id in [0, n_clusters)."""

    labels: tuple[tuple[str, int], ...]
    n_clusters: int

    def __post_init__(self):
        for user_id, cluster in self.labels:
            if not 0 <= cluster < self.n_clusters:
                raise ValueError(
                    f"cluster {cluster} for {user_id!r} outside [0, {self.n_clusters})")

    def as_dict(self) -> dict[str, int]:
        return dict(self.labels)

    @property
    def n_users(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class ClusterReport:
    cluster_id: int
    size: int
    fraction: float
    min_active: int
    max_active: int
    median_active: float
    mean_active: float
    quarter_range: tuple[int, int]
    dominant_roles: tuple[tuple[int, float], ...]


def build_profile_matrix(
    mixtures: Iterable[RoleMixture],
    n_quarters: int,
    n_roles: int,
    eligible_min_quarters: int = 4,
) -> ProfileMatrix:
    """Assemble per-user trajectory rows from quarterly role mixtures.

    Users active in fewer than ``eligible_min_quarters`` quarters are dropped;
    quarters without a mixture stay zero; rows are then L2-normalized.
    """
    if eligible_min_quarters < 1:
        raise ValueError("eligible_min_quarters must be >= 1")
    by_user: dict[str, dict[int, np.ndarray]] = {}
    for m in mixtures:
        if m.quarter >= n_quarters:
            raise ValueError(
                f"mixture for {m.user_id!r} at quarter {m.quarter} outside "
                f"horizon of {n_quarters} quarters")
        if m.theta.shape[0] != n_roles:
            raise ValueError(
                f"mixture for {m.user_id!r} has {m.theta.shape[0]} roles, expected {n_roles}")
        per_user = by_user.setdefault(m.user_id, {})
        if m.quarter in per_user:
            raise ValueError(f"duplicate mixture for {m.user_id!r} q{m.quarter}")
        per_user[m.quarter] = m.theta
    user_ids = []
    rows = []
    for user_id in sorted(by_user):
        thetas = by_user[user_id]
        if len(thetas) < eligible_min_quarters:
            continue
        row = np.zeros(n_quarters * n_roles)
        for quarter, theta in thetas.items():
            row[quarter * n_roles:(quarter + 1) * n_roles] = theta
        norm = np.linalg.norm(row)
        if norm == 0:
            logger.warning("excluding %r: all-zero trajectory", user_id)
            continue
        user_ids.append(user_id)
        rows.append(row / norm)
    if not rows:
        raise ValueError("no users remain after eligibility filtering")
    return ProfileMatrix(tuple(user_ids), np.vstack(rows), n_quarters, n_roles)


def nndsvd_init(M: np.ndarray, n_components: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic SVD-based nonnegative initialization.

    Each truncated singular triple contributes whichever of its positive or
    negative part pair carries more mass; no randomness is involved.
    """
    M = as_float_array(M, "M")
    check_non_negative(M, "M")
    n, d = M.shape
    if not 1 <= n_components <= min(n, d):
        raise ValueError(
            f"n_components must be in [1, {min(n, d)}], got {n_components}")
    if not M.any():
        raise ValueError("cannot initialize factors for an all-zero matrix")
    U, S, Vt = scipy.linalg.svd(M, full_matrices=False)
    W = np.zeros((n, n_components))
    H = np.zeros((n_components, d))
    W[:, 0] = np.sqrt(S[0]) * np.abs(U[:, 0])
    H[0, :] = np.sqrt(S[0]) * np.abs(Vt[0, :])
    for j in range(1, n_components):
        x, y = U[:, j], Vt[j, :]
        xp, xn = np.maximum(x, 0), np.maximum(-x, 0)
        yp, yn = np.maximum(y, 0), np.maximum(-y, 0)
        xp_norm, yp_norm = np.linalg.norm(xp), np.linalg.norm(yp)
        xn_norm, yn_norm = np.linalg.norm(xn), np.linalg.norm(yn)
        mass_p = xp_norm * yp_norm
        mass_n = xn_norm * yn_norm
        if mass_p >= mass_n:
            if mass_p == 0:
                continue
            u, v, sigma = xp / xp_norm, yp / yp_norm, mass_p
        else:
            u, v, sigma = xn / xn_norm, yn / yn_norm, mass_n
        scale = np.sqrt(S[j] * sigma)
        W[:, j] = scale * u
        H[j, :] = scale * v
    return W, H


def _squared_frobenius(M, W, H):
    diff = M - W @ H
    return float((diff * diff).sum())


def _nls_subproblem(V, W, H, tol, max_iter):
    """Projected-gradient solve of min_{H>=0} ||V - WH||_F^2 / 2."""
    WtV = W.T @ V
    WtW = W.T @ W
    alpha = 1.0
    beta = 0.1
    for _ in range(max_iter):
        grad = WtW @ H - WtV
        proj_grad = grad[(grad < 0) | (H > 0)]
        if np.linalg.norm(proj_grad) < tol:
            break
        H_prev = H
        for inner_iter in range(20):
            H_new = np.maximum(H - alpha * grad, 0)
            d = H_new - H
            grad_d = float((grad * d).sum())
            dQd = float(((WtW @ d) * d).sum())
            sufficient = 0.99 * grad_d + 0.5 * dQd <= 0
            if inner_iter == 0:
                shrink = not sufficient
            if shrink:
                if sufficient:
                    H = H_new
                    break
                alpha *= beta
            else:
                if not sufficient or (H_new == H_prev).all():
                    H = H_prev
                    break
                alpha /= beta
                H_prev = H_new
        else:
            H = H_prev
    return H


def fit_nmf(
    M: np.ndarray,
    n_components: int,
    max_iter: int = 200,
    tol: float = 1e-4,
    init: tuple[np.ndarray, np.ndarray] | None = None,
) -> NmfModel:
    """Alternating nonnegative least squares from an NNDSVD start.

    Stops when the relative drop in squared Frobenius error falls below
    ``tol`` or after ``max_iter`` alternations; the recorded trace is
    non-increasing.
    """
    M = as_float_array(M, "M")
    check_non_negative(M, "M")
    if init is None:
        W, H = nndsvd_init(M, n_components)
    else:
        W, H = (np.array(f, dtype=np.float64) for f in init)
        if W.shape != (M.shape[0], n_components) or H.shape != (n_components, M.shape[1]):
            raise ValueError("init factor shapes do not match M and n_components")
        check_non_negative(W, "init W")
        check_non_negative(H, "init H")
    trace = [_squared_frobenius(M, W, H)]
    if max_iter > 0:
        grad_W = W @ (H @ H.T) - M @ H.T
        grad_H = (W.T @ W) @ H - W.T @ M
        init_grad = np.sqrt(np.linalg.norm(grad_W) ** 2 + np.linalg.norm(grad_H) ** 2)
        inner_tol = _INNER_TOL_SCALE * init_grad
    for _ in range(max_iter):
        H = _nls_subproblem(M, W, H, inner_tol, _MAX_INNER_ITER)
        W = _nls_subproblem(M.T, H.T, W.T, inner_tol, _MAX_INNER_ITER).T
        error = _squared_frobenius(M, W, H)
        previous = trace[-1]
        if error > previous:
            # rounding artifact at convergence; keep the trace honest
            break
        trace.append(error)
        if previous == 0 or (previous - error) / previous < tol:
            break
    return NmfModel(W, H, tuple(trace))


def discretize(W: np.ndarray, user_ids: Sequence[str] | None = None) -> ClusterAssignment:
    """Assign each row to its argmax component, ties to the lowest index."""
    W = as_float_array(W, "W")
    check_non_negative(W, "W")
    if user_ids is None:
        user_ids = [str(i) for i in range(W.shape[0])]
    if len(user_ids) != W.shape[0]:
        raise ValueError(f"{len(user_ids)} user ids for {W.shape[0]} rows")
    for i in range(W.shape[0]):
        if not W[i].any():
            logger.warning("all-zero coefficient row for %r; assigning cluster 0",
                           user_ids[i])
    labels = np.argmax(W, axis=1)
    return ClusterAssignment(
        tuple((uid, int(label)) for uid, label in zip(user_ids, labels)),
        n_clusters=W.shape[1])


def cluster_summary(
    assignment: ClusterAssignment,
    records: Iterable[ActivityRecord],
    mixtures: Iterable[RoleMixture],
    dominant_role_threshold: float = DOMINANT_ROLE_THRESHOLD,
) -> list[ClusterReport]:
    """Per-cluster sizes, lifespan statistics, active-quarter spread and
    dominant roles (mean mixture weight at or above the threshold)."""
    members = assignment.as_dict()
    active_quarters: dict[str, set[int]] = {}
    record_quarters: dict[int, list[int]] = {c: [] for c in range(assignment.n_clusters)}
    for record in records:
        cluster = members.get(record.user_id)
        if cluster is None:
            continue
        active_quarters.setdefault(record.user_id, set()).add(record.quarter)
        record_quarters[cluster].append(record.quarter)
    for user_id in members:
        if user_id not in active_quarters:
            raise ValueError(f"assigned user {user_id!r} has no activity records")
    theta_sums: dict[int, np.ndarray] = {}
    theta_counts: dict[int, int] = {}
    for m in mixtures:
        cluster = members.get(m.user_id)
        if cluster is None:
            continue
        if cluster not in theta_sums:
            theta_sums[cluster] = np.zeros_like(m.theta)
        theta_sums[cluster] = theta_sums[cluster] + m.theta
        theta_counts[cluster] = theta_counts.get(cluster, 0) + 1
    by_cluster: dict[int, list[str]] = {c: [] for c in range(assignment.n_clusters)}
    for user_id, cluster in assignment.labels:
        by_cluster[cluster].append(user_id)
    total = assignment.n_users
    reports = []
    for cluster in range(assignment.n_clusters):
        users = by_cluster[cluster]
        if not users:
            reports.append(ClusterReport(cluster, 0, 0.0, 0, 0, 0.0, 0.0, (0, 0), ()))
            continue
        spans = np.asarray([len(active_quarters[u]) for u in users])
        quarters = np.asarray(record_quarters[cluster])
        lo = int(np.floor(np.percentile(quarters, 25)))
        hi = int(np.ceil(np.percentile(quarters, 75)))
        dominant: tuple[tuple[int, float], ...] = ()
        if cluster in theta_sums:
            mean_theta = theta_sums[cluster] / theta_counts[cluster]
            ranked = sorted(range(mean_theta.shape[0]),
                            key=lambda k: (-mean_theta[k], k))
            dominant = tuple((k, float(mean_theta[k])) for k in ranked
                             if mean_theta[k] >= dominant_role_threshold)
        reports.append(ClusterReport(
            cluster_id=cluster,
            size=len(users),
            fraction=len(users) / total,
            min_active=int(spans.min()),
            max_active=int(spans.max()),
            median_active=float(np.median(spans)),
            mean_active=float(spans.mean()),
            quarter_range=(lo, hi),
            dominant_roles=dominant,
        ))
    return reports


_FLOAT_FMT = "%.17g"


def write_profile_csv(matrix: ProfileMatrix, path: str | Path) -> None:
    """CSV with header ``user,q<t>_role<k>...`` in quarter-major order."""
    header = ["user"] + [f"q{t}_role{k}"
                         for t in range(matrix.n_quarters)
                         for k in range(matrix.n_roles)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for user_id, row in zip(matrix.user_ids, matrix.values):
            writer.writerow([user_id] + [_FLOAT_FMT % x for x in row])


def read_profile_csv(path: str | Path, n_quarters: int, n_roles: int) -> ProfileMatrix:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "user":
            raise ValueError(f"{path}: missing profile header")
        user_ids = []
        rows = []
        for row in reader:
            if not row:
                continue
            user_ids.append(row[0])
            rows.append([float(x) for x in row[1:]])
    return ProfileMatrix(tuple(user_ids), np.asarray(rows), n_quarters, n_roles)


def write_factors(model: NmfModel, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / "W.csv", model.W, fmt=_FLOAT_FMT, delimiter=",")
    np.savetxt(directory / "H.csv", model.H, fmt=_FLOAT_FMT, delimiter=",")
    np.savetxt(directory / "objective.csv", np.asarray(model.objective_trace),
               fmt=_FLOAT_FMT, delimiter=",")


def write_cluster_report_json(reports: Sequence[ClusterReport],
                              path: str | Path) -> None:
    payload = [{
        "cluster": r.cluster_id,
        "size": r.size,
        "fraction": r.fraction,
        "min_active_quarters": r.min_active,
        "max_active_quarters": r.max_active,
        "median_active_quarters": r.median_active,
        "mean_active_quarters": r.mean_active,
        "quarter_range": list(r.quarter_range),
        "dominant_roles": [{"role": k, "mean_poap": weight}
                           for k, weight in r.dominant_roles],
    } for r in reports]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def write_cluster_report_csv(reports: Sequence[ClusterReport], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cluster", "size", "fraction",
                         "min_active_quarters", "max_active_quarters",
                         "median_active_quarters", "mean_active_quarters",
                         "quarter_range_lo", "quarter_range_hi", "dominant_roles"])
        for r in reports:
            roles = ";".join(f"{k}:{weight:.4f}" for k, weight in r.dominant_roles)
            writer.writerow([r.cluster_id, r.size, "%.6f" % r.fraction,
                             r.min_active, r.max_active,
                             "%.1f" % r.median_active, "%.6f" % r.mean_active,
                             r.quarter_range[0], r.quarter_range[1], roles])


class TrajectoryNmf(BaseEstimator):
    """Estimator facade over NNDSVD-initialized alternating NMF."""

    def __init__(self, n_components=10, max_iter=200, tol=1e-4):
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None):
        X = X.values if isinstance(X, ProfileMatrix) else X
        self.model_ = fit_nmf(X, self.n_components, self.max_iter, self.tol)
        self.components_ = self.model_.H
        self.labels_ = np.argmax(self.model_.W, axis=1)
        return self

    def transform(self, X=None) -> np.ndarray:
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted")
        return self.model_.W

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X).labels_
