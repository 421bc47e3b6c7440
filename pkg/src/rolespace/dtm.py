"""Time-sliced topic model over quarterly activity documents.

A collapsed Gibbs sampler fits each slice in order, chaining priors forward:
slice t's topic-term prior is eta + kappa * (slice t-1's fitted topics) and
its document-topic prior mean is slice t-1's mean mixture, followed by one
backward exponential-smoothing pass over the topic-term rows. kappa grows as
the drift variance sigma2 shrinks, so small sigma2 means slow-moving topics.
A one-slice corpus reduces exactly to plain LDA.

Per-document role mixtures (theta) come from fold-in sampling against the
frozen topics of the document's slice.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from . import _gibbs
from .corpus import Document, TimeSlicedCorpus
from .validation import SIMPLEX_ATOL

_LDA_DEFAULT_ALPHA_MASS = 50.0


@dataclass(frozen=True)
class DtmConfig:
    """Sampler and chaining hyperparameters.

    alpha defaults to 50/K; kappa = min(coupling_scale / sigma2, coupling_cap)
    caps the pseudo-count mass carried between slices.
    """

    K: int = 7
    sigma2: float = 0.01
    alpha: float | None = None
    eta: float = 0.01
    gibbs_iterations: int = 200
    burn_in: int = 100
    coupling_scale: float = 1.0
    coupling_cap: float = 1000.0
    seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be > 0, got {self.sigma2}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", _LDA_DEFAULT_ALPHA_MASS / self.K)
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.eta <= 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.burn_in < 0:
            raise ValueError(f"burn_in must be >= 0, got {self.burn_in}")
        if self.gibbs_iterations <= self.burn_in:
            raise ValueError(
                f"gibbs_iterations ({self.gibbs_iterations}) must exceed "
                f"burn_in ({self.burn_in})")
        if self.coupling_scale <= 0 or self.coupling_cap <= 0:
            raise ValueError("coupling_scale and coupling_cap must be > 0")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")

    @property
    def kappa(self) -> float:
        return min(self.coupling_scale / self.sigma2, self.coupling_cap)

    @property
    def smoothing_lambda(self) -> float:
        return self.kappa / (self.kappa + self.coupling_cap)


@dataclass(frozen=True)
class RoleMixture:
    """One user-quarter's point on the role simplex."""

    user_id: str
    quarter: int
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64)
        if theta.ndim != 1:
            raise ValueError("theta must be a vector")
        if (theta < 0).any() or abs(theta.sum() - 1.0) > SIMPLEX_ATOL:
            raise ValueError(
                f"theta for {self.user_id!r} q{self.quarter} is not on the simplex")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)


@dataclass(frozen=True)
class DtmModel:
    """Fitted topics per slice plus per-slice mean mixtures."""

    beta: np.ndarray
    alpha_t: np.ndarray
    config: DtmConfig
    vocabulary: tuple[str, ...]

    def __post_init__(self):
        beta = np.array(self.beta, dtype=np.float64)
        alpha_t = np.array(self.alpha_t, dtype=np.float64)
        if beta.ndim != 3:
            raise ValueError("beta must have shape (T, K, V)")
        T, K, V = beta.shape
        if alpha_t.shape != (T, K):
            raise ValueError(f"alpha_t shape {alpha_t.shape} != ({T}, {K})")
        if len(self.vocabulary) != V:
            raise ValueError(f"vocabulary size {len(self.vocabulary)} != V={V}")
        if (beta < 0).any():
            raise ValueError("beta entries must be non-negative")
        if np.abs(beta.sum(axis=2) - 1.0).max() > SIMPLEX_ATOL:
            raise ValueError("beta rows must sum to 1")
        beta.setflags(write=False)
        alpha_t.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha_t", alpha_t)

    @property
    def n_slices(self) -> int:
        return self.beta.shape[0]

    @property
    def n_topics(self) -> int:
        return self.beta.shape[1]

    @property
    def n_terms(self) -> int:
        return self.beta.shape[2]


def _slice_token_arrays(docs: Sequence[Document]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lengths = np.asarray([d.total_tokens for d in docs], dtype=np.int64)
    doc_ids = np.repeat(np.arange(len(docs), dtype=np.int32), lengths)
    term_ids = np.concatenate([d.token_ids() for d in docs])
    return doc_ids, term_ids, lengths


def _fit_slice(docs, n_terms, alpha_vec, eta_kv, config, rng):
    """Collapsed Gibbs over one slice. Returns (beta K x V, theta D x K)."""
    doc_ids, term_ids, lengths = _slice_token_arrays(docs)
    n_tokens = term_ids.shape[0]
    K = config.K
    ndk = np.zeros((len(docs), K), dtype=np.int32)
    nkv = np.zeros((K, n_terms), dtype=np.int32)
    nk = np.zeros(K, dtype=np.int32)
    z = _gibbs.init_assignments(doc_ids, term_ids, K, ndk, nkv, nk,
                                rng.random(n_tokens))
    eta_sum = eta_kv.sum(axis=1)
    beta_acc = np.zeros((K, n_terms))
    ndk_acc = np.zeros((len(docs), K))
    n_samples = 0
    for it in range(config.gibbs_iterations):
        _gibbs.sweep(doc_ids, term_ids, z, ndk, nkv, nk,
                     alpha_vec, eta_kv, eta_sum, rng.random(n_tokens))
        if it >= config.burn_in:
            beta_acc += (nkv + eta_kv) / (nk + eta_sum)[:, None]
            ndk_acc += ndk
            n_samples += 1
    beta = beta_acc / n_samples
    beta /= beta.sum(axis=1, keepdims=True)
    theta = ndk_acc / n_samples + alpha_vec[None, :]
    theta /= theta.sum(axis=1, keepdims=True)
    return beta, theta


def fit_lda(slice_docs: Sequence[Document], config: DtmConfig,
            n_terms: int | None = None) -> tuple[np.ndarray, list[RoleMixture]]:
    """Plain LDA with symmetric priors over one set of documents."""
    docs = list(slice_docs)
    if not docs:
        raise ValueError("cannot fit on an empty document set")
    for doc in docs:
        if doc.total_tokens < 1:
            raise ValueError(f"document {doc.user_id!r} is empty")
    if n_terms is None:
        n_terms = max(max(d.term_counts) for d in docs) + 1
    K = config.K
    alpha_vec = np.full(K, config.alpha)
    eta_kv = np.full((K, n_terms), config.eta)
    rng = np.random.default_rng(config.seed)
    beta, theta = _fit_slice(docs, n_terms, alpha_vec, eta_kv, config, rng)
    mixtures = [RoleMixture(doc.user_id, doc.slice, theta[i])
                for i, doc in enumerate(docs)]
    return beta, mixtures


def fit_dtm(corpus: TimeSlicedCorpus, config: DtmConfig) -> DtmModel:
    """Fit slices in order with chained priors, then smooth backward."""
    T = corpus.n_slices
    if T == 0:
        raise ValueError("cannot fit a corpus with zero slices")
    K, V = config.K, corpus.n_terms
    beta = np.empty((T, K, V))
    alpha_t = np.empty((T, K))
    beta_prev = None
    theta_bar_prev = None
    for t, docs in enumerate(corpus.slices):
        if not docs:
            # no data, no update: carry the chain state forward
            if beta_prev is None:
                beta_slice = np.full((K, V), 1.0 / V)
                theta_bar = np.full(K, 1.0 / K)
            else:
                beta_slice = beta_prev
                theta_bar = theta_bar_prev
        else:
            if beta_prev is None:
                alpha_vec = np.full(K, config.alpha)
                eta_kv = np.full((K, V), config.eta)
            else:
                alpha_vec = (K * config.alpha) * theta_bar_prev
                eta_kv = config.eta + config.kappa * beta_prev
            rng = np.random.default_rng(config.seed + t)
            beta_slice, theta = _fit_slice(docs, V, alpha_vec, eta_kv, config, rng)
            theta_bar = theta.mean(axis=0)
        beta[t] = beta_slice
        alpha_t[t] = theta_bar
        beta_prev = beta_slice
        theta_bar_prev = theta_bar
    if T > 1:
        lam = config.smoothing_lambda
        for t in range(T - 2, -1, -1):
            if np.array_equal(beta[t], beta[t + 1]):
                continue  # exact fixed point: mixing equals would only add ulps
            mixed = (1.0 - lam) * beta[t] + lam * beta[t + 1]
            beta[t] = mixed / mixed.sum(axis=1, keepdims=True)
    return DtmModel(beta=beta, alpha_t=alpha_t, config=config,
                    vocabulary=tuple(corpus.vocabulary))


def _document_seed(config_seed: int, slice_index: int, user_id: str) -> np.random.Generator:
    # keyed per document so batch composition cannot change any result
    digest = zlib.crc32(user_id.encode("utf-8"))
    return np.random.default_rng(
        np.random.SeedSequence([config_seed, slice_index, digest]))


def infer_theta(model: DtmModel, document: Document) -> RoleMixture:
    """Fold-in sampling of one document against its slice's frozen topics.

    A zero-token document gets the symmetric prior mean (uniform).
    """
    t = document.slice
    if not 0 <= t < model.n_slices:
        raise ValueError(
            f"document slice {t} out of range for model with {model.n_slices} slices")
    K = model.n_topics
    if document.total_tokens == 0:
        return RoleMixture(document.user_id, t, np.full(K, 1.0 / K))
    if max(document.term_counts) >= model.n_terms:
        raise ValueError(
            f"document {document.user_id!r} uses term ids outside the "
            f"model vocabulary of size {model.n_terms}")
    term_ids = document.token_ids()
    alpha_vec = np.full(K, model.config.alpha)
    rng = _document_seed(model.config.seed, t, document.user_id)
    n_iter = model.config.gibbs_iterations
    burn = model.config.burn_in
    uniforms = rng.random((n_iter + 1) * term_ids.shape[0])
    nd_acc = _gibbs.fold_in(term_ids, alpha_vec, model.beta[t], n_iter, burn, uniforms)
    theta = nd_acc / (n_iter - burn) + alpha_vec
    theta /= theta.sum()
    return RoleMixture(document.user_id, t, theta)


def infer_thetas(model: DtmModel, documents: Iterable[Document]) -> list[RoleMixture]:
    return [infer_theta(model, doc) for doc in documents]


def top_terms(model: DtmModel, k: int, t: int, n: int) -> list[tuple[str, float]]:
    """The n most probable terms of topic k at slice t, ties broken by term id."""
    if not 0 <= k < model.n_topics:
        raise ValueError(f"topic {k} out of range")
    if not 0 <= t < model.n_slices:
        raise ValueError(f"slice {t} out of range")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    row = model.beta[t, k]
    order = sorted(range(model.n_terms), key=lambda v: (-row[v], v))
    return [(model.vocabulary[v], float(row[v])) for v in order[:n]]


def topic_track(model: DtmModel, k: int) -> np.ndarray:
    """T x V matrix: topic k's term distribution at each slice."""
    if not 0 <= k < model.n_topics:
        raise ValueError(f"topic {k} out of range")
    return model.beta[:, k, :].copy()


_FLOAT_FMT = "%.17g"


def save_model(model: DtmModel, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    config = {f: getattr(model.config, f) for f in DtmConfig.__dataclass_fields__}
    payload = {"config": config, "n_slices": model.n_slices}
    (directory / "config.json").write_text(json.dumps(payload, indent=2) + "\n")
    (directory / "vocab.txt").write_text("\n".join(model.vocabulary) + "\n")
    np.savetxt(directory / "alpha.csv", model.alpha_t, fmt=_FLOAT_FMT, delimiter=",")
    for t in range(model.n_slices):
        np.savetxt(directory / f"beta_{t}.csv", model.beta[t],
                   fmt=_FLOAT_FMT, delimiter=",")


def load_model(directory: str | Path) -> DtmModel:
    directory = Path(directory)
    payload = json.loads((directory / "config.json").read_text())
    config = DtmConfig(**payload["config"])
    vocabulary = tuple(line for line in (directory / "vocab.txt").read_text().splitlines()
                       if line)
    T = payload["n_slices"]
    alpha_t = np.loadtxt(directory / "alpha.csv", delimiter=",", ndmin=2)
    beta = np.stack([np.loadtxt(directory / f"beta_{t}.csv", delimiter=",", ndmin=2)
                     for t in range(T)])
    return DtmModel(beta=beta, alpha_t=alpha_t, config=config, vocabulary=vocabulary)


def write_theta_csv(mixtures: Sequence[RoleMixture], path: str | Path) -> None:
    """CSV with header ``user,quarter,theta_0..theta_{K-1}``."""
    if not mixtures:
        raise ValueError("no mixtures to write")
    K = mixtures[0].theta.shape[0]
    lines = ["user,quarter," + ",".join(f"theta_{k}" for k in range(K))]
    for m in mixtures:
        values = ",".join(_FLOAT_FMT % x for x in m.theta)
        lines.append(f"{m.user_id},{m.quarter},{values}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_theta_csv(path: str | Path) -> list[RoleMixture]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("user,quarter,"):
        raise ValueError(f"{path}: missing theta header")
    mixtures = []
    for line in lines[1:]:
        if not line:
            continue
        parts = line.split(",")
        theta = np.asarray([float(x) for x in parts[2:]])
        mixtures.append(RoleMixture(parts[0], int(parts[1]), theta))
    return mixtures


class DynamicTopicModel(BaseEstimator):
    """Estimator facade: fit a time-sliced corpus, transform documents to theta."""

    def __init__(self, n_topics=7, sigma2=0.01, alpha=None, eta=0.01,
                 gibbs_iterations=200, burn_in=100, coupling_scale=1.0,
                 coupling_cap=1000.0, seed=0):
        self.n_topics = n_topics
        self.sigma2 = sigma2
        self.alpha = alpha
        self.eta = eta
        self.gibbs_iterations = gibbs_iterations
        self.burn_in = burn_in
        self.coupling_scale = coupling_scale
        self.coupling_cap = coupling_cap
        self.seed = seed

    def _config(self) -> DtmConfig:
        return DtmConfig(K=self.n_topics, sigma2=self.sigma2, alpha=self.alpha,
                         eta=self.eta, gibbs_iterations=self.gibbs_iterations,
                         burn_in=self.burn_in, coupling_scale=self.coupling_scale,
                         coupling_cap=self.coupling_cap, seed=self.seed)

    def fit(self, corpus: TimeSlicedCorpus, y=None):
        self.model_ = fit_dtm(corpus, self._config())
        return self

    def transform(self, documents: Iterable[Document]) -> np.ndarray:
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted")
        mixtures = infer_thetas(self.model_, documents)
        return np.stack([m.theta for m in mixtures]) if mixtures else \
            np.empty((0, self.model_.n_topics))

    def fit_transform(self, corpus: TimeSlicedCorpus, y=None) -> np.ndarray:
        self.fit(corpus)
        docs = [d for docs in corpus.slices for d in docs]
        return self.transform(docs)
