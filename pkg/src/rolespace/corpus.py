"""Time-sliced bag-of-words corpus built from quarterly activity records.

Each activity record becomes one document: the user's edits in one quarter,
with namespaces as terms and edit counts as term counts. Documents are grouped
into slices by quarter index.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from .ingest import ActivityRecord


@dataclass(frozen=True)
class Document:
    """Bag of namespace terms for one user in one quarter (sparse counts).

    Corpus documents always hold at least one token; zero-count documents are
    legal only as inference queries, never inside a corpus.
    """

    user_id: str
    slice: int
    term_counts: Mapping[int, int]

    def __post_init__(self):
        if self.slice < 0:
            raise ValueError(f"document {self.user_id!r} has negative slice {self.slice}")
        for term_id, count in self.term_counts.items():
            if term_id < 0:
                raise ValueError(f"document {self.user_id!r} has negative term id {term_id}")
            if count <= 0:
                raise ValueError(
                    f"document {self.user_id!r} holds non-positive count {count} "
                    f"for term {term_id}; omit absent terms instead")
        object.__setattr__(self, "term_counts",
                           MappingProxyType(dict(self.term_counts)))

    @property
    def total_tokens(self) -> int:
        return sum(self.term_counts.values())

    def token_ids(self) -> np.ndarray:
        """Expand counts into a flat term-id array (ascending term order, int32)."""
        terms = sorted(self.term_counts)
        return np.repeat(np.asarray(terms, dtype=np.int32),
                         np.asarray([self.term_counts[t] for t in terms], dtype=np.int64))

    def count_vector(self, n_terms: int) -> np.ndarray:
        dense = np.zeros(n_terms, dtype=np.int64)
        for term_id, count in self.term_counts.items():
            dense[term_id] = count
        return dense


@dataclass(frozen=True)
class TimeSlicedCorpus:
    """Documents grouped by quarter; slice t holds exactly quarter t's documents."""

    vocabulary: tuple[str, ...]
    slices: tuple[tuple[Document, ...], ...]

    def __post_init__(self):
        V = len(self.vocabulary)
        if V == 0:
            raise ValueError("vocabulary is empty")
        if len(set(self.vocabulary)) != V:
            raise ValueError("vocabulary names must be unique")
        for t, docs in enumerate(self.slices):
            for doc in docs:
                if doc.slice != t:
                    raise ValueError(
                        f"document {doc.user_id!r} labeled slice {doc.slice} "
                        f"stored in slice {t}")
                if doc.total_tokens < 1:
                    raise ValueError(f"document {doc.user_id!r} in slice {t} is empty")
                if any(term_id >= V for term_id in doc.term_counts):
                    raise ValueError(
                        f"document {doc.user_id!r} in slice {t} uses term ids "
                        f"outside vocabulary of size {V}")

    @property
    def n_slices(self) -> int:
        return len(self.slices)

    @property
    def n_terms(self) -> int:
        return len(self.vocabulary)

    @property
    def n_documents(self) -> int:
        return sum(len(docs) for docs in self.slices)

    @property
    def n_tokens(self) -> int:
        return sum(d.total_tokens for docs in self.slices for d in docs)

    def doc_keys(self) -> list[tuple[str, int]]:
        """(user_id, slice) pairs in corpus order."""
        return [(d.user_id, t) for t, docs in enumerate(self.slices) for d in docs]


@dataclass(frozen=True)
class CorpusStats:
    n_slices: int
    n_terms: int
    n_documents: int
    n_users: int
    n_tokens: int
    documents_per_slice: tuple[int, ...] = field(default=())
    tokens_per_slice: tuple[int, ...] = field(default=())


def record_to_document(record: ActivityRecord) -> Document:
    return Document(
        user_id=record.user_id,
        slice=record.quarter,
        term_counts={i: c for i, c in enumerate(record.counts) if c > 0},
    )


def build_corpus(
    records: Iterable[ActivityRecord],
    vocabulary: tuple[str, ...] | list[str],
) -> TimeSlicedCorpus:
    """Group records by quarter into a sliced corpus, one document per record.

    Slices run from quarter 0 through the highest active quarter; quarters
    without records become empty slices. No records at all yields a corpus
    with zero slices.
    """
    vocabulary = tuple(vocabulary)
    V = len(vocabulary)
    records = list(records)
    for record in records:
        if len(record.counts) > V and any(c > 0 for c in record.counts[V:]):
            raise ValueError(
                f"record for {record.user_id!r} q{record.quarter} uses namespace ids "
                f"outside vocabulary of size {V}")
        if len(record.counts) < V:
            raise ValueError(
                f"record for {record.user_id!r} q{record.quarter} has "
                f"{len(record.counts)} counts, vocabulary has {V}")
    n_slices = max((r.quarter for r in records), default=-1) + 1
    buckets: list[list[Document]] = [[] for _ in range(n_slices)]
    for record in records:
        buckets[record.quarter].append(record_to_document(record))
    slices = tuple(tuple(sorted(docs, key=lambda d: d.user_id)) for docs in buckets)
    corpus = TimeSlicedCorpus(vocabulary, slices)
    assert corpus.n_documents == len(records)
    return corpus


def corpus_stats(corpus: TimeSlicedCorpus) -> CorpusStats:
    docs_per = tuple(len(docs) for docs in corpus.slices)
    tokens_per = tuple(sum(d.total_tokens for d in docs) for docs in corpus.slices)
    users = {d.user_id for docs in corpus.slices for d in docs}
    return CorpusStats(
        n_slices=corpus.n_slices,
        n_terms=corpus.n_terms,
        n_documents=sum(docs_per),
        n_users=len(users),
        n_tokens=sum(tokens_per),
        documents_per_slice=docs_per,
        tokens_per_slice=tokens_per,
    )


def save_corpus(corpus: TimeSlicedCorpus, directory: str | Path) -> None:
    """Write ``vocab.txt`` plus one long-format ``slice_<t>.csv`` per slice."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "vocab.txt").write_text("\n".join(corpus.vocabulary) + "\n")
    for t, docs in enumerate(corpus.slices):
        with open(directory / f"slice_{t}.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["user", "term_id", "count"])
            for doc in docs:
                for term_id in sorted(doc.term_counts):
                    writer.writerow([doc.user_id, term_id, doc.term_counts[term_id]])


def load_corpus(directory: str | Path) -> TimeSlicedCorpus:
    directory = Path(directory)
    vocab_path = directory / "vocab.txt"
    if not vocab_path.exists():
        raise FileNotFoundError(f"{vocab_path} not found")
    vocabulary = tuple(line for line in vocab_path.read_text().splitlines() if line)
    slice_paths = sorted(directory.glob("slice_*.csv"),
                         key=lambda p: int(p.stem.split("_")[1]))
    indices = [int(p.stem.split("_")[1]) for p in slice_paths]
    if indices != list(range(len(indices))):
        raise ValueError(f"{directory}: slice files must be contiguous from 0, got {indices}")
    slices = []
    for t, path in zip(indices, slice_paths):
        counts_by_user: dict[str, dict[int, int]] = {}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["user", "term_id", "count"]:
                raise ValueError(f"{path}: missing slice header")
            for row in reader:
                if not row:
                    continue
                counts_by_user.setdefault(row[0], {})[int(row[1])] = int(row[2])
        docs = tuple(Document(user_id, t, counts)
                     for user_id, counts in sorted(counts_by_user.items()))
        slices.append(docs)
    return TimeSlicedCorpus(vocabulary, tuple(slices))
