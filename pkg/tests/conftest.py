"""Shared fixtures: one small fitted topic model reused across test modules."""

import re

import numpy as np
import pytest

from rolespace.corpus import Document, TimeSlicedCorpus
from rolespace.dtm import DtmConfig, fit_dtm

_ACCEPTANCE_OUTCOMES: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        _ACCEPTANCE_OUTCOMES[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion, derived from test names."""
    if not _ACCEPTANCE_OUTCOMES:
        return
    terminalreporter.section("acceptance checklist")
    for nodeid in sorted(_ACCEPTANCE_OUTCOMES):
        match = re.search(r"test_criterion_(\d+)_(\w+)", nodeid)
        if not match:
            continue
        number = int(match.group(1))
        label = match.group(2).replace("_", " ")
        outcome = _ACCEPTANCE_OUTCOMES[nodeid]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {verdict}  {label}")


def make_corpus(rng, n_slices=3, docs_per_slice=30, vocab_size=8,
                topics=None, doc_len=60):
    """Corpus drawn from fixed planted topics, identical generator per slice."""
    if topics is None:
        half = vocab_size // 2
        topics = np.zeros((2, vocab_size))
        topics[0, :half] = 1.0 / half
        topics[1, half:] = 1.0 / (vocab_size - half)
    vocabulary = tuple(f"term{v}" for v in range(vocab_size))
    slices = []
    for t in range(n_slices):
        docs = []
        for d in range(docs_per_slice):
            k = d % len(topics)
            draws = rng.choice(vocab_size, size=doc_len, p=topics[k])
            ids, counts = np.unique(draws, return_counts=True)
            docs.append(Document(f"u{d:03d}", t,
                                 {int(i): int(c) for i, c in zip(ids, counts)}))
        slices.append(docs)
    return TimeSlicedCorpus(vocabulary, slices)


@pytest.fixture(scope="session")
def planted_corpus():
    return make_corpus(np.random.default_rng(7))


@pytest.fixture(scope="session")
def fitted_dtm(planted_corpus):
    config = DtmConfig(K=2, alpha=0.5, gibbs_iterations=60, burn_in=30, seed=3)
    return fit_dtm(planted_corpus, config)
