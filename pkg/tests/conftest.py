import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

# Single-threaded: these models are far too small to amortize thread wakeups,
# and one thread keeps results reproducible across machines.
torch.set_num_threads(1)

from helpers import ACCEPTANCE_LINES, build_corpus, default_texts  # noqa: E402


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance protocol")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def corpus_root(tmp_path_factory):
    return tmp_path_factory.mktemp("corpus")


@pytest.fixture(scope="session")
def corpus_a(corpus_root):
    """8 utterances of the 110 Hz voice, ~0.5 s each. Pretraining pool."""
    return build_corpus(corpus_root / "a", 0, default_texts(8))


@pytest.fixture(scope="session")
def corpus_b(corpus_root):
    """2 utterances of the 220 Hz voice: the cloning target."""
    return build_corpus(corpus_root / "b", 1, default_texts(2, offset=3))


@pytest.fixture(scope="session")
def corpus_c(corpus_root):
    """2 utterances of a third voice, for impostor pools."""
    return build_corpus(corpus_root / "c", 2, default_texts(2, offset=7))


@pytest.fixture(scope="session")
def short_corpus_a(corpus_root):
    """Very short clips (~0.12 s) of voice 0: schedule-length test fuel."""
    texts = ["abcd", "bcde", "cdef"]
    return build_corpus(
        corpus_root / "short_a", 0, texts, char_sec=0.03, gap_sec=0.015, name="shorta"
    )


@pytest.fixture(scope="session")
def short_corpus_b(corpus_root):
    texts = ["fedb", "bade"]
    return build_corpus(
        corpus_root / "short_b", 1, texts, char_sec=0.03, gap_sec=0.015, name="shortb"
    )
