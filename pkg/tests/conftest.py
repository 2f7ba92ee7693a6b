from pathlib import Path

import pytest

from deptweets.corpus import generate_synthetic_corpus, generate_synthetic_tweets, uniform_spec, stratified_split
from deptweets.labels import DepressionClass
from deptweets.lexicon import load_lexicons

FIXTURES = Path(__file__).parent / "fixtures"
GLOVE_FIXTURE = FIXTURES / "glove_tiny.100d.txt"


@pytest.fixture(scope="session")
def lexicon():
    return load_lexicons()


@pytest.fixture(scope="session")
def synthetic_tweets(lexicon):
    return generate_synthetic_tweets(uniform_spec(300), lexicon, seed=0)


@pytest.fixture(scope="session")
def synthetic_corpus(lexicon):
    return generate_synthetic_corpus(uniform_spec(300), lexicon, seed=0)


@pytest.fixture(scope="session")
def synthetic_split(synthetic_corpus):
    return stratified_split(synthetic_corpus, (0.7, 0.15, 0.15), seed=0)


@pytest.fixture(scope="session")
def small_corpus(lexicon):
    """20 examples per class: enough to train every kind in a couple of seconds."""
    return generate_synthetic_corpus({c: 20 for c in DepressionClass}, lexicon, seed=3)


# ---- acceptance summary --------------------------------------------------

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash[_ACCEPTANCE_KEY]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
