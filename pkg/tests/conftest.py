import numpy as np
import pytest

from xadv.augment import bundled_word_set
from xadv.models.toy import build_toy_stack, concept_patches, fixture_images


@pytest.fixture(scope="session")
def stack():
    return build_toy_stack(0)


@pytest.fixture(scope="session")
def fixtures():
    return fixture_images(12)


@pytest.fixture(scope="session")
def nouns():
    return bundled_word_set("nouns")


@pytest.fixture(scope="session")
def patches():
    return concept_patches()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.lines():
            terminalreporter.write_line(line)
