import numpy as np
import pytest

from retina_gi.core import Roi, write_pgm
from retina_gi.corpus import make_test_object, write_corpus

# one line per acceptance criterion, filled in by test_acceptance.py
VERDICTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[k])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus_small")
    write_corpus(d, 60, size=32)
    return d


@pytest.fixture(scope="session")
def tiny_object(tmp_path_factory):
    """32x32 held-out scene with its centred 16x16 ROI."""
    d = tmp_path_factory.mktemp("obj")
    roi = Roi.centered((32, 32), (16, 16))
    p = d / "obj.pgm"
    write_pgm(p, make_test_object("shapes", (32, 32), roi, seed=0))
    return p, roi
