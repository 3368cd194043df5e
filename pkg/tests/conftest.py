import os
from pathlib import Path

import numpy as np
import pytest

from uctecg.data import MITBIH, PTB, RecordSet
from uctecg.synthetic import make_beats

TESTS_DIR = Path(__file__).parent
PUBLISHED_COUNTS = TESTS_DIR / "data" / "published_uq_counts.csv"


def corpus_dir():
    """Directory with mitbih_train.csv, mitbih_test.csv, ptbdb_normal.csv, ptbdb_abnormal.csv."""
    env = os.environ.get("UCTECG_DATA_DIR")
    return Path(env) if env else None


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ptb_like():
    return make_beats(240, PTB, seed=3)


@pytest.fixture(scope="session")
def mitbih_like():
    return make_beats(200, MITBIH, seed=4)


def random_records(n, meta=PTB, seed=0):
    g = np.random.default_rng(seed)
    return RecordSet(g.standard_normal((n, 187)), g.integers(0, meta.num_classes, n), meta)


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.RESULTS):
        terminalreporter.write_line(module.RESULTS[number])
