import numpy as np
import pytest

from polyrmdp.benchgen import tiny_corpus
from polyrmdp.model import Rmdp

CORPUS_SIZE = 200


def dirac(n, i):
    e = np.zeros(n)
    e[i] = 1.0
    return e


def make_m1():
    return Rmdp(1, 1, [[[[1.0]]]], [[5.0]])


def make_m2():
    # s1's second vertex (0.6, 0.4) is our own choice; Min ignores it and the value stays 0.375
    return Rmdp(2, 1, [[[[0.9, 0.1], [0.5, 0.5]]], [[[0.3, 0.7], [0.6, 0.4]]]], [[1.0], [0.0]])


def make_chooser():
    """s0 picks an arm; s1 loops with reward 3, s2 with reward 1."""
    polys = [
        [[dirac(3, 1)], [dirac(3, 2)]],
        [[dirac(3, 1)], [dirac(3, 1)]],
        [[dirac(3, 2)], [dirac(3, 2)]],
    ]
    return Rmdp(3, 2, polys, [[0.0, 0.0], [3.0, 3.0], [1.0, 1.0]])


@pytest.fixture
def m1():
    return make_m1()


@pytest.fixture
def m2():
    return make_m2()


@pytest.fixture
def chooser():
    return make_chooser()


@pytest.fixture(scope="session")
def corpus():
    return tiny_corpus(CORPUS_SIZE, seed=0)


ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
