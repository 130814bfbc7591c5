from pathlib import Path

import numpy as np
import pytest

from fairlayers.dataset import Column, Dataset, ProtectedAttribute, Schema

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

GP = ProtectedAttribute("G", {"P"}, {"Q"})


def toy_schema(extra=()):
    cols = [Column("G", "categorical"), *extra, Column("y", "binary-label")]
    return Schema(tuple(cols), "y", "1")


def toy(groups, labels, weights=None, **extra):
    """Dataset over a protected column G plus optional extra columns."""
    extra_cols = tuple(Column(k, "numeric" if isinstance(v[0], (int, float)) else "categorical") for k, v in extra.items())
    cols = {"G": tuple(groups), **{k: tuple(v) for k, v in extra.items()}}
    return Dataset(toy_schema(extra_cols), cols, np.asarray(labels), weights)


T10_GROUPS = ["P"] * 6 + ["Q"] * 4
T10_LABELS = [1, 1, 1, 1, 0, 0, 1, 0, 0, 0]

C8_GROUPS = ["P"] * 4 + ["Q"] * 4
C8_TRUTH = [1, 1, 0, 0, 1, 1, 0, 0]
C8_PRED = [1, 0, 0, 0, 1, 1, 1, 0]


@pytest.fixture
def t10():
    return toy(T10_GROUPS, T10_LABELS)


@pytest.fixture
def c8():
    return toy(C8_GROUPS, C8_TRUTH)


@pytest.fixture
def german_schema():
    return Schema.from_json(FIXTURES / "german" / "schema.json")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[1][1:])):
            terminalreporter.write_line(line)
