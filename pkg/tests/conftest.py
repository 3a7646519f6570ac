from __future__ import annotations

import csv
from pathlib import Path

import mpmath
import pytest

from critpoly.transfer import Precision

DATA = Path(__file__).parent / "data"

# exact thresholds
P_SQUARE = mpmath.mpf("0.5")
with mpmath.workdps(80):
    P_TRIANGULAR = 2 * mpmath.sin(mpmath.pi / 18)
    P_HEXAGONAL = 1 - P_TRIANGULAR


def kagome_rows() -> dict[int, str]:
    with open(DATA / "kagome_table2.csv", newline="") as fh:
        return {int(r["n"]): r["p_c"] for r in csv.DictReader(fh)}


@pytest.fixture(scope="session")
def kagome_table():
    return kagome_rows()


@pytest.fixture
def prec30():
    return Precision(30, mpmath.mpf("1e-20"))


def agree_digits(a: str, b: str) -> int:
    """Number of matching decimal places of two strings '0.xxxx'."""
    a, b = a.split(".")[1], b.split(".")[1]
    k = 0
    while k < min(len(a), len(b)) and a[k] == b[k]:
        k += 1
    return k
