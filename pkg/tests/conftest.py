import numpy as np
import pytest

from bgan.text import Sentence, pad_batch
from bgan.translation import TranslationUnit

V = 12


@pytest.fixture
def tiny_tu():
    """d=8, one layer, double precision: sized for finite-difference checks."""
    return TranslationUnit(V, d=8, n_layers=1, heads=2, max_len=6, seed=0, dtype=np.float64)


@pytest.fixture
def small_tu():
    return TranslationUnit(V, d=16, n_layers=1, heads=2, max_len=8, seed=1, dtype=np.float64)


@pytest.fixture
def batch():
    rows = [[5, 6, 7], [8, 4, 9, 10, 11], [4, 4]]
    return pad_batch([Sentence.frame(r, 1) for r in rows])


# -- acceptance summary: one PASS/FAIL line per criterion -------------------------------------
_criteria: dict[str, dict] = {}


def _criterion(nodeid: str) -> str | None:
    if "test_acceptance.py::test_c" not in nodeid:
        return None
    name = nodeid.split("::")[-1]
    return "C" + name[len("test_c"):].split("_")[0]


def pytest_runtest_logreport(report):
    key = _criterion(report.nodeid)
    if key is None:
        return
    entry = _criteria.setdefault(key, {"ok": True, "detail": ""})
    if report.failed:
        entry["ok"] = False
    if report.when == "call":
        entry["ok"] = entry["ok"] and report.passed
        entry["detail"] = "; ".join(f"{k}={v}" for k, v in report.user_properties)
    elif report.skipped:
        entry["ok"] = False
        entry["detail"] = "skipped"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_criteria, key=lambda k: int(k[1:])):
        e = _criteria[key]
        terminalreporter.write_line(f"{key:<4} {'PASS' if e['ok'] else 'FAIL'}  {e['detail']}")
