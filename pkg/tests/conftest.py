import numpy as np
import pytest

from rrmar.model import RRMARModel
from rrmar.tucker import leading_left_singular_vectors


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_model(rng, dims, ranks, p=1, scale=0.3):
    """Tucker model with orthonormal factors and a small random core."""
    factors = tuple(
        leading_left_singular_vectors(rng.standard_normal((n, r)), r)
        for n, r in zip(dims + dims, ranks)
    )
    core = scale * rng.standard_normal(tuple(ranks) + (p,))
    return RRMARModel(factors, core)


_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        _ACCEPTANCE[report.nodeid.split("::")[-1]] = (report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        outcome, detail = _ACCEPTANCE[name]
        number = int(name.split("_")[2])
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {status}  {name[len('test_criterion_00_'):]}: {detail}")
