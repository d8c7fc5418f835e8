import pytest

from rankrobust import _pykernels
from rankrobust.corpus import gen_synthetic

try:
    from rankrobust import _kernels
except ImportError:  # extension not built
    _kernels = None

KERNELS = [pytest.param(_pykernels, id="python")]
if _kernels is not None:
    KERNELS.append(pytest.param(_kernels, id="cython"))


@pytest.fixture(params=KERNELS)
def kernel(request):
    return request.param


@pytest.fixture(scope="session")
def small_synthetic():
    return gen_synthetic(n_users=120, n_items=160, seq_len_range=(15, 30), n_phases=4, drift=0.2, seed=3)


_acceptance = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        outcome = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
        _acceptance[name] = outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance, key=lambda s: int(s.split("_")[1]) if s.split("_")[1].isdigit() else 99):
        terminalreporter.write_line(f"{_acceptance[name]:4}  {name}")
