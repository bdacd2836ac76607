import numpy as np
import pytest

from palmtex.bsif_learn import learn_filter_bank
from palmtex.imagecore import GrayImage
from palmtex.synthgen import SynthConfig, iter_samples

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, text = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria[number] = (text, report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        text, outcome = _criteria[number]
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {text}")


def gray(arr) -> GrayImage:
    return GrayImage(np.asarray(arr))


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture(scope="session")
def learned_bank():
    """8 x 17x17 bank learned from a small synthetic corpus."""
    corpus = [img for *_, img in iter_samples(SynthConfig(subjects=4, samples_per_subject=3, seed=999))]
    bank, result = learn_filter_bank(corpus, k=8, side=17, seed=1)
    assert result.converged
    return bank
