import numpy as np
import pytest
from hypothesis import settings

from spikelda.dataio import LabeledDataset

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# criterion number -> (passed, detail); passed is None for a skip. Filled by test_acceptance.py
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[key]
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        terminalreporter.write_line(f"criterion {key}: {status}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def gaussian_two_class(rng, n1, n2, mu2, cov_root=None):
    """Two Gaussian classes, means 0 and mu2, shared covariance root."""
    mu2 = np.asarray(mu2, dtype=float)
    p = mu2.size
    F = np.eye(p) if cov_root is None else cov_root
    X1 = rng.standard_normal((n1, p)) @ F.T
    X2 = rng.standard_normal((n2, p)) @ F.T + mu2
    return LabeledDataset.from_classes(X1, X2)
