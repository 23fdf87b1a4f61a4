import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

from gpdphs.grid import make_grid  # noqa: E402
from gpdphs.model import DphsHyper, fit_model  # noqa: E402
from gpdphs.operators import string_structure  # noqa: E402
from gpdphs.pipeline import DerivativeDataset  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def toy_dataset(N=5, M=4, seed=0, r=0.05, noise=1e-3):
    """Snapshots of a linear string (``H = sum h_i (p^2 + q^2)/2``) on a tiny grid."""
    g = make_grid(1.0, N)
    s = string_structure(g)
    rs = np.random.default_rng(seed)
    X = rs.normal(size=(M, 2 * N))
    X[:, 0] = X[:, N - 1] = 0.0
    A = s.flow_map([r])
    grad = X * np.tile(g.weights, 2)
    Xd = grad @ A.T + noise * rs.normal(size=X.shape)
    return DerivativeDataset(g, np.arange(M, dtype=float), X, Xd), s


@pytest.fixture(scope="session")
def toy_model():
    ds, s = toy_dataset()
    hyper = DphsHyper([0.05], 1.5, 0.5, 1e-3)
    return fit_model(ds, s, hyper)


# acceptance criteria report: one line per criterion, printed at the end
ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_report(request):
    return request.config.stash.setdefault(ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(lines):
        terminalreporter.write_line(lines[k])
