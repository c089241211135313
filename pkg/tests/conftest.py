import numpy as np
import pytest

from hcast import synthetic
from hcast.decompose import FeatureLayout, fit_layout


def central_diff(f, params: dict, name: str, eps=1e-6) -> np.ndarray:
    """Central finite differences of scalar ``f(params)`` w.r.t. ``params[name]``."""
    base = params[name]
    out = np.zeros_like(base)
    for i in np.ndindex(base.shape):
        old = base[i]
        base[i] = old + eps
        a = f(params)
        base[i] = old - eps
        b = f(params)
        base[i] = old
        out[i] = (a - b) / (2 * eps)
    return out


def rel_err(analytic, numeric, floor=1e-6) -> float:
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    scale = max(np.max(np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def univariate_layout(kernel=25, temporal=False):
    return FeatureLayout("date", ("value",), ("value",), (), temporal, kernel)


@pytest.fixture
def mixed():
    return synthetic.mixed_table(400)


@pytest.fixture
def mixed_layout(mixed):
    return fit_layout(mixed, targets=("a",), kernel=5)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS, key=lambda k: int(k[1:])):
        terminalreporter.write_line(RESULTS[key])
