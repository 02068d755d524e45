import sys

import numpy as np
import pytest

from coc.models import Dataset
from coc.summaries import CentreSummary


def random_spd(rng, p, scale=1.0):
    a = rng.standard_normal((p, p))
    return scale * (a @ a.T / p + 0.5 * np.eye(p))


def make_summary(cid, theta, V=None, Q=None, n=100):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    p = theta.shape[0]
    V = np.eye(p) if V is None else np.atleast_2d(V)
    Q = np.eye(p) if Q is None else np.atleast_2d(Q)
    return CentreSummary(str(cid), n, theta, V, Q)


def logistic_data(rng, n, beta):
    beta = np.asarray(beta, dtype=float)
    X = np.column_stack([np.ones(n), rng.standard_normal((n, beta.shape[0] - 1))])
    y = (rng.random(n) < 1 / (1 + np.exp(-X @ beta))).astype(float)
    return Dataset(X, y)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)



def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        ok, detail = results[num]
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
