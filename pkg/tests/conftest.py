import sys

import numpy as np
import pytest

from lyaprod import kernels
from lyaprod.chain import ChainConfig
from lyaprod.ensembles import EnsembleSpec

BACKENDS = kernels.available()


def fixed(matrix, N, **kw):
    m = np.asarray(matrix, dtype=float)
    spec = EnsembleSpec("fixed", m.shape[0], model_params={"matrix": m.tolist()})
    return ChainConfig(spec, N, **kw)


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
