import numpy as np
import pytest

from emitterlab import tls


@pytest.fixture
def emitter_params():
    return tls.TlsParams(t1=1.85, t2=1.62)


@pytest.fixture
def radiative_params():
    return tls.TlsParams(t1=1.85, t2=3.7)


@pytest.fixture
def decay_liouvillian():
    """Undriven two-level decay generator with T1 = 1.85 ns."""
    from emitterlab import qdyn

    jump = np.sqrt(1.0 / 1.85) * tls.SIGMA_MINUS
    return qdyn.build_liouvillian(np.zeros((2, 2)), [jump])
