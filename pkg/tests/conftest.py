import numpy as np
import pytest

from binfer._kernels import available_backends, get_backend


@pytest.fixture(params=available_backends())
def backend(request):
    """Run kernel-level tests against every built backend."""
    return get_backend(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
