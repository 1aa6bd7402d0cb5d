import pytest

from dpmvp import _kernels

BACKENDS = ["numpy"] + (["numba"] if _kernels.HAS_NUMBA else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    prev = _kernels.backend()
    _kernels.set_backend(request.param)
    yield request.param
    _kernels.set_backend(prev)
