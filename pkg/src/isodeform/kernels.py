"""Element kernel dispatch between the numba and numpy implementations.

Both backends share signatures; ``ISODEFORM_NUMBA=0`` selects numpy.
"""
from . import _kernels_numpy as numpy_impl
from ._accel import HAVE_NUMBA, USE_NUMBA

if HAVE_NUMBA:
    from . import _kernels_numba as numba_impl
else:  # pragma: no cover
    numba_impl = None

_impl = numba_impl if USE_NUMBA else numpy_impl
BACKEND = "numba" if USE_NUMBA else "numpy"

jacobian_dets = _impl.jacobian_dets
neohooke = _impl.neohooke
linear = _impl.linear
mass = _impl.mass
