"""Exception hierarchy shared by all modules.

The CLI maps :class:`InputError` to exit code 2 and :class:`NumericalError`
to exit code 3.
"""


class BomError(Exception):
    """Base class for errors raised by this package."""


class InputError(BomError, ValueError):
    """Malformed or unsupported input data."""


class NumericalError(BomError, RuntimeError):
    """A numerical routine failed or broke one of its contracts."""


class LpError(NumericalError):
    pass


class DecompositionError(NumericalError):
    pass


class SamplingError(NumericalError):
    pass
