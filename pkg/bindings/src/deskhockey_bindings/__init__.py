"""Flat, handle-based boundary over the deskhockey environment.

External RL training loops drive the simulation through five functions:
`create`, `close`, `reset`, `step`, and `spec`, holding only an integer
handle between calls. The surface mirrors a foreign-function interface: all
inputs are validated at the boundary, every failure is a structured
`BindingError` (never an internal crash leaking through), and all returned
values are plain Python/JSON-friendly types. Streams are bit-identical to
driving the underlying environment directly with the same seed and options.

The ABI string of the core is checked once at import; a mismatch raises
`AbiMismatchError` immediately rather than failing later in subtle ways.
"""

from .core import (
    ABI_VERSION,
    AbiMismatchError,
    BindingError,
    ClosedHandleError,
    InvalidActionError,
    UnknownOptionError,
    abi_version,
    close,
    create,
    reset,
    spec,
    step,
)

__all__ = [
    "ABI_VERSION",
    "AbiMismatchError",
    "BindingError",
    "ClosedHandleError",
    "InvalidActionError",
    "UnknownOptionError",
    "abi_version",
    "close",
    "create",
    "reset",
    "spec",
    "step",
]

__version__ = "0.1.0"
