"""Computability-loophole simulator: a monotone counter-machine VM, the
dovetailing distinguisher of computable and random sequences, a simulated
mixing box, a next-value learner and a CHSH attack built on it."""

from .machine import VM_VERSION

__version__ = "0.1.0"
__all__ = ["VM_VERSION", "__version__"]
