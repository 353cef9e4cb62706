"""Simulator for blind delegated quantum computation protocols."""

from .angle import Angle
from .mbqc import Circuit, compile, classical_pattern, oracle_distribution
from .proto import PROTOCOLS, Options, ProtocolAbort, RunReport, TripleConfig, run_protocol

__version__ = "0.1.0"

__all__ = [
    "Angle",
    "Circuit",
    "compile",
    "classical_pattern",
    "oracle_distribution",
    "PROTOCOLS",
    "Options",
    "ProtocolAbort",
    "RunReport",
    "TripleConfig",
    "run_protocol",
]
