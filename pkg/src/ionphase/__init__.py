"""Cubic and quartic phase gates for a trapped-ion motional mode, built from
multi-sideband two-tone drives beyond the Lamb-Dicke regime."""

from .fock import HilbertConfig, JointState, TruncationError, coherent_state, thermal_state
from .metrics import fidelity, negativity_volume, wigner
from .noise import NoiseModel, noisy_evolution
from .protocol import (ProtocolSpec, TargetGate, apply_protocol, build_cubic_protocol,
                       build_quartic_protocol, run_oscillator, table1_protocol)
from .sideband import HamiltonianMode, SystemParams, TwoToneDrive

__version__ = "0.1.0"

__all__ = [
    "HilbertConfig", "JointState", "TruncationError", "coherent_state", "thermal_state",
    "fidelity", "negativity_volume", "wigner", "NoiseModel", "noisy_evolution",
    "ProtocolSpec", "TargetGate", "apply_protocol", "build_cubic_protocol",
    "build_quartic_protocol", "run_oscillator", "table1_protocol",
    "HamiltonianMode", "SystemParams", "TwoToneDrive", "__version__",
]
