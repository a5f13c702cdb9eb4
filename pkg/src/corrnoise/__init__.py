"""corrnoise: detecting spatially correlated noise in qubit registers.

Simulates TCL2 dynamics under correlated relaxation and dephasing, the
radiated-intensity decomposition that reveals correlated decay, and the
parity-oscillation / MQC protocols that reveal correlated dephasing, using
only single-qubit operations.  See README for conventions (hbar = wbar = 1,
Z|1> = +|1>).
"""

__version__ = "0.1.0"

from .config import ExperimentConfig, load_config, parse_config, preset_names
from .dynamics import GeneratorContext, Trajectory, evolve
from .hilbert import RegisterConfig, initial_state, pauli, ladder
from .spectra import (CorrelationMatrix, NoiseChannel, RateTable,
                      SpectrumModel, build_rate_table, filter_function)

__all__ = [
    "__version__",
    "ExperimentConfig", "load_config", "parse_config", "preset_names",
    "GeneratorContext", "Trajectory", "evolve",
    "RegisterConfig", "initial_state", "pauli", "ladder",
    "CorrelationMatrix", "NoiseChannel", "RateTable", "SpectrumModel",
    "build_rate_table", "filter_function",
]
