"""HD-sEMG to fingertip-force decoding via motor-unit decomposition.

Synthetic EMG generation, FastICA decomposition into motor-unit spike
trains, neural-drive features and two causal decoders (a dilated TCN and a
leaky integrate-and-fire spiking network) trained with a small reverse-mode
autodiff engine.
"""

from .config import PipelineConfig, load_config, save_config
from .dsp import MultiChannelSignal, NormStats, Units, WindowedDataset
from .errors import ConfigError, DataError, MudecError, NumericalError

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "MudecError",
    "MultiChannelSignal",
    "NormStats",
    "NumericalError",
    "PipelineConfig",
    "Units",
    "WindowedDataset",
    "load_config",
    "save_config",
]
