"""causalcast: forecast-then-classify pipeline for multichannel time series.

An LSTM encoder-decoder forecasts per-channel signals one lag ahead, an
attentional pooling head classifies subjects, and a predictability score
(1 - MSE/Var per channel) ranks channels by how well the shared dynamics
predict them.  Includes linear VAR and connectome-style correlation
baselines, a synthetic generator with planted causal structure, and a
stratified cross-validation harness.
"""

from .data import Dataset, LagPair, RoiTimeSeries
from .errors import (
    CausalcastError,
    ConfigError,
    DataError,
    FormatError,
    ShapeError,
    StationarityError,
    TrainingError,
)
from .model import ForecastResult, ModelConfig, NetworkParams
from .synth import SynthSpec, VarModel
from .trainer import TrainConfig

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "LagPair",
    "RoiTimeSeries",
    "ForecastResult",
    "ModelConfig",
    "NetworkParams",
    "SynthSpec",
    "VarModel",
    "TrainConfig",
    "CausalcastError",
    "ConfigError",
    "DataError",
    "FormatError",
    "ShapeError",
    "StationarityError",
    "TrainingError",
    "__version__",
]
