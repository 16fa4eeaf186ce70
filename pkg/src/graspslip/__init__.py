"""Grasp-slip prediction from force/pressure time series.

Causal short-time Fourier features feed an LSTM classifier implemented in
plain numpy; the package also ships classical baselines, a synthetic trace
generator, evaluation metrics, and a streaming inference simulator.
"""

from graspslip.signal import (
    SensorTrace,
    Spectrogram,
    NormStats,
    frame_difference,
    stft_window,
    sliding_stft,
    normalize,
    downsample,
)
from graspslip.models import (
    ModelVariant,
    TrainConfig,
    GraspModel,
    get_variant,
    build_model,
    train,
    save_checkpoint,
    load_checkpoint,
)

__version__ = "0.1.0"

__all__ = [
    "SensorTrace",
    "Spectrogram",
    "NormStats",
    "frame_difference",
    "stft_window",
    "sliding_stft",
    "normalize",
    "downsample",
    "ModelVariant",
    "TrainConfig",
    "GraspModel",
    "get_variant",
    "build_model",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "__version__",
]
