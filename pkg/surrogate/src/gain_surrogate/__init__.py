"""gain_surrogate: a small fully-convolutional surrogate for exact
visibility-gain fields, trained on planner-emitted pairs and served
through the external-estimator file protocol."""

from .data import DatasetError, PairDataset, load_manifest, split_by_map
from .model import GainUNet, SurrogateSpec, bce_loss, default_spec, standardize
from .rfa import FormatError, read_rfa, write_rfa
from .train import TrainConfig, evaluate, load_model, train

__version__ = "0.1.0"
