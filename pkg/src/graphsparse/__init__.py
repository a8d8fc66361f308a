"""Linear-complexity graph forecasting for traffic series."""
from .baseline import DenseGCN, DenseGCNConfig, historical_average
from .data import (NormStats, TrafficSeries, WindowedDataset, interpolate_missing, read_series,
                   synth_traffic, window_and_split, write_series)
from .model import GSNet, GSNetConfig, param_count
from .trainer import Metrics, TrainConfig, compute_metrics, evaluate, train

__version__ = "0.1.0"
