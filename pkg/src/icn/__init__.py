"""Interactive convolutional network for spatiotemporal micromobility demand forecasting."""

from .dataset import (
    DemandMatrix,
    FeatureBundle,
    Normalizer,
    SplitSpec,
    WeatherSeries,
    filter_active_areas,
    generate_synthetic,
    ingest_trips,
    make_windows,
)
from .dilation import SpatialMatchTable, build_match_table, dilate, pearson
from .network import IcnConfig, IcnParams, icn_forward, init_params
from .training import TrainHyper, l1_loss, train

__version__ = "0.1.0"

__all__ = [
    "DemandMatrix",
    "FeatureBundle",
    "Normalizer",
    "SplitSpec",
    "WeatherSeries",
    "filter_active_areas",
    "generate_synthetic",
    "ingest_trips",
    "make_windows",
    "SpatialMatchTable",
    "build_match_table",
    "dilate",
    "pearson",
    "IcnConfig",
    "IcnParams",
    "icn_forward",
    "init_params",
    "TrainHyper",
    "l1_loss",
    "train",
]
