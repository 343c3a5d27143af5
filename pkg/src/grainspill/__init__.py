"""Multiscale risk-spillover analytics for grain futures and spot returns."""

from .connectedness import (
    ConnectednessTable,
    R2Connectedness,
    average_connectedness,
    connectedness_table,
    genizi_decompose,
    rolling_connectedness,
)
from .emd import EMD, ICEEMDAN, EnsembleConfig, IMFSet, SiftConfig, emd, iceemdan
from .forest import RandomForestRegressor, RegressionTree, grid_search, standardize_split
from .network import SpilloverNetwork, build_network
from .reconstruct import ComponentSet, GaussianMixture1D, classify_components, mode_measures

__all__ = [
    "ComponentSet",
    "ConnectednessTable",
    "EMD",
    "EnsembleConfig",
    "GaussianMixture1D",
    "ICEEMDAN",
    "IMFSet",
    "R2Connectedness",
    "RandomForestRegressor",
    "RegressionTree",
    "SiftConfig",
    "SpilloverNetwork",
    "average_connectedness",
    "build_network",
    "classify_components",
    "connectedness_table",
    "emd",
    "genizi_decompose",
    "grid_search",
    "iceemdan",
    "mode_measures",
    "rolling_connectedness",
    "standardize_split",
]
