"""Cavity-QED simulator for telling enantiomers apart by their photon output."""
from importlib import metadata

from .errors import EnantiocavError
from .params import Chirality, SystemParams, reference_params

try:
    __version__ = metadata.version("artifact")
except metadata.PackageNotFoundError:
    __version__ = "0.0.0"

__all__ = ["Chirality", "EnantiocavError", "SystemParams", "reference_params", "__version__"]
