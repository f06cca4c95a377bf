"""Behavior-cloned visual navigation policy and closed-loop evaluation client."""

from .client import PolicyDriver, SimulatorClient, ZeroPolicy, evaluate_closed_loop
from .data import NavigationSamples, SampleIndex
from .model import ENCODING_DIM, FEATURE_DIM, NavigationPolicy, parameter_count
from .train import load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"
