from .lightltv import LightLTV as LightLTV
from .base import ExperimentConfig as ExperimentConfig, GenConfig as GenConfig, TrainConfig as TrainConfig

__version__ = "0.3.1"
__author__ = "LightLTV Contributors"
