from __future__ import annotations

import importlib
from typing import Any

from ..exceptions import ConfigError
from ..features import FeatureEncoder

MODEL_IMPLEMENTATIONS = {
    "mf": {"class": "MFScorer", "module": ".mf"},
    "fm": {"class": "FMScorer", "module": ".fm"},
    "crossnet": {"class": "CrossNetScorer", "module": ".crossnet"},
    "collab": {"class": "CollabScorer", "module": ".collab"},
    "ziln": {"class": "ZILNScorer", "module": ".ziln"},
    "linear": {"class": "LinearScorer", "module": ".dense"},
    "mlp": {"class": "MLPScorer", "module": ".dense"},
}

# Models compared in the ranking table by default
TABLE_MODELS = ["mf", "fm", "crossnet", "collab"]


def verify_model_type(model_type: str) -> None:
    """Verify that a model type is registered

    Raises:
        ConfigError: If the model type is unknown
    """
    if model_type not in MODEL_IMPLEMENTATIONS:
        raise ConfigError(
            f"Unknown model type '{model_type}'. "
            f"Available models are: {', '.join(MODEL_IMPLEMENTATIONS)}"
        )


def get_model_class(model_type: str):
    verify_model_type(model_type)
    info = MODEL_IMPLEMENTATIONS[model_type]
    module = importlib.import_module(info["module"], package=__name__)
    return getattr(module, info["class"])


def build_model(model_type: str, encoder: FeatureEncoder, **hyperparams: Any):
    cls = get_model_class(model_type)
    try:
        return cls(encoder=encoder, **hyperparams)
    except TypeError as e:
        raise ConfigError(f"Invalid hyperparameters for '{model_type}': {e}") from e
