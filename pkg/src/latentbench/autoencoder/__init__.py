"""Auto-encoder with hand-written backpropagation."""

from .checkpoint import load_checkpoint, save_checkpoint
from .network import (AeArchitecture, AeModel, ae_backward, ae_forward, ae_loss, ae_param_count,
                      init_model)
from .training import Adam, AeTrace, AeTrainConfig, ae_decode, ae_embed, ae_train

__all__ = [
    "AeArchitecture", "AeModel", "AeTrace", "AeTrainConfig", "Adam", "ae_param_count", "ae_forward",
    "ae_backward", "ae_loss", "ae_train", "ae_embed", "ae_decode", "init_model", "save_checkpoint",
    "load_checkpoint",
]
