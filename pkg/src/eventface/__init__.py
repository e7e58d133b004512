"""Event-camera face recognition on a small numpy autodiff engine.

Submodules
----------
autodiff    float64 reverse-mode tensors and differentiable ops
events      event streams, CSV I/O, window accumulation, frame encoding
backbone    ResNet-style conv backbone with mergeable LoRA adapters
motion      multi-scale motion prompt encoder over adjacent frames
stm         spatial/motion token mixing with bidirectional WKV attention
loss        adaptive-margin (norm-aware) angular classification loss
metrics     EER, ROC-AUC, TAR@FAR, CMC
model       full network, training stages, embedding extraction
train       two-stage training loop
data        synthetic identities and event streams
verify      oracle and property suites
cli         ``python -m eventface.cli`` entry point
"""

from .autodiff import Tensor, gradcheck, no_grad
from .events import EventStream, accumulate_window, build_sequence
from .metrics import compute_cmc, compute_eer, compute_roc_auc, compute_tar_at_far
from .model import EventFaceModel, ModelConfig, extract_embedding

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "gradcheck",
    "no_grad",
    "EventStream",
    "accumulate_window",
    "build_sequence",
    "compute_eer",
    "compute_roc_auc",
    "compute_tar_at_far",
    "compute_cmc",
    "EventFaceModel",
    "ModelConfig",
    "extract_embedding",
]
