from .blocks import RFB_PLAN, RFB_S_PLAN, ConvBNReLU, RFBBlock
from .model import (
    CheckpointError,
    DetectorConfig,
    FeatureStage,
    ModelOutput,
    TextDetector,
    load_checkpoint,
    pad_to_multiple,
    restore_model,
    save_checkpoint,
)
from .rf import (
    LayerSpec,
    Resize,
    RFProfile,
    branched_profile,
    compute_rf_profile,
    extend_profile,
    plan_branch_layers,
    render_rf_map,
    stem_layer_specs,
)

__all__ = [
    "RFB_PLAN",
    "RFB_S_PLAN",
    "ConvBNReLU",
    "RFBBlock",
    "CheckpointError",
    "DetectorConfig",
    "FeatureStage",
    "ModelOutput",
    "TextDetector",
    "load_checkpoint",
    "pad_to_multiple",
    "restore_model",
    "save_checkpoint",
    "LayerSpec",
    "Resize",
    "RFProfile",
    "branched_profile",
    "compute_rf_profile",
    "extend_profile",
    "plan_branch_layers",
    "render_rf_map",
    "stem_layer_specs",
]
