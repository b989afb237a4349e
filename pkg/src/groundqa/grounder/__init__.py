from .model import (
    GroundingModel,
    attentive_pool,
    encode_joint,
    predict_heads,
    project_features,
)
from .proposals import generate_proposals, proposal_score
from .types import ClipPrediction, ClipSequence, QueryTokens
from .weights import GrounderWeights, init_weights, load_weights, save_weights

__all__ = [
    "ClipPrediction",
    "ClipSequence",
    "GrounderWeights",
    "GroundingModel",
    "QueryTokens",
    "attentive_pool",
    "encode_joint",
    "generate_proposals",
    "init_weights",
    "load_weights",
    "predict_heads",
    "project_features",
    "proposal_score",
    "save_weights",
]
