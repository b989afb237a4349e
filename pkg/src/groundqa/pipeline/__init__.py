from .answer import AnswerClient, ExternalCommandAnswerer, StubAnswerer, option_support
from .config import PipelineConfig, config_from_dict, load_config
from .grounding import FixedGrounder, ModelGrounder, PlantedGrounder
from .stages import STAGES, Pipeline, StageResult, SweepResult, run_sweep

__all__ = [
    "AnswerClient",
    "ExternalCommandAnswerer",
    "FixedGrounder",
    "ModelGrounder",
    "Pipeline",
    "PipelineConfig",
    "PlantedGrounder",
    "STAGES",
    "StageResult",
    "StubAnswerer",
    "SweepResult",
    "config_from_dict",
    "load_config",
    "option_support",
    "run_sweep",
]
