from .base import (
    AdapterError,
    ContractError,
    EmbeddingScorer,
    SurrogateModel,
    VictimModel,
    embed_image,
    embed_text,
    generate,
    is_cross_llm,
    objective_and_gradient,
    serialized,
)
from .toy import (
    LinearSurrogate,
    QuadraticSurrogate,
    ToyScorer,
    ToyStack,
    ToySurrogate,
    ToyVictim,
    build_toy_stack,
)

__all__ = [
    "AdapterError", "ContractError", "EmbeddingScorer", "SurrogateModel", "VictimModel",
    "LinearSurrogate", "QuadraticSurrogate", "ToyScorer", "ToyStack", "ToySurrogate", "ToyVictim", "build_toy_stack",
    "embed_image", "embed_text", "generate", "is_cross_llm", "objective_and_gradient",
    "serialized",
]
