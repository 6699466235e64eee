"""Process-model extraction from paged documents and semantic Dice scoring."""

from .breakdown import ElementBreakdown, FlowTriple, LaneName, LaneRef, breakdown, render_endpoint
from .embeddings import (
    ExactMatchProvider,
    LexicalFallbackProvider,
    ProviderConfig,
    RemoteEmbeddingProvider,
    cosine,
    make_provider,
    pairwise_similarity,
)
from .generation import (
    DocumentPages,
    GenerationTrace,
    LlmClientConfig,
    PromptStrategy,
    build_prompt,
    extract_json,
    generate_model,
)
from .harness import evaluate_pair, load_dataset, run_batch, summarize, write_report
from .model import CanonicalModel, ValidationReport, parse_model, serialize_model, validate_model
from .similarity import MatchingConfig, Matching, ScoreReport, dice, dice_sfa, match_items, score_models, serialize_item

__version__ = "0.1.0"
