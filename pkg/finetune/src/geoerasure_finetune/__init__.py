"""Finetuning mitigation for geographical erasure.

Trains a causal language model's bias parameters against the erasure
loss over country distributions, tracking generalization across random,
pronoun and verb prompt splits plus language-modeling perplexity on a
pinned held-out text.
"""

from .bitfit import bias_only_filter, parameter_census
from .errors import (
    ConfigError,
    FinetuneError,
    SchemaError,
    SplitError,
    TrainingDiverged,
)
from .loss import erasure_loss, per_prompt_erasure
from .matrix import matrix_cells, run_matrix
from .modeling import TinyCausalLM, WordTokenizer, build_tiny_model, load_model
from .scoring import batch_country_probs, country_probs, sequence_perplexity
from .splits import split_prompts
from .training import FinetuneConfig, FinetuneRunResult, train

__version__ = "0.1.0"
