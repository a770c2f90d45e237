"""geoerasure: measure and mitigate geographical erasure in language models.

The package compares model-predicted country distributions against
population-based ground truth, quantifies underprediction with the ER
metric (an additive component of the KL-divergence), profiles training
corpora for country-mention frequencies, and calibrates the softmax
temperature to reduce erasure.
"""

from .core import (
    CandidateSet,
    Country,
    GroundTruth,
    ProbDist,
    candidate_set_from_files,
    ground_truth_from_counts,
    load_alias_file,
    load_gdp_file,
    load_ground_truth,
    load_population_rows,
    ratio,
)
from .corpus import (
    CorpusDataset,
    CountryMatcher,
    MentionCounts,
    TrainProfile,
    count_mentions,
    data_bias,
    profile,
)
from .errors import (
    BackendError,
    CapabilityError,
    ConfigError,
    ContractError,
    DomainError,
    GeoErasureError,
    NormalizationError,
    ReportError,
    SchemaError,
    SplitError,
    TemplateError,
    TransportError,
    ValidationError,
    ZeroPredictionError,
)
from .metrics import (
    ErasureSet,
    aggregate_model,
    aggregate_uniform,
    choose_r,
    erasure,
    erasure_complement,
    erasure_set,
    kl,
)
from .prompts import (
    Prompt,
    PromptSet,
    PromptTemplate,
    SubjectConfig,
    expand,
    load_prompt_set,
    load_subject_config,
    load_templates,
    save_prompt_set,
    split,
)
from .report import (
    ErasureReport,
    build_report,
    cross_model_erasure,
    load_report,
    save_report,
)
from .scoring import (
    BackendDescriptor,
    ContinuationScore,
    MockBackend,
    TokenScore,
    WireBackend,
    country_distribution,
    perplexity,
    score_continuation,
    sequence_logprob,
)
from .temperature import TauCurve, optimize_tau, rescale, tau_perplexity_trace

__version__ = "0.1.0"
