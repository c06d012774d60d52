"""Model-agnostic diagnosis toolkit for composed image retrieval.

Finds the minimal token subsets a retrieval model actually relies on,
measures how its attention splits across modalities, plans hard-negative
augmentation, and ships a synthetic world plus toy scorer for end-to-end
trend experiments.
"""
from .augment import (
    AugmentPlan,
    GenerationClient,
    MockGenerationClient,
    PositivePolicy,
    RemoteGenerationClient,
    SourceTriplet,
    TripletSource,
    apply_plan,
    mix_sources,
    plan_augmented_sample,
    select_in_sample_negatives,
)
from .errors import CirFocusError
from .metrics import (
    EvaluationReport,
    build_evaluation_report,
    build_focus_report,
    focus_balance_ratios,
    focus_imbalance,
    focus_token_proportion,
    subset_recall_at_k,
)
from .refinement import (
    RefinementConfig,
    exhaustive_minimal_states,
    predicted_inference_budget,
    refine,
)
from .scoring import ScoreRequest, Scorer, ToyScorer, ToyScorerParams, rank, retrieval_equal
from .synthworld import (
    SynthWorld,
    TrainingConfig,
    WorldConfig,
    contrastive_loss,
    distillation_loss,
    finite_difference_check,
    generate_world,
    in_sample_weight,
    run_ratio_sweep,
    train_toy_scorer,
)
from .types import (
    AugmentedSample,
    Candidate,
    CandidateKind,
    FinalStateSet,
    FocusReport,
    ImageToken,
    Modality,
    PruneState,
    Ranking,
    TextToken,
    TokenizedQuery,
    ValidityMode,
    normalize_query,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
