"""Contributor-role modeling: activity ingestion, time-sliced topic roles,
trajectory clustering, and churn prediction over quarterly edit histories."""

from .churn import (
    ChurnConfig,
    ChurnDataset,
    Label,
    build_dataset,
    compute_features,
    enumerate_windows,
    feature_groups,
    feature_names,
    label_user,
)
from .classify import (
    ForestChurnModel,
    ForestConfig,
    LogisticChurnModel,
    LogisticConfig,
    TrainedModel,
    cross_validate,
    stratified_folds,
    train_logistic,
    train_prior,
    train_random_forest,
)
from .corpus import (
    CorpusStats,
    Document,
    TimeSlicedCorpus,
    build_corpus,
    corpus_stats,
    load_corpus,
    record_to_document,
    save_corpus,
)
from .dtm import (
    DtmConfig,
    DtmModel,
    DynamicTopicModel,
    RoleMixture,
    fit_dtm,
    fit_lda,
    infer_theta,
    infer_thetas,
    top_terms,
    topic_track,
)
from .evaluate import (
    AblationResult,
    EvalReport,
    UndefinedMetricError,
    ablate,
    average_reports,
    confusion_metrics,
    evaluate_scores,
    lift_curve,
    roc_auc,
)
from .ingest import (
    ActivityRecord,
    EditEvent,
    LifespanHistogram,
    ParseError,
    lifespan_stats,
    parse_events,
    quarter_index,
    quarterize,
    sample_population,
)
from .nmf import (
    ClusterAssignment,
    ClusterReport,
    NmfModel,
    ProfileMatrix,
    TrajectoryNmf,
    build_profile_matrix,
    cluster_summary,
    discretize,
    fit_nmf,
    nndsvd_init,
)
from .synth import (
    GroundTruth,
    RecoveryReport,
    SynthConfig,
    evaluate_recovery,
    generate_population,
    separated_topics,
)

__version__ = "0.1.0"

__all__ = [
    "ActivityRecord",
    "AblationResult",
    "ChurnConfig",
    "ChurnDataset",
    "ClusterAssignment",
    "ClusterReport",
    "CorpusStats",
    "Document",
    "DtmConfig",
    "DtmModel",
    "DynamicTopicModel",
    "EditEvent",
    "EvalReport",
    "ForestChurnModel",
    "ForestConfig",
    "GroundTruth",
    "Label",
    "LifespanHistogram",
    "LogisticChurnModel",
    "LogisticConfig",
    "NmfModel",
    "ParseError",
    "ProfileMatrix",
    "RecoveryReport",
    "RoleMixture",
    "SynthConfig",
    "TimeSlicedCorpus",
    "TrainedModel",
    "TrajectoryNmf",
    "UndefinedMetricError",
    "ablate",
    "average_reports",
    "build_corpus",
    "build_dataset",
    "build_profile_matrix",
    "cluster_summary",
    "compute_features",
    "confusion_metrics",
    "corpus_stats",
    "cross_validate",
    "discretize",
    "enumerate_windows",
    "evaluate_recovery",
    "evaluate_scores",
    "feature_groups",
    "feature_names",
    "fit_dtm",
    "fit_lda",
    "fit_nmf",
    "generate_population",
    "infer_theta",
    "infer_thetas",
    "label_user",
    "lifespan_stats",
    "lift_curve",
    "load_corpus",
    "nndsvd_init",
    "parse_events",
    "quarter_index",
    "quarterize",
    "record_to_document",
    "roc_auc",
    "sample_population",
    "save_corpus",
    "separated_topics",
    "stratified_folds",
    "top_terms",
    "topic_track",
    "train_logistic",
    "train_prior",
    "train_random_forest",
]
