"""Run-time prediction and ranking for tensor-pipeline schedules.

A synthetic pipeline generator and analytic cost oracle produce labeled
(pipeline, schedule) datasets; a graph-convolutional regression model is
trained on them and evaluated with percentage-error, R-squared, and
pairwise schedule-ranking metrics.
"""

__version__ = "0.1.0"

from .graph import (
    NormalizedAdjacency,
    PipelineGraph,
    batch_graphs,
    normalize_adjacency,
    topological_order,
)
from .synthesis import (
    GeneratorConfig,
    NoiseConfig,
    OpKind,
    OracleConfig,
    ScheduleDecision,
    StageSchedule,
    SynthPipeline,
    build_random_pipeline,
    enumerate_schedules,
    oracle_runtime,
    sample_pipeline,
)
from .features import (
    DEPENDENT_WIDTH,
    INVARIANT_WIDTH,
    NormStats,
    apply_norm,
    extract_dependent,
    extract_invariant,
    fit_norm_stats,
)
from .dataset import (
    DatasetHeader,
    SampleRecord,
    generate_dataset,
    read_dataset,
    write_dataset,
)
from .model import (
    BaselineParams,
    GraphBatch,
    ModelParams,
    backward,
    baseline_forward,
    forward,
    init_baseline_params,
    init_model_params,
)
from .training import LossTerms, TrainConfig, adagrad_step, compute_loss, train
from .evaluation import (
    EvalReport,
    Metrics,
    RankingReport,
    evaluate,
    pairwise_ranking,
    percent_errors,
    r_squared,
)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
