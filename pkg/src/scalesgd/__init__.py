"""scalesgd: a deterministic lab for measuring how dataset characteristics
bound the scalability of parallel stochastic optimizers."""

from .data import (
    DataError,
    Dataset,
    FiniteSource,
    ParseError,
    Sample,
    SplitSpec,
    load_dense_csv,
    load_svmlight,
    parse_dense_csv,
    parse_svmlight,
    split,
)
from .metrics import (
    CharacterReport,
    c_sim,
    character_report,
    density,
    diversity,
    feature_stats,
    l0_distance,
    ls_async,
    ls_sync,
    within_batch_csim,
)
from .generators import (
    RulerSpec,
    StreamSpec,
    StreamSource,
    diversity_replicate,
    first_sample,
    gen_blocked_dataset,
    gen_uniform_dataset,
    ls_stream_next,
    ruler_label,
    ruler_values,
)
from .objective import (
    DualState,
    ObjectiveSpec,
    dataset_logloss,
    duality_gap,
    logistic_conjugate,
    point_loss,
    point_subgradient,
)
from .algorithms import (
    ConfigError,
    DivergedError,
    Problem,
    RunConfig,
    Trace,
    dadm_local_solve,
    mixing_matrix,
    run,
    run_dadm,
    run_ecd_psgd,
    run_hogwild,
    run_minibatch,
    run_seq_sgd,
    stochastic_quantize,
)
from .sweep import (
    GainGrowthTable,
    SweepConfig,
    SweepError,
    SweepResult,
    TargetNotReachedError,
    UpperBoundReport,
    cost_to_epsilon,
    detect_upper_bound,
    gain_growth_async,
    gain_growth_sync,
    run_sweep,
    table_and_report,
)

__version__ = "0.1.0"
