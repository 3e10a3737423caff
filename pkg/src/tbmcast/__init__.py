"""Next-step forecasting of tunnel-boring-machine load parameters.

Windowed multivariate sensor series feed six forecaster families (SVR,
random forest, feed-forward, RNN, LSTM, GRU) in single- and multi-output
modes, optionally after L1-based feature selection; everything numerical is
implemented directly on numpy.
"""

from .dataset import (
    FeatureSchema,
    Normalizer,
    SeriesTable,
    SplitSpec,
    TARGET_KEYS,
    TARGET_NAMES,
    TBM_FEATURES,
    WindowedSample,
    default_schema,
    fit_normalizer,
    apply_normalizer,
    load_records,
    make_windows,
    restrict_features,
    stack_windows,
    write_series_csv,
)
from .errors import (
    DimensionError,
    EmptyInputError,
    ForecastError,
    InsufficientDataError,
    NumericError,
    ParseError,
    SchemaError,
    TrainingDiverged,
    UndefinedMetricError,
    ValidationError,
)
from .lasso import (
    FeatureSelection,
    LassoModel,
    TargetSelection,
    choose_lambda,
    fit_lasso,
    lambda_max,
    lasso_path,
    objective_value,
    run_feature_selection,
    select_features,
    union_features,
)
from .metrics import (
    EvaluationReport,
    RunMetrics,
    build_report,
    mape,
    perf_gain,
    rmse,
    write_results_csv,
)
from .neural import (
    FeedForwardNet,
    GRUNet,
    LSTMNet,
    ModelConfig,
    VanillaRNN,
    batch_gradients,
    build_model,
)
from .optim import (
    RMSPropConfig,
    RMSPropState,
    SGDConfig,
    full_mse,
    rmsprop_step,
    sgd_step,
    train,
    train_rmsprop,
    train_sgd,
)
from .shallow import SVR, ForestConfig, RandomForest, SVRConfig
from .synthetic import SyntheticSpec, default_spec, generate_series, persistence_baseline
from .checkpoint import Checkpoint, load_checkpoint, load_model, save_checkpoint, save_model
from .experiment import ExperimentConfig, build_config, parse_config_file, run_experiment

__version__ = "0.1.0"
