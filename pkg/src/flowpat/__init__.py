"""Multilayer-perceptron toolkit for two-phase flow-pattern classification."""

__version__ = "0.1.0"

from .data import (  # noqa: E402
    FEATURES,
    TEST1,
    TEST2,
    TEST3,
    Dataset,
    LabelScheme,
    SplitSpec,
    Standardization,
    get_scheme,
    load_csv,
    merge_labels,
    save_csv,
    standardize_apply,
    standardize_fit,
    stratified_split,
)
from .errors import (  # noqa: E402
    DataError,
    FlowpatError,
    ModelFormatError,
    ShapeError,
    TrainingDivergedError,
)
from .estimator import FeatureStandardizer, MLPFlowClassifier  # noqa: E402
from .evaluation import (  # noqa: E402
    ClassReport,
    ConfusionMatrix,
    class_report,
    confusion_matrix,
    merge_confusion,
    render_table,
)
from .mlp import (  # noqa: E402
    MlpModel,
    MlpTopology,
    backprop,
    deserialize,
    forward,
    init_model,
    predict_class,
    serialize,
)
from .synth import GenSpec, classify_mechanistic, generate_dataset  # noqa: E402
from .training import TrainConfig, TrainReport, k_fold_cv, mse_loss, one_hot, sgd_step, train  # noqa: E402
