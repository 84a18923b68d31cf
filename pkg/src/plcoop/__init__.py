"""Partial label learning toolkit.

Train classifiers from candidate label sets: replica expansion into groups,
progressive loss-driven disambiguation on a rising schedule, and cooperative
training of two networks that exchange confidence scores — plus a candidate
k-NN voting baseline, a controlled corruption protocol for building partial
label benchmarks from clean data, and a cross-validation harness with paired
significance testing.
"""

from .baselines import PlknnModel, plknn_fit, plknn_predict, plknn_predict_batch, select_k, uniform_average_train
from .cooperation import (
    TrainConfig,
    TrainedModel,
    predict,
    predict_proba,
    train,
    train_no_nc,
    train_no_pd,
    train_uniform_average,
)
from .dataset import (
    CsvSchema,
    DatasetError,
    FoldSplit,
    PartialLabelDataset,
    generate_controlled,
    load_csv,
    load_dataset_dir,
    make_folds,
    save_dataset,
    standardize_features,
    subset,
)
from .disambiguation import (
    ConfidenceVector,
    ScheduleConfig,
    disambiguation_accuracy,
    schedule_T,
    select_reliable,
    update_confidences,
)
from .duplication import DuplicatedDataset, duplicate, group_minibatches
from .evaluation import (
    ExperimentResult,
    comparison_table,
    paired_t_test,
    run_cv,
)
from .mlp import (
    MlpParameters,
    TrainingDivergedError,
    adam_step,
    backward,
    forward,
    gradient_check,
    init,
    load_checkpoint,
    save_checkpoint,
    weighted_loss,
)
from .synth import gaussian_blobs, glass_like

__version__ = "0.1.0"
