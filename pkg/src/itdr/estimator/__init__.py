"""Image-to-pose estimators: the CNN regressor and the noise oracle."""

from .evaluate import (
    Capture,
    ErrorReport,
    Estimator,
    ItemRecord,
    ModelEstimator,
    OracleEstimator,
    PerfectEstimator,
    as_estimator,
    evaluate,
)
from .loss import batch_loss, loss
from .model import (
    CheckpointError,
    Model,
    ModelConfig,
    ModelShapeError,
    forward,
    forward_batch,
    load_checkpoint,
    predict_batch,
    save_checkpoint,
)
from .oracle import NoiseOracle, oracle_predict
from .train import TrainConfig, TrainingData, TrainingDivergedError, TrainLog, loss_gradient, train
