"""Spatiotemporal transformer forecaster: three parallel attention streams
(spatial, temporal per pixel, temporal meteo) with additive fusion and a
per-cell linear readout."""

from .config import StVitConfig
from .model import (ModelBatch, NonFiniteLossError, batch_loss, forward,
                    loss_and_grad, masked_mse)
from .params import (cast_params, init_params, load_checkpoint, param_names,
                     save_checkpoint)
from .predict import PredictionResult, persistence_baseline, predict_region
from .train import (Adam, EpochStats, TrainingDiverged, TrainReport,
                    evaluate_loss, train)
