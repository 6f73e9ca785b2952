"""BalanceMix for multi-label classification with imbalanced and noisy labels."""
from .datagen import (Dataset, GeneratorConfig, cls_imbalance, generate, inject_mislabeling,
                      inject_noise, inject_random_flip, inject_single_positive, pn_imbalance,
                      standard_benchmark)
from .errors import BalanceMixError, ConfigError, ContractError, ShapeError
from .labelmgmt import LabelLedger, Reliability, fit_gmm, manage_labels
from .metrics import GroupSpec, average_precision, grouped_map, selection_metrics
from .model import ModelState, forward, init_model
from .trainer import TrainConfig, TrainResult, evaluate, train

__version__ = "0.1.0"
