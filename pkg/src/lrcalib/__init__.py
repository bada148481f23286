"""Feature-space few-shot calibration: LRSample selection, the intra-class
feature converter, center calibration with variance augmentation, and
density-based boundary reweighting, plus a seeded synthetic harness."""

__version__ = "0.1.0"

from .ccva import (CalibrationReport, GaussianSpec, base_statistics, calibrate_center, loss_aug,
                   sample_augmented, variance_transfer)
from .classifier import ClassifierHead
from .config import ExperimentConfig
from .errors import LrcalibError
from .fdbo import (DensityParams, ReweightFunction, assign_importance, find_edge_samples, local_densities,
                   loss_cls_weighted, loss_edge, similar_class)
from .geometry import cosine_sim, difference_vector, normalize, normalized_euclidean, softmax
from .harness import base_train, fine_tune, run_ablation, run_experiment
from .ifc import IfcModel, IfcTrainBatch, generate_lrsamples, ifc_forward, ifc_train_step, loss_spec, loss_trans
from .memory_bank import MemoryBank, Prototype
from .selection import select_lrsample
from .world import EmpiricalWorld, SyntheticWorld, generate_world
