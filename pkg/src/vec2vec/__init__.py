"""Unsupervised translation between text-embedding spaces."""

from .baselines import TransportPlan, emd, gromov_wasserstein, hungarian, naive_translate, sinkhorn
from .data_io import EmbeddingSet, WorldConfig, generate_synthetic_world, load, save
from .evaluation import EvalReport, eval_translation
from .losses import LossOptions, LossWeights
from .trainer import TrainConfig, multi_seed_select, train
from .translator import NetConfig, TranslatorNet, load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "EmbeddingSet", "EvalReport", "LossOptions", "LossWeights", "NetConfig", "TrainConfig", "TransportPlan",
    "TranslatorNet", "WorldConfig", "emd", "eval_translation", "generate_synthetic_world", "gromov_wasserstein",
    "hungarian", "load", "load_checkpoint", "multi_seed_select", "naive_translate", "save", "save_checkpoint",
    "sinkhorn", "train",
]
