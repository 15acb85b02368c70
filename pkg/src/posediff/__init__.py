"""Discrete-diffusion generation of vector-quantized skeleton pose sequences.

The package covers the full desk-scale pipeline: a pose codec that
quantizes skeleton sequences into token grids, mask-and-replace categorical
diffusion with exact posteriors and reparameterized reverse sampling, a
sequential-KNN length segmenter, synthetic gloss-to-pose corpora, and a CLI
for training, inference and evaluation.
"""

from .codec import Codebook, PoseCodec, PoseSequence, SkeletonChain, fit_codebook, quantize
from .config import RunConfig, load_config
from .denoiser import (
    ConditionEmbedding,
    DenoiserConfig,
    TrainableDenoiser,
    adaln,
    temporal_resample,
    train_step,
)
from .kernel import (
    TokenGrid,
    forward_marginal,
    mask_replace_matrix,
    mask_state,
    pad_state,
    posterior,
    sample_corrupted,
    uniform_matrix,
)
from .metrics import bleu_n, dtw_mje, pose_mse, wer
from .sampler import (
    LossBreakdown,
    OracleDenoiser,
    combined_loss,
    reverse_step_distribution,
    sample_sequence,
    vlb_terms,
)
from .schedule import NoiseSchedule, ScheduleSpec, build_schedule, per_step_from_cumulative
from .segmenter import (
    LengthTable,
    SequentialKNNSegmenter,
    find_boundaries,
    length_loss,
    local_density,
    select_peaks,
)
from .synthetic import (
    AlignedSample,
    SyntheticCorpusSpec,
    generate_corpus,
    load_dataset,
    save_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "AlignedSample",
    "Codebook",
    "ConditionEmbedding",
    "DenoiserConfig",
    "LengthTable",
    "LossBreakdown",
    "NoiseSchedule",
    "OracleDenoiser",
    "PoseCodec",
    "PoseSequence",
    "RunConfig",
    "ScheduleSpec",
    "SequentialKNNSegmenter",
    "SkeletonChain",
    "SyntheticCorpusSpec",
    "TokenGrid",
    "TrainableDenoiser",
    "adaln",
    "bleu_n",
    "build_schedule",
    "combined_loss",
    "dtw_mje",
    "find_boundaries",
    "fit_codebook",
    "forward_marginal",
    "generate_corpus",
    "length_loss",
    "load_config",
    "load_dataset",
    "local_density",
    "mask_replace_matrix",
    "mask_state",
    "pad_state",
    "per_step_from_cumulative",
    "pose_mse",
    "posterior",
    "quantize",
    "reverse_step_distribution",
    "sample_corrupted",
    "sample_sequence",
    "save_dataset",
    "select_peaks",
    "temporal_resample",
    "train_step",
    "uniform_matrix",
    "vlb_terms",
    "wer",
    "__version__",
]
