"""End-to-end orchestration: data, codec fitting, training, inference, eval.

The training loop follows the two-stage recipe: a fitted pose codec turns
every sample into clean token grids, the condition encoder produces gloss
features and the length loss, a uniformly drawn timestep corrupts the
tokens, and one gradient step minimizes the combined diffusion plus
length objective.  Inference predicts per-gloss lengths (several ranked
candidate tables), runs the reverse chain once per candidate, keeps the
candidate whose final denoiser step was most confident, and decodes the
winning grid back to poses.

Reports are append-only: every run writes new timestamped filenames, and
file contents never embed timestamps, so identical configs and seeds
produce byte-identical artifacts.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codec import PoseCodec, load_codec, save_codec
from .config import RunConfig
from .denoiser import (
    DenoiserConfig,
    DenoiserError,
    TrainSample,
    TrainableDenoiser,
    condition_embedding,
    init_params,
    length_logits,
    load_checkpoint,
    save_checkpoint,
    train_step,
)
from .kernel import TokenGrid, mask_state, sample_corrupted
from .metrics import bleu_n, dtw_mje, pose_mse, token_stream, wer
from .sampler import sample_token_batch, terminal_kl
from .schedule import build_schedule
from .segmenter import LengthTable, SequentialKNNSegmenter, predict_length_tables
from .synthetic import (
    AlignedSample,
    generate_corpus,
    load_dataset,
    save_dataset,
    split_corpus,
)


class PipelineError(RuntimeError):
    """Raised for missing artifacts or inconsistent pipeline state."""


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, *tags))))


_TAG_TRAIN, _TAG_INFER, _TAG_CORRUPT = 11, 12, 14


def timestamped_path(directory: Path, stem: str, suffix: str) -> Path:
    """Fresh file name per run; existing reports are never overwritten."""
    directory.mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    path = directory / f"{stem}-{stamp}{suffix}"
    counter = 1
    while path.exists():
        path = directory / f"{stem}-{stamp}-{counter}{suffix}"
        counter += 1
    return path


# ---------------------------------------------------------------------------
# Data and codec stages
# ---------------------------------------------------------------------------


def cmd_gen_data(config: RunConfig) -> dict[str, str]:
    """Generate the synthetic corpus and write train/dev/test files."""
    samples = generate_corpus(config.data)
    splits = split_corpus(samples)
    out = {}
    Path(config.paths.dataset_dir).mkdir(parents=True, exist_ok=True)
    for name, part in splits.items():
        path = config.paths.dataset_file(name)
        save_dataset(part, path, spec=config.data)
        out[name] = str(path)
    return out


def load_split(config: RunConfig, split: str) -> list[AlignedSample]:
    path = config.paths.dataset_file(split)
    if not path.exists():
        raise PipelineError(f"dataset split {split!r} not found at {path}")
    samples, _ = load_dataset(path)
    return samples


def cmd_fit_codec(config: RunConfig) -> str:
    """Fit the pose codec on the training split and checkpoint it."""
    train = load_split(config, "train")
    codec = PoseCodec(
        codebook_size=config.codec.codebook_size,
        feature_dim=config.codec.feature_dim,
        patch_mode=config.codec.patch_mode,
        commitment_weight=config.codec.commitment_weight,
        kmeans_iters=config.codec.kmeans_iters,
        random_state=config.seed,
        chains_path=config.data.chains_path,
    )
    codec.fit([s.frames for s in train])
    path = config.paths.codec_file()
    path.parent.mkdir(parents=True, exist_ok=True)
    save_codec(path, codec)
    return str(path)


def require_codec(config: RunConfig) -> PoseCodec:
    path = config.paths.codec_file()
    if not path.exists():
        cmd_fit_codec(config)
    return load_codec(path)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def build_vocab(samples: list[AlignedSample]) -> list[str]:
    return sorted({g for s in samples for g in s.glosses})


def prepare_train_samples(
    config: RunConfig, codec: PoseCodec, samples: list[AlignedSample], vocab: list[str]
) -> list[TrainSample]:
    """Tokenize every sample and attach length supervision.

    Supervision comes either from the sequential-KNN segmenter run on the
    quantized latents (the self-supervised route) or from the gold planted
    alignments; lengths are clipped into the classifier's class range.
    """
    index = {g: i for i, g in enumerate(vocab)}
    seg = SequentialKNNSegmenter(k=config.segmentation.k, l=config.segmentation.l)
    max_class = config.denoiser.max_length_class
    out = []
    for s in samples:
        grid = codec.transform(s.frames)
        if config.training.length_supervision == "gold":
            lengths = s.lengths
        else:
            z = codec.latents(grid)
            lengths = seg.predict(z, len(s.glosses)).lengths
        lengths = np.clip(lengths, 1, max_class)
        out.append(
            TrainSample(
                tokens=grid,
                gloss_ids=np.array([index[g] for g in s.glosses], dtype=np.int64),
                lengths=lengths,
            )
        )
    return out


@dataclass
class TrainResult:
    checkpoint: str
    log_file: str
    losses: list[float]
    terminal_kl_per_position: float = 0.0


def cmd_train(config: RunConfig) -> TrainResult:
    """Train the denoiser and length head; write checkpoint and CSV log."""
    codec = require_codec(config)
    raw = load_split(config, "train")
    vocab = build_vocab(raw)
    samples = prepare_train_samples(config, codec, raw, vocab)

    n_frames_max = max(s.tokens.n_frames for s in samples)
    if n_frames_max > config.denoiser.max_frames:
        raise PipelineError(
            f"training sequences reach {n_frames_max} frames, above "
            f"denoiser.max_frames={config.denoiser.max_frames}"
        )
    dconfig = DenoiserConfig(
        vocab_size=codec.codebook_.size,
        timesteps=config.training.timesteps,
        gloss_vocab_size=len(vocab),
        n_channels=codec.n_channels_,
        d_model=config.denoiser.d_model,
        max_frames=config.denoiser.max_frames,
        max_length_class=config.denoiser.max_length_class,
        ada_scale_init=config.denoiser.ada_scale_init,
    )
    schedule = build_schedule(
        config.training.timesteps, codec.codebook_.size, spec=config.schedule
    )
    rng = _rng(config.seed, _TAG_TRAIN)
    params = init_params(dconfig, rng)

    log_path = timestamped_path(Path(config.paths.report_dir), "train-log", ".csv")
    losses: list[float] = []
    ckpt_path = config.paths.denoiser_file()
    ckpt_path.parent.mkdir(parents=True, exist_ok=True)
    # The terminal bound term is constant in the parameters; report it once
    # per schedule (per non-PAD position, identical for every code token).
    l_terminal = terminal_kl(np.array([[1]]), schedule)
    extra = {
        "gloss_vocab": vocab,
        "schedule": config.schedule.to_dict(),
        "terminal_kl_per_position": l_terminal,
    }

    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "t", "l_vb", "l_aux", "l_len", "total"])
        for step in range(1, config.training.steps + 1):
            picks = rng.integers(0, len(samples), size=config.training.batch_size)
            batch = [samples[i] for i in picks]
            try:
                params, breakdown, mean_t = train_step(
                    params,
                    dconfig,
                    batch,
                    schedule,
                    rng,
                    lr=config.training.learning_rate,
                    lam=config.training.lambda_aux,
                    delta=config.training.delta_length,
                )
            except DenoiserError as err:
                raise PipelineError(
                    f"training aborted at step {step} on batch {picks.tolist()}: {err}"
                ) from err
            losses.append(breakdown.total)
            writer.writerow(
                [
                    step,
                    mean_t,
                    f"{breakdown.l_vb:.10g}",
                    f"{breakdown.l_aux:.10g}",
                    f"{breakdown.l_len:.10g}",
                    f"{breakdown.total:.10g}",
                ]
            )
            if (
                config.training.checkpoint_every
                and step % config.training.checkpoint_every == 0
            ):
                save_checkpoint(
                    ckpt_path.parent / f"denoiser-step{step}.npz", params, dconfig, extra
                )
    save_checkpoint(ckpt_path, params, dconfig, extra)
    return TrainResult(
        checkpoint=str(ckpt_path),
        log_file=str(log_path),
        losses=losses,
        terminal_kl_per_position=l_terminal,
    )


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------


@dataclass
class InferenceResult:
    tokens: TokenGrid
    pose: np.ndarray
    lengths: np.ndarray
    score: float
    mask_trace: list[int]
    candidates: list[dict]


class _TracingDenoiser:
    """Wraps a denoiser and keeps the final-step output for scoring."""

    def __init__(self, inner) -> None:
        self.inner = inner
        self.final_probs: np.ndarray | None = None

    def __call__(self, x, t):
        probs = self.inner(x, t)
        if t == 1:
            self.final_probs = probs
        return probs


def candidate_length_tables(
    params: dict,
    gloss_ids: np.ndarray,
    n_candidates: int,
    max_class: int,
) -> list[LengthTable]:
    cond = condition_embedding(params, gloss_ids)
    scores = length_logits(params, cond)
    return predict_length_tables(scores, n_candidates, max_class)


def run_infer(
    config: RunConfig,
    glosses: list[str],
    gold_lengths: np.ndarray | None = None,
    seed_tag: int = 0,
    denoiser_override=None,
) -> InferenceResult:
    """Length prediction, reverse sampling per candidate, ranked decode.

    With ``gold_lengths`` the length head is bypassed ("gold" mode).  A
    custom denoiser (e.g. the exact oracle) can replace the trained one;
    it still runs through the same candidate machinery.
    """
    codec = require_codec(config)
    ckpt = config.paths.denoiser_file()
    if not ckpt.exists():
        raise PipelineError(f"denoiser checkpoint missing at {ckpt}")
    params, dconfig, extra = load_checkpoint(ckpt)
    vocab = extra["gloss_vocab"]
    index = {g: i for i, g in enumerate(vocab)}
    unknown = [g for g in glosses if g not in index]
    if unknown:
        raise PipelineError(f"gloss tokens not in training vocabulary: {unknown}")
    gloss_ids = np.array([index[g] for g in glosses], dtype=np.int64)
    schedule = build_schedule(dconfig.timesteps, dconfig.vocab_size, spec=config.schedule)

    if gold_lengths is not None:
        tables = [LengthTable(np.asarray(gold_lengths), max_class=int(np.max(gold_lengths)))]
    else:
        tables = candidate_length_tables(
            params, gloss_ids, config.inference.n_length_candidates,
            dconfig.max_length_class,
        )

    rng = _rng(config.seed, _TAG_INFER, seed_tag)
    candidates = []
    best = None
    for rank, table in enumerate(tables):
        total = table.total
        if denoiser_override is not None:
            den = _TracingDenoiser(denoiser_override)
        else:
            den = _TracingDenoiser(TrainableDenoiser(params, dconfig, gloss_ids))
        trace: list[int] = []
        values = sample_token_batch(
            1, total, dconfig.n_channels, den, schedule, rng, mask_trace=trace
        )[0]
        assert den.final_probs is not None
        chosen = np.take_along_axis(
            den.final_probs[0], values[..., None] - 1, -1
        )[..., 0]
        score = float(np.log(np.maximum(chosen, 1e-300)).mean())
        entry = {
            "rank": rank,
            "lengths": table.lengths.tolist(),
            "score": score,
            "tokens": values.tolist(),
            "mask_trace": trace,
        }
        candidates.append(entry)
        if best is None or score > best["score"]:
            best = entry
    grid = TokenGrid(values=np.asarray(best["tokens"]), vocab_size=dconfig.vocab_size)
    pose = codec.inverse_transform(grid)
    return InferenceResult(
        tokens=grid,
        pose=pose,
        lengths=np.asarray(best["lengths"], dtype=np.int64),
        score=best["score"],
        mask_trace=list(best["mask_trace"]),
        candidates=candidates,
    )


def write_inference_report(config: RunConfig, result: InferenceResult, glosses: list[str]) -> str:
    path = timestamped_path(Path(config.paths.report_dir), "infer", ".json")
    payload = {
        "glosses": glosses,
        "lengths": result.lengths.tolist(),
        "score": result.score,
        "tokens": result.tokens.values.tolist(),
        "mask_trace": result.mask_trace,
        "pose": [[[f"{v:.9g}" for v in joint] for joint in frame] for frame in result.pose],
        "candidates": [
            {k: v for k, v in c.items() if k != "tokens"} for c in result.candidates
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
    return str(path)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def evaluate_split(config: RunConfig, split: str, use_gold_lengths: bool | None = None) -> dict:
    """Token and pose metrics of the trained model on one dataset split."""
    samples = load_split(config, split)
    if not samples:
        raise PipelineError(f"split {split!r} is empty")
    codec = require_codec(config)
    gold_mode = (
        config.inference.use_gold_lengths if use_gold_lengths is None else use_gold_lengths
    )

    token_wers, bleu_hyps, bleu_refs = [], [], []
    dtws, mses, length_hits, length_totals = [], [], 0, 0
    for i, sample in enumerate(samples):
        gold_grid = codec.transform(sample.frames)
        result = run_infer(
            config,
            sample.glosses,
            gold_lengths=sample.lengths if gold_mode else None,
            seed_tag=i,
        )
        hyp_tokens = token_stream(result.tokens.values)
        ref_tokens = token_stream(gold_grid.values)
        token_wers.append(wer(hyp_tokens, ref_tokens))
        bleu_hyps.append(hyp_tokens)
        bleu_refs.append(ref_tokens)
        dtws.append(dtw_mje(result.pose, sample.frames))
        if result.pose.shape == sample.frames.shape:
            mses.append(pose_mse(result.pose, sample.frames))
        length_hits += int(np.array_equal(result.lengths, sample.lengths))
        length_totals += 1

    report = {
        "split": split,
        "n_samples": len(samples),
        "gold_lengths": bool(gold_mode),
        "token_wer": float(np.mean(token_wers)),
        "dtw_mje": float(np.mean(dtws)),
        "pose_mse": float(np.mean(mses)) if mses else None,
        "length_accuracy": length_hits / length_totals,
        "config_seed": config.seed,
    }
    for n in range(1, 5):
        report[f"bleu_{n}"] = bleu_n(bleu_hyps, bleu_refs, max_n=n)
    return report


def write_evaluation_report(config: RunConfig, report: dict) -> dict[str, str]:
    json_path = timestamped_path(Path(config.paths.report_dir), "evaluate", ".json")
    with open(json_path, "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
    csv_path = json_path.with_suffix(".csv")
    keys = sorted(report)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys)
        writer.writerow([report[k] for k in keys])
    return {"json": str(json_path), "csv": str(csv_path)}


# ---------------------------------------------------------------------------
# Forward-corruption debug view
# ---------------------------------------------------------------------------


def corruption_preview(config: RunConfig, split: str, sample_index: int, timesteps: list[int]) -> dict:
    """MASK/changed fractions of one sample at chosen timesteps."""
    samples = load_split(config, split)
    if not 0 <= sample_index < len(samples):
        raise PipelineError(f"sample index {sample_index} outside split of {len(samples)}")
    codec = require_codec(config)
    grid = codec.transform(samples[sample_index].frames)
    schedule = build_schedule(
        config.training.timesteps, codec.codebook_.size, spec=config.schedule
    )
    rng = _rng(config.seed, _TAG_CORRUPT, sample_index)
    rows = []
    for t in timesteps:
        corrupted = sample_corrupted(grid, t, schedule, rng)
        changed = corrupted.values != grid.values
        masked = corrupted.values == mask_state(codec.codebook_.size)
        rows.append(
            {
                "t": t,
                "mask_fraction": float(masked.mean()),
                "changed_fraction": float(changed.mean()),
                "alpha_bar": schedule.alpha_bar_at(t),
                "gamma_bar": schedule.gamma_bar_at(t),
                "tokens": corrupted.values.tolist(),
            }
        )
    return {
        "split": split,
        "sample_index": sample_index,
        "glosses": samples[sample_index].glosses,
        "clean_tokens": grid.values.tolist(),
        "steps": rows,
    }


__all__ = [
    "InferenceResult",
    "PipelineError",
    "TrainResult",
    "build_vocab",
    "candidate_length_tables",
    "cmd_fit_codec",
    "cmd_gen_data",
    "cmd_train",
    "corruption_preview",
    "evaluate_split",
    "load_split",
    "prepare_train_samples",
    "require_codec",
    "run_infer",
    "timestamped_path",
    "write_evaluation_report",
    "write_inference_report",
]
