"""A small trainable clean-token predictor with analytic gradients.

The model embeds, per grid position, the current token id, the grid
column, the frame index and a pooled gloss-condition vector, concatenates
the four pieces, injects the timestep through adaptive layer normalization
and mixes information across frames with one temporal
downsample/upsample stage.  A linear head plus softmax produces the
per-position distribution over the V codes.

Deliberately no attention stack: the denoiser contract (any callable
``f(values, t) -> probs``) isolates the architecture so richer models can
swap in.  Gradients are derived by hand and verified against central
finite differences in the test suite; everything runs in float64.

The gloss-condition encoder doubles as the length predictor: per-gloss
embedding vectors feed both the pooled conditioning signal and a linear
length-classification head, so the length loss trains the shared
embeddings exactly as the joint objective dictates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .kernel import TokenGrid, sample_corrupted
from .sampler import LossBreakdown, combined_loss, loss_probs_grad
from .schedule import NoiseSchedule
from .segmenter import length_loss, length_loss_grad

LAYERNORM_EPS = 1e-5


class DenoiserError(RuntimeError):
    """Raised for shape mismatches, vocabulary overruns or bad gradients."""


@dataclass
class ConditionEmbedding:
    """Per-gloss feature vectors plus their pooled summary."""

    vectors: np.ndarray  # (M, d_model)
    pooled: np.ndarray  # (d_model,)
    gloss_ids: np.ndarray  # (M,) integer ids

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 1:
            raise DenoiserError("condition needs at least one gloss vector")
        if not np.all(np.isfinite(self.vectors)):
            raise DenoiserError("condition vectors must be finite")


@dataclass
class DenoiserConfig:
    """Shape and capacity settings for the trainable denoiser.

    ``ada_scale_init`` sets the initial adaptive layer-norm gain; larger
    values enlarge the feature norm and thereby the effective step size of
    the zero-initialized output head, which matters when the step budget
    is tiny (overfitting probes).
    """

    vocab_size: int
    timesteps: int
    gloss_vocab_size: int
    n_channels: int = 3
    d_model: int = 512
    max_frames: int = 512
    max_length_class: int = 64  # classes 1..P for per-gloss lengths
    ada_scale_init: float = 1.0

    def __post_init__(self) -> None:
        if self.d_model % 4 != 0:
            raise DenoiserError("d_model must be divisible by 4 (four concat pieces)")

    @property
    def piece_dim(self) -> int:
        return self.d_model // 4

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "timesteps": self.timesteps,
            "gloss_vocab_size": self.gloss_vocab_size,
            "n_channels": self.n_channels,
            "d_model": self.d_model,
            "max_frames": self.max_frames,
            "max_length_class": self.max_length_class,
            "ada_scale_init": self.ada_scale_init,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        return cls(**d)


def init_params(config: DenoiserConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Fresh parameter dictionary.

    The output head starts at zero so an untrained model emits exactly
    uniform distributions; layer-norm scales start at one.
    """
    D, de = config.d_model, config.piece_dim
    V, T = config.vocab_size, config.timesteps

    def normal(shape, scale):
        return rng.normal(0.0, scale, size=shape)

    return {
        "tok_emb": normal((V + 2, de), 1.0),
        "col_emb": normal((config.n_channels, de), 1.0),
        "pos_emb": normal((config.max_frames, de), 1.0),
        "cond_w": normal((de, D), D ** -0.5),
        "cond_b": np.zeros(de),
        "gloss_emb": normal((config.gloss_vocab_size, D), 1.0),
        "ada_scale": np.full((T, D), float(config.ada_scale_init)),
        "ada_shift": np.zeros((T, D)),
        "mix_w1": normal((D, D), D ** -0.5),
        "mix_b1": np.zeros(D),
        "mix_w2": normal((D, D), D ** -0.5),
        "mix_b2": np.zeros(D),
        "out_w": np.zeros((V, D)),
        "out_b": np.zeros(V),
        "len_w": normal((config.max_length_class, D), D ** -0.5),
        "len_b": np.zeros(config.max_length_class),
    }


# ---------------------------------------------------------------------------
# Primitive operators
# ---------------------------------------------------------------------------


def adaln(
    h: np.ndarray,
    t: int,
    scale_table: np.ndarray,
    shift_table: np.ndarray,
    eps: float = LAYERNORM_EPS,
) -> np.ndarray:
    """Timestep-adaptive layer normalization over the last axis.

    Normalizes each feature vector to zero mean and (eps-floored) unit
    variance, then applies the learned per-timestep affine: for a constant
    input the normalized part vanishes and the output equals the shift.
    """
    mu = h.mean(axis=-1, keepdims=True)
    var = h.var(axis=-1, keepdims=True)
    y = (h - mu) / np.sqrt(var + eps)
    return scale_table[t - 1] * y + shift_table[t - 1]


def temporal_resample(
    h: np.ndarray, direction: str, target_len: int | None = None, axis: int = 0
) -> np.ndarray:
    """Stride-2 frame subsampling or nearest-frame upsampling.

    ``down`` keeps even-indexed frames (length ceil(N/2)); ``up`` maps
    output frame n to input frame n // 2, giving length 2*N truncated to
    ``target_len`` when provided.  Other axes pass through unchanged.
    """
    if direction == "down":
        index = [slice(None)] * h.ndim
        index[axis] = slice(0, None, 2)
        return h[tuple(index)]
    if direction == "up":
        out = np.repeat(h, 2, axis=axis)
        if target_len is not None:
            index = [slice(None)] * h.ndim
            index[axis] = slice(0, target_len)
            out = out[tuple(index)]
        return out
    raise DenoiserError(f"direction must be 'down' or 'up', got {direction!r}")


def _resample_backward(du: np.ndarray, axis: int) -> np.ndarray:
    """Gradient of up(down(m)) with respect to m (same shape as du)."""
    dm = np.zeros_like(du)
    n = du.shape[axis]
    even = [slice(None)] * du.ndim
    even[axis] = slice(0, None, 2)
    odd = [slice(None)] * du.ndim
    odd[axis] = slice(1, None, 2)
    dm[tuple(even)] = du[tuple(even)]
    n_odd = du[tuple(odd)].shape[axis]
    even_head = [slice(None)] * du.ndim
    even_head[axis] = slice(0, 2 * n_odd, 2)
    dm[tuple(even_head)] += du[tuple(odd)]
    del n
    return dm


def condition_embedding(
    params: dict[str, np.ndarray], gloss_ids: np.ndarray
) -> ConditionEmbedding:
    """Look up per-gloss vectors and their mean pooling."""
    gloss_ids = np.asarray(gloss_ids, dtype=np.int64)
    table = params["gloss_emb"]
    if gloss_ids.size == 0:
        raise DenoiserError("condition needs at least one gloss token")
    if gloss_ids.min() < 0 or gloss_ids.max() >= table.shape[0]:
        raise DenoiserError(
            f"gloss id outside vocabulary of size {table.shape[0]}"
        )
    vectors = table[gloss_ids]
    return ConditionEmbedding(
        vectors=vectors, pooled=vectors.mean(axis=0), gloss_ids=gloss_ids
    )


def length_logits(params: dict[str, np.ndarray], condition: ConditionEmbedding) -> np.ndarray:
    """Per-gloss scores over the length classes 1..P; shape (M, P)."""
    return condition.vectors @ params["len_w"].T + params["len_b"]


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def denoiser_forward(
    params: dict[str, np.ndarray],
    config: DenoiserConfig,
    x_values: np.ndarray,
    t: int,
    condition: ConditionEmbedding,
    want_cache: bool = False,
):
    """Per-position code distribution for corrupted tokens x_t.

    ``x_values`` may carry any leading batch dimensions before the
    (frames, channels) axes.  Returns (probs, cache); the cache holds the
    intermediates the backward pass needs and is ``None`` unless requested.
    """
    x = np.asarray(x_values, dtype=np.int64)
    if x.ndim < 2:
        raise DenoiserError("token input must be at least (frames, channels)")
    n_frames, n_channels = x.shape[-2], x.shape[-1]
    if n_channels != config.n_channels:
        raise DenoiserError(
            f"grid has {n_channels} channels, model expects {config.n_channels}"
        )
    if n_frames > config.max_frames:
        raise DenoiserError(
            f"sequence of {n_frames} frames exceeds max_frames={config.max_frames}"
        )
    if not 1 <= t <= config.timesteps:
        raise DenoiserError(f"timestep {t} outside [1, {config.timesteps}]")
    if x.min() < 1 or x.max() > config.vocab_size + 2:
        raise DenoiserError("token values outside [1, V+2]")

    de = config.piece_dim
    tok = params["tok_emb"][x - 1]  # (..., N, C, de)
    col = np.broadcast_to(params["col_emb"], x.shape + (de,))
    pos = np.broadcast_to(
        params["pos_emb"][:n_frames][:, None, :], x.shape[:-2] + (n_frames, n_channels, de)
    )
    cpiece = params["cond_w"] @ condition.pooled + params["cond_b"]  # (de,)
    cond = np.broadcast_to(cpiece, x.shape + (de,))
    e = np.concatenate([tok, col, pos, cond], axis=-1)  # (..., N, C, D)

    mu = e.mean(axis=-1, keepdims=True)
    var = e.var(axis=-1, keepdims=True)
    s = np.sqrt(var + LAYERNORM_EPS)
    y = (e - mu) / s
    h = params["ada_scale"][t - 1] * y + params["ada_shift"][t - 1]

    m = np.tanh(h @ params["mix_w1"].T + params["mix_b1"])
    down = temporal_resample(m, "down", axis=-3)
    u = temporal_resample(down, "up", target_len=n_frames, axis=-3)
    h2 = h + u @ params["mix_w2"].T + params["mix_b2"]

    logits = h2 @ params["out_w"].T + params["out_b"]
    logits -= logits.max(axis=-1, keepdims=True)
    expl = np.exp(logits)
    probs = expl / expl.sum(axis=-1, keepdims=True)

    if not np.all(np.isfinite(probs)):
        raise DenoiserError("non-finite denoiser output")

    cache = None
    if want_cache:
        cache = {
            "x": x,
            "t": t,
            "condition": condition,
            "cpiece": cpiece,
            "s": s,
            "y": y,
            "h": h,
            "m": m,
            "u": u,
            "h2": h2,
            "probs": probs,
            "n_frames": n_frames,
        }
    return probs, cache


def softmax_backward(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    """Exact Jacobian-vector product of softmax along the last axis."""
    inner = (dprobs * probs).sum(axis=-1, keepdims=True)
    return probs * (dprobs - inner)


def zero_grads(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


def denoiser_backward(
    params: dict[str, np.ndarray],
    config: DenoiserConfig,
    cache: dict,
    dlogits: np.ndarray,
    grads: dict[str, np.ndarray],
    dlen_logits: np.ndarray | None = None,
) -> None:
    """Accumulate parameter gradients for one forward pass into ``grads``.

    ``dlogits`` is the loss gradient at the pre-softmax logits (use
    ``softmax_backward`` first when the loss differentiates probabilities).
    ``dlen_logits`` optionally backpropagates the length-classification
    head through the shared gloss embeddings.
    """
    x, t = cache["x"], cache["t"]
    y, s, h, m, u, h2 = cache["y"], cache["s"], cache["h"], cache["m"], cache["u"], cache["h2"]
    condition: ConditionEmbedding = cache["condition"]
    de = config.piece_dim

    flat = lambda a: a.reshape(-1, a.shape[-1])  # noqa: E731

    grads["out_w"] += flat(dlogits).T @ flat(h2)
    grads["out_b"] += flat(dlogits).sum(axis=0)
    dh2 = dlogits @ params["out_w"]

    dh = dh2.copy()
    grads["mix_w2"] += flat(dh2).T @ flat(u)
    grads["mix_b2"] += flat(dh2).sum(axis=0)
    du = dh2 @ params["mix_w2"]

    dm = _resample_backward(du, axis=-3)
    da1 = dm * (1.0 - m * m)
    grads["mix_w1"] += flat(da1).T @ flat(h)
    grads["mix_b1"] += flat(da1).sum(axis=0)
    dh += da1 @ params["mix_w1"]

    grads["ada_scale"][t - 1] += flat(dh * y).sum(axis=0)
    grads["ada_shift"][t - 1] += flat(dh).sum(axis=0)
    dy = params["ada_scale"][t - 1] * dh

    de_full = (
        dy
        - dy.mean(axis=-1, keepdims=True)
        - y * (dy * y).mean(axis=-1, keepdims=True)
    ) / s

    dtok = de_full[..., :de]
    dcol = de_full[..., de : 2 * de]
    dpos = de_full[..., 2 * de : 3 * de]
    dcond = de_full[..., 3 * de :]

    np.add.at(grads["tok_emb"], (x - 1).reshape(-1), flat(dtok))
    grads["col_emb"] += dcol.reshape(-1, x.shape[-1], de).sum(axis=0)
    grads["pos_emb"][: cache["n_frames"]] += (
        dpos.reshape(-1, cache["n_frames"], x.shape[-1], de).sum(axis=(0, 2))
    )
    dcpiece = flat(dcond).sum(axis=0)
    grads["cond_w"] += np.outer(dcpiece, condition.pooled)
    grads["cond_b"] += dcpiece
    dpooled = params["cond_w"].T @ dcpiece
    np.add.at(
        grads["gloss_emb"],
        condition.gloss_ids,
        np.broadcast_to(dpooled / condition.gloss_ids.shape[0], condition.vectors.shape),
    )

    if dlen_logits is not None:
        grads["len_w"] += dlen_logits.T @ condition.vectors
        grads["len_b"] += dlen_logits.sum(axis=0)
        dvec = dlen_logits @ params["len_w"]
        np.add.at(grads["gloss_emb"], condition.gloss_ids, dvec)


# ---------------------------------------------------------------------------
# Training step
# ---------------------------------------------------------------------------


@dataclass
class TrainSample:
    """One gloss-to-tokens training pair with its length supervision."""

    tokens: TokenGrid
    gloss_ids: np.ndarray
    lengths: np.ndarray  # per-gloss frame counts, classes in [1, P]


def sample_and_grads(
    params: dict[str, np.ndarray],
    config: DenoiserConfig,
    sample: TrainSample,
    schedule: NoiseSchedule,
    t: int,
    rng: np.random.Generator,
    lam: float,
    delta: float,
    grads: dict[str, np.ndarray],
) -> LossBreakdown:
    """Corrupt one sample at timestep t, accumulate gradients, return losses."""
    sample.tokens.require_clean()
    x0 = sample.tokens.values
    x_t = sample_corrupted(sample.tokens, t, schedule, rng).values

    condition = condition_embedding(params, sample.gloss_ids)
    probs, cache = denoiser_forward(params, config, x_t, t, condition, want_cache=True)

    len_scores = length_logits(params, condition)
    l_len = length_loss(len_scores, sample.lengths, delta)
    dlen = length_loss_grad(len_scores, sample.lengths, delta)

    breakdown = combined_loss(x0, x_t, t, probs, schedule, lam=lam, delta=delta, l_len=l_len)
    dprobs = loss_probs_grad(x0, x_t, t, probs, schedule, lam)
    dlogits = softmax_backward(probs, dprobs)
    denoiser_backward(params, config, cache, dlogits, grads, dlen_logits=dlen)
    return breakdown


def train_step(
    params: dict[str, np.ndarray],
    config: DenoiserConfig,
    batch: list[TrainSample],
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    lr: float,
    lam: float = 1.0,
    delta: float = 0.01,
) -> tuple[dict[str, np.ndarray], LossBreakdown, int]:
    """One plain gradient-descent step on a batch; returns updated params.

    Timesteps are drawn uniformly from {1..T} per sample.  Gradients are
    averaged over the batch.  Aborts on non-finite gradients.
    """
    if lr <= 0.0:
        raise DenoiserError("learning rate must be positive")
    if not batch:
        raise DenoiserError("empty batch")
    grads = zero_grads(params)
    l_vb = l_aux = l_len = 0.0
    t_sum = 0
    for sample in batch:
        t = int(rng.integers(1, schedule.timesteps + 1))
        t_sum += t
        part = sample_and_grads(
            params, config, sample, schedule, t, rng, lam, delta, grads
        )
        l_vb += part.l_vb
        l_aux += part.l_aux
        l_len += part.l_len
    scale = 1.0 / len(batch)
    new_params = {}
    for key, value in params.items():
        g = grads[key] * scale
        if not np.all(np.isfinite(g)):
            raise DenoiserError(f"non-finite gradient in {key!r}; aborting update")
        new_params[key] = value - lr * g
    breakdown = LossBreakdown(
        l_vb=l_vb * scale, l_aux=l_aux * scale, l_len=l_len * scale, lam=lam, delta=delta
    )
    return new_params, breakdown, t_sum // len(batch)


class TrainableDenoiser:
    """Callable view of a parameter set bound to one gloss condition."""

    def __init__(
        self,
        params: dict[str, np.ndarray],
        config: DenoiserConfig,
        gloss_ids: np.ndarray,
    ) -> None:
        self.params = params
        self.config = config
        self.condition = condition_embedding(params, gloss_ids)

    def __call__(self, x_values: np.ndarray, t: int) -> np.ndarray:
        probs, _ = denoiser_forward(
            self.params, self.config, x_values, t, self.condition
        )
        return probs


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(
    path, params: dict[str, np.ndarray], config: DenoiserConfig, extra: dict | None = None
) -> None:
    """Versioned binary checkpoint with explicit shape metadata."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": config.to_dict(),
        "shapes": {k: list(v.shape) for k, v in params.items()},
        "extra": extra or {},
    }
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **params)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], DenoiserConfig, dict]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise DenoiserError(
                f"unsupported checkpoint version {meta.get('version')!r}"
            )
        params = {}
        for key, shape in meta["shapes"].items():
            arr = np.asarray(data[key], dtype=np.float64)
            if list(arr.shape) != shape:
                raise DenoiserError(f"checkpoint shape mismatch for {key!r}")
            params[key] = arr
    return params, DenoiserConfig.from_dict(meta["config"]), meta.get("extra", {})


__all__ = [
    "ConditionEmbedding",
    "DenoiserConfig",
    "DenoiserError",
    "TrainSample",
    "TrainableDenoiser",
    "adaln",
    "condition_embedding",
    "denoiser_backward",
    "denoiser_forward",
    "init_params",
    "length_logits",
    "load_checkpoint",
    "sample_and_grads",
    "save_checkpoint",
    "softmax_backward",
    "temporal_resample",
    "train_step",
    "zero_grads",
]
