"""Vector-quantized pose codec: patch encoding, codebook, chain decoding.

A skeleton sequence of shape (frames, joints, 3) is split into local
patches (pose, right hand, left hand by default), each patch is mapped by
a per-frame linear layer to an h-dimensional feature, and each feature is
snapped to its nearest codebook vector.  Decoding walks every patch's
skeleton chain: each joint is an affine function of the patch feature
concatenated with its parent joint's already-predicted coordinates, so
spatial structure is explicit in the reconstruction.

The codebook is fitted with k-means plus exponential-moving-average
refinement and dead-code reseeding; the encoder is a seeded random
projection and the chain decoder is fitted by sequential least squares.
The quantization losses keep the usual stop-gradient split: the codebook
alignment term moves only code vectors, the commitment term only the
encoder.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from sklearn.base import BaseEstimator

from .kernel import TokenGrid


class CodecError(ValueError):
    """Raised for invalid skeletons, chains or codec inputs."""


# ---------------------------------------------------------------------------
# Skeleton chains and pose containers
# ---------------------------------------------------------------------------


@dataclass
class SkeletonChain:
    """Joint hierarchy of one patch.

    ``joints`` are indices into the full skeleton; ``parents`` are indices
    within the patch (-1 marks a root).  The hierarchy must be acyclic
    with a topological order.
    """

    name: str
    joints: np.ndarray
    parents: np.ndarray

    def __post_init__(self) -> None:
        self.joints = np.asarray(self.joints, dtype=np.int64)
        self.parents = np.asarray(self.parents, dtype=np.int64)
        n = self.joints.shape[0]
        if self.parents.shape != (n,):
            raise CodecError(f"chain {self.name!r}: one parent entry per joint")
        if np.any(self.parents >= n) or np.any(self.parents < -1):
            raise CodecError(f"chain {self.name!r}: parent index out of range")
        self.order = self._topological_order()

    def _topological_order(self) -> np.ndarray:
        n = self.joints.shape[0]
        order: list[int] = []
        placed = np.zeros(n, dtype=bool)
        while len(order) < n:
            progressed = False
            for j in range(n):
                if placed[j]:
                    continue
                p = self.parents[j]
                if p == -1 or placed[p]:
                    order.append(j)
                    placed[j] = True
                    progressed = True
            if not progressed:
                raise CodecError(f"chain {self.name!r} contains a cycle")
        return np.asarray(order, dtype=np.int64)

    @property
    def n_joints(self) -> int:
        return int(self.joints.shape[0])


def load_chains(path=None) -> dict:
    """Read a chain configuration file (defaults to the packaged skeleton)."""
    if path is None:
        text = (resources.files("posediff") / "data/default_chains.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    raw = json.loads(text)
    chains = {
        name: SkeletonChain(
            name=name,
            joints=np.asarray(spec["joints"]),
            parents=np.asarray(spec["parents"]),
        )
        for name, spec in raw["patches"].items()
    }
    return {"patches": chains, "wrist_anchors": raw.get("wrist_anchors", {})}


def joint_mode_chain(config: dict) -> SkeletonChain:
    """Collapse all patches into one chain (ablation: one token per frame).

    Hand roots are re-parented onto their wrist anchchor joints so the
    combined skeleton stays a single connected hierarchy.
    """
    patches: dict[str, SkeletonChain] = config["patches"]
    anchors: dict[str, int] = config["wrist_anchors"]
    joints: list[int] = []
    parents: list[int] = []
    offset_of: dict[str, int] = {}
    for name, chain in patches.items():
        offset_of[name] = len(joints)
        joints.extend(chain.joints.tolist())
        for j, p in enumerate(chain.parents):
            if p != -1:
                parents.append(offset_of[name] + int(p))
            elif name in anchors:
                anchor_global = anchors[name]
                parents.append(joints.index(anchor_global))
            else:
                parents.append(-1)
    return SkeletonChain(name="joint", joints=np.asarray(joints), parents=np.asarray(parents))


@dataclass
class PoseSequence:
    """Frames-by-joints-by-coordinates skeleton data (K = 3)."""

    frames: np.ndarray

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[-1] != 3:
            raise CodecError("pose frames must have shape (N, J, 3)")
        if not np.all(np.isfinite(frames)):
            raise CodecError("pose coordinates must be finite")
        self.frames = frames

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_joints(self) -> int:
        return self.frames.shape[1]


def validate_patches(chains: list[SkeletonChain], n_joints: int) -> None:
    """Patch joint sets must be disjoint and cover the skeleton."""
    seen = np.zeros(n_joints, dtype=int)
    for chain in chains:
        if np.any(chain.joints < 0) or np.any(chain.joints >= n_joints):
            raise CodecError(f"chain {chain.name!r} references missing joints")
        seen[chain.joints] += 1
    if np.any(seen != 1):
        raise CodecError("patch joint sets must be disjoint and covering")


# ---------------------------------------------------------------------------
# Codebook
# ---------------------------------------------------------------------------


@dataclass
class Codebook:
    """V code vectors of dimension h plus assignment tallies."""

    vectors: np.ndarray
    usage_counts: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] < 1:
            raise CodecError("codebook needs at least one vector")
        if not np.all(np.isfinite(vectors)):
            raise CodecError("codebook vectors must be finite")
        self.vectors = vectors
        if self.usage_counts is None:
            self.usage_counts = np.zeros(vectors.shape[0], dtype=np.int64)

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def nearest_codes(features: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """1-based index of the closest code per row; ties take the lowest index."""
    d = (
        (features * features).sum(axis=1, keepdims=True)
        - 2.0 * features @ vectors.T
        + (vectors * vectors).sum(axis=1)
    )
    return d.argmin(axis=1).astype(np.int64) + 1


def quantize(e: np.ndarray, codebook: Codebook) -> tuple[np.ndarray, np.ndarray]:
    """Snap features (..., h) to the codebook; returns (z, 1-based indices)."""
    e = np.asarray(e, dtype=np.float64)
    flat = e.reshape(-1, e.shape[-1])
    if flat.shape[1] != codebook.dim:
        raise CodecError("feature dimension does not match the codebook")
    idx = nearest_codes(flat, codebook.vectors)
    z = codebook.vectors[idx - 1].reshape(e.shape)
    return z, idx.reshape(e.shape[:-1])


def quantization_error(features: np.ndarray, codebook: Codebook) -> float:
    z, _ = quantize(features, codebook)
    return float(((features - z) ** 2).sum())


def fit_codebook(
    features: np.ndarray,
    size: int,
    rng: np.random.Generator,
    iters: int = 25,
    ema_decay: float = 0.5,
    history: list | None = None,
) -> Codebook:
    """K-means style codebook fit with EMA refinement and dead-code reseeding.

    When the data has at most ``size`` distinct rows they become the
    centroids directly (exact fit).  Otherwise centroids start from a
    distance-weighted seeding and each iteration moves used codes part of
    the way toward their assigned means, which never increases the total
    quantization error; dead codes are reseeded onto random data rows.
    ``history`` collects the error after each refinement step.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise CodecError("codebook fitting expects (n_samples, h) features")
    n = features.shape[0]
    if n < size:
        raise CodecError(f"need at least {size} samples to fit {size} codes")

    unique = np.unique(features, axis=0)
    if unique.shape[0] <= size:
        vectors = np.concatenate(
            [
                unique,
                features[rng.integers(0, n, size=size - unique.shape[0])],
            ]
        )
    else:
        # Distance-weighted greedy seeding.
        vectors = np.empty((size, features.shape[1]))
        vectors[0] = features[rng.integers(0, n)]
        d2 = ((features - vectors[0]) ** 2).sum(axis=1)
        for i in range(1, size):
            total = d2.sum()
            if total <= 0.0:
                vectors[i] = features[rng.integers(0, n)]
                continue
            vectors[i] = features[rng.choice(n, p=d2 / total)]
            d2 = np.minimum(d2, ((features - vectors[i]) ** 2).sum(axis=1))

    book = Codebook(vectors=vectors)
    idx = nearest_codes(features, book.vectors) - 1
    if history is not None:
        history.append(quantization_error(features, book))
    for _ in range(iters):
        counts = np.bincount(idx, minlength=size)
        sums = np.zeros_like(book.vectors)
        np.add.at(sums, idx, features)
        used = counts > 0
        means = sums[used] / counts[used][:, None]
        book.vectors[used] = ema_decay * book.vectors[used] + (1 - ema_decay) * means
        dead = ~used
        if np.any(dead):
            book.vectors[dead] = features[rng.integers(0, n, size=int(dead.sum()))]
        idx = nearest_codes(features, book.vectors) - 1
        if history is not None:
            history.append(float(((features - book.vectors[idx]) ** 2).sum()))
    book.usage_counts = np.bincount(idx, minlength=size).astype(np.int64)
    return book


# ---------------------------------------------------------------------------
# Patch encoder
# ---------------------------------------------------------------------------


def patch_inputs(frames: np.ndarray, chains: list[SkeletonChain]) -> list[np.ndarray]:
    """Flattened per-patch coordinates, one (N, Jp*3) array per chain."""
    return [frames[:, c.joints, :].reshape(frames.shape[0], -1) for c in chains]


def encode_pose(
    frames: np.ndarray,
    chains: list[SkeletonChain],
    weights: list[np.ndarray],
    biases: list[np.ndarray],
) -> np.ndarray:
    """Per-frame linear patch features; shape (N, n_patches, h).

    Purely frame-local: permuting frames permutes features identically.
    """
    cols = []
    for x, w, b in zip(patch_inputs(frames, chains), weights, biases):
        if w.shape[1] != x.shape[1]:
            raise CodecError(
                f"encoder weight expects {w.shape[1]} inputs, patch has {x.shape[1]}"
            )
        cols.append(x @ w.T + b)
    return np.stack(cols, axis=1)


def commitment_loss(
    frames: np.ndarray,
    chains: list[SkeletonChain],
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    z_frozen: np.ndarray,
    beta: float,
) -> float:
    """beta * ||z - e||^2 with the quantized features held constant."""
    e = encode_pose(frames, chains, weights, biases)
    return float(beta * ((z_frozen - e) ** 2).sum())


def commitment_grads(
    frames: np.ndarray,
    chains: list[SkeletonChain],
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    z_frozen: np.ndarray,
    beta: float,
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Analytic d(commitment)/d(encoder params)."""
    e = encode_pose(frames, chains, weights, biases)
    de = 2.0 * beta * (e - z_frozen)  # (N, C, h)
    grads_w, grads_b = [], []
    for c, x in enumerate(patch_inputs(frames, chains)):
        grads_w.append(de[:, c, :].T @ x)
        grads_b.append(de[:, c, :].sum(axis=0))
    return grads_w, grads_b


def codebook_alignment_loss(
    e_frozen: np.ndarray, vectors: np.ndarray, assignments: np.ndarray
) -> float:
    """||sg[e] - z||^2 with encoder features and assignments held constant."""
    z = vectors[assignments.reshape(-1) - 1].reshape(e_frozen.shape)
    return float(((e_frozen - z) ** 2).sum())


def codebook_alignment_grads(
    e_frozen: np.ndarray, vectors: np.ndarray, assignments: np.ndarray
) -> np.ndarray:
    """Analytic d(alignment)/d(code vectors)."""
    flat_e = e_frozen.reshape(-1, e_frozen.shape[-1])
    idx = assignments.reshape(-1) - 1
    grads = np.zeros_like(vectors)
    np.add.at(grads, idx, 2.0 * (vectors[idx] - flat_e))
    return grads


# ---------------------------------------------------------------------------
# Structured chain decoding
# ---------------------------------------------------------------------------


def spl_decode(
    features: np.ndarray, chain: SkeletonChain, params: list[tuple[np.ndarray, np.ndarray]]
) -> np.ndarray:
    """Predict joints in topological order from one patch's features.

    ``features`` is (N, h); every joint applies an affine map to the patch
    feature concatenated with its parent's predicted coordinates (roots use
    the feature alone).  Returns (N, Jp, 3).
    """
    n = features.shape[0]
    out = np.zeros((n, chain.n_joints, 3))
    for j in chain.order:
        a, c = params[j]
        if chain.parents[j] == -1:
            inp = features
        else:
            inp = np.concatenate([features, out[:, chain.parents[j], :]], axis=1)
        if a.shape[1] != inp.shape[1]:
            raise CodecError(
                f"joint {j} head expects {a.shape[1]} inputs, got {inp.shape[1]}"
            )
        out[:, j, :] = inp @ a.T + c
    return out


def spl_recon_loss(
    features: np.ndarray,
    target: np.ndarray,
    chain: SkeletonChain,
    params: list[tuple[np.ndarray, np.ndarray]],
) -> float:
    pred = spl_decode(features, chain, params)
    return float(((pred - target) ** 2).sum())


def spl_recon_grads(
    features: np.ndarray,
    target: np.ndarray,
    chain: SkeletonChain,
    params: list[tuple[np.ndarray, np.ndarray]],
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Analytic gradients of the squared reconstruction error per joint head.

    Children feed their parent's prediction forward, so gradients flow
    back through the chain in reverse topological order.
    """
    n, h = features.shape
    pred = spl_decode(features, chain, params)
    dpred = 2.0 * (pred - target)  # (N, Jp, 3)
    # Accumulate child contributions parent-ward.
    for j in chain.order[::-1]:
        p = chain.parents[j]
        if p != -1:
            a, _ = params[j]
            dpred[:, p, :] += dpred[:, j, :] @ a[:, h:]
    grads = []
    for j in range(chain.n_joints):
        if chain.parents[j] == -1:
            inp = features
        else:
            inp = np.concatenate([features, pred[:, chain.parents[j], :]], axis=1)
        grads.append((dpred[:, j, :].T @ inp, dpred[:, j, :].sum(axis=0)))
    return grads


def fit_spl_least_squares(
    features: np.ndarray, target: np.ndarray, chain: SkeletonChain
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Sequential least-squares fit of every joint head in topological order.

    Each joint is regressed on [feature, parent prediction, 1] with the
    parent prediction coming from the already-fitted upstream heads, so
    training matches the inference-time dependency structure.
    """
    n, h = features.shape
    pred = np.zeros_like(target)
    params: list[tuple[np.ndarray, np.ndarray] | None] = [None] * chain.n_joints
    for j in chain.order:
        if chain.parents[j] == -1:
            inp = features
        else:
            inp = np.concatenate([features, pred[:, chain.parents[j], :]], axis=1)
        design = np.concatenate([inp, np.ones((n, 1))], axis=1)
        sol, *_ = np.linalg.lstsq(design, target[:, j, :], rcond=None)
        a = sol[:-1].T
        c = sol[-1]
        params[j] = (a, c)
        pred[:, j, :] = inp @ a.T + c
    return params  # type: ignore[return-value]


def vqvae_loss(
    s_patches: list[np.ndarray],
    recon_patches: list[np.ndarray],
    e: np.ndarray,
    z: np.ndarray,
    beta_commit: float,
) -> float:
    """Per-patch squared reconstruction error plus quantization terms.

    Numerically the codebook-alignment and commitment terms share the same
    value ||e - z||^2; they differ only in which side receives gradients
    (see the dedicated gradient helpers).
    """
    recon = sum(float(((s - r) ** 2).sum()) for s, r in zip(s_patches, recon_patches))
    quant = float(((e - z) ** 2).sum())
    return recon + quant + beta_commit * quant


# ---------------------------------------------------------------------------
# Estimator
# ---------------------------------------------------------------------------


class PoseCodec(BaseEstimator):
    """Quantizes pose sequences into token grids and reconstructs them.

    Parameters
    ----------
    codebook_size : int, default 2048
        Number of code vectors shared by all patch columns.
    feature_dim : int, default 256
        Patch feature dimension h.
    patch_mode : {"separate", "joint"}, default "separate"
        Three local patches per frame, or the whole skeleton as one token.
    commitment_weight : float, default 0.25
        Weight of the commitment term in the quantization loss.
    kmeans_iters : int, default 25
        Codebook refinement iterations.
    random_state : int, default 0
        Seed for the encoder projection and codebook fitting.
    chains_path : str or None
        Chain configuration file; None loads the packaged 50-joint skeleton.
    """

    def __init__(
        self,
        codebook_size: int = 2048,
        feature_dim: int = 256,
        patch_mode: str = "separate",
        commitment_weight: float = 0.25,
        kmeans_iters: int = 25,
        random_state: int = 0,
        chains_path: str | None = None,
    ):
        self.codebook_size = codebook_size
        self.feature_dim = feature_dim
        self.patch_mode = patch_mode
        self.commitment_weight = commitment_weight
        self.kmeans_iters = kmeans_iters
        self.random_state = random_state
        self.chains_path = chains_path

    # -- layout -------------------------------------------------------------

    def _resolve_chains(self) -> list[SkeletonChain]:
        config = load_chains(self.chains_path)
        if self.patch_mode == "separate":
            chains = list(config["patches"].values())
        elif self.patch_mode == "joint":
            chains = [joint_mode_chain(config)]
        else:
            raise CodecError(f"unknown patch_mode {self.patch_mode!r}")
        return chains

    @property
    def n_channels_(self) -> int:
        return len(self.chains_)

    # -- fitting ------------------------------------------------------------

    def fit(self, X, y=None):
        """Fit encoder projection, codebook and chain decoder on sequences.

        ``X`` is a list of (N, J, 3) arrays or :class:`PoseSequence`.
        """
        seqs = [x.frames if isinstance(x, PoseSequence) else np.asarray(x, float) for x in X]
        if not seqs:
            raise CodecError("need at least one sequence to fit")
        chains = self._resolve_chains()
        n_joints = sum(c.n_joints for c in chains)
        for s in seqs:
            if s.ndim != 3 or s.shape[1] != n_joints or s.shape[2] != 3:
                raise CodecError(
                    f"expected sequences of shape (N, {n_joints}, 3), got {s.shape}"
                )
        validate_patches(chains, n_joints)
        rng = np.random.default_rng(self.random_state)

        self.chains_ = chains
        self.encoder_weights_ = [
            rng.normal(0.0, (c.n_joints * 3) ** -0.5, size=(self.feature_dim, c.n_joints * 3))
            for c in chains
        ]
        self.encoder_biases_ = [np.zeros(self.feature_dim) for _ in chains]

        stacked = np.concatenate(seqs, axis=0)
        e = encode_pose(stacked, chains, self.encoder_weights_, self.encoder_biases_)
        self.codebook_ = fit_codebook(
            e.reshape(-1, self.feature_dim),
            self.codebook_size,
            rng,
            iters=self.kmeans_iters,
        )
        z, _ = quantize(e, self.codebook_)
        self.decoder_ = [
            fit_spl_least_squares(z[:, c, :], stacked[:, chain.joints, :], chain)
            for c, chain in enumerate(self.chains_)
        ]
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "codebook_"):
            raise CodecError("codec is not fitted")

    # -- transform paths ----------------------------------------------------

    def encode(self, frames: np.ndarray) -> np.ndarray:
        self._check_fitted()
        frames = np.asarray(frames, dtype=np.float64)
        return encode_pose(frames, self.chains_, self.encoder_weights_, self.encoder_biases_)

    def transform(self, frames: np.ndarray) -> TokenGrid:
        """Encode and quantize one sequence into a token grid."""
        _, idx = quantize(self.encode(frames), self.codebook_)
        return TokenGrid(values=idx, vocab_size=self.codebook_.size)

    def latents(self, grid: TokenGrid) -> np.ndarray:
        """Code vectors of a token grid; shape (N, C, h)."""
        self._check_fitted()
        if np.any(grid.values > self.codebook_.size):
            raise CodecError("token grid contains non-code states")
        return self.codebook_.vectors[grid.values - 1]

    def inverse_transform(self, grid: TokenGrid) -> np.ndarray:
        """Decode a token grid back to (N, J, 3) coordinates."""
        self._check_fitted()
        z = self.latents(grid)
        n_joints = sum(c.n_joints for c in self.chains_)
        out = np.zeros((grid.n_frames, n_joints, 3))
        for c, chain in enumerate(self.chains_):
            out[:, chain.joints, :] = spl_decode(z[:, c, :], chain, self.decoder_[c])
        return out

    def roundtrip(self, frames: np.ndarray) -> tuple[TokenGrid, np.ndarray, float]:
        """Encode, quantize and decode; returns (grid, reconstruction, mse)."""
        grid = self.transform(frames)
        recon = self.inverse_transform(grid)
        mse = float(((np.asarray(frames, float) - recon) ** 2).mean())
        return grid, recon, mse


# ---------------------------------------------------------------------------
# Codec checkpointing
# ---------------------------------------------------------------------------

CODEC_VERSION = 1


def save_codec(path, codec: PoseCodec) -> None:
    """Versioned, shape-tagged codec checkpoint (npz)."""
    codec._check_fitted()
    arrays: dict[str, np.ndarray] = {
        "codebook": codec.codebook_.vectors,
        "usage": codec.codebook_.usage_counts,
    }
    chain_meta = []
    for c, chain in enumerate(codec.chains_):
        arrays[f"enc_w_{c}"] = codec.encoder_weights_[c]
        arrays[f"enc_b_{c}"] = codec.encoder_biases_[c]
        for j, (a, b) in enumerate(codec.decoder_[c]):
            arrays[f"spl_a_{c}_{j}"] = a
            arrays[f"spl_b_{c}_{j}"] = b
        chain_meta.append(
            {
                "name": chain.name,
                "joints": chain.joints.tolist(),
                "parents": chain.parents.tolist(),
            }
        )
    meta = {
        "version": CODEC_VERSION,
        "params": codec.get_params(),
        "chains": chain_meta,
        "shapes": {k: list(v.shape) for k, v in arrays.items()},
    }
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_codec(path) -> PoseCodec:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("version") != CODEC_VERSION:
            raise CodecError(f"unsupported codec version {meta.get('version')!r}")
        for key, shape in meta["shapes"].items():
            if list(data[key].shape) != shape:
                raise CodecError(f"codec checkpoint shape mismatch for {key!r}")
        codec = PoseCodec(**meta["params"])
        codec.chains_ = [
            SkeletonChain(
                name=cm["name"],
                joints=np.asarray(cm["joints"]),
                parents=np.asarray(cm["parents"]),
            )
            for cm in meta["chains"]
        ]
        codec.codebook_ = Codebook(
            vectors=np.asarray(data["codebook"], dtype=np.float64),
            usage_counts=np.asarray(data["usage"], dtype=np.int64),
        )
        codec.encoder_weights_ = []
        codec.encoder_biases_ = []
        codec.decoder_ = []
        for c, chain in enumerate(codec.chains_):
            codec.encoder_weights_.append(np.asarray(data[f"enc_w_{c}"], float))
            codec.encoder_biases_.append(np.asarray(data[f"enc_b_{c}"], float))
            codec.decoder_.append(
                [
                    (
                        np.asarray(data[f"spl_a_{c}_{j}"], float),
                        np.asarray(data[f"spl_b_{c}_{j}"], float),
                    )
                    for j in range(chain.n_joints)
                ]
            )
    return codec


__all__ = [
    "Codebook",
    "CodecError",
    "PoseCodec",
    "PoseSequence",
    "SkeletonChain",
    "codebook_alignment_grads",
    "codebook_alignment_loss",
    "commitment_grads",
    "commitment_loss",
    "encode_pose",
    "fit_codebook",
    "fit_spl_least_squares",
    "joint_mode_chain",
    "load_chains",
    "load_codec",
    "nearest_codes",
    "patch_inputs",
    "quantization_error",
    "quantize",
    "save_codec",
    "spl_decode",
    "spl_recon_grads",
    "spl_recon_loss",
    "validate_patches",
    "vqvae_loss",
]
