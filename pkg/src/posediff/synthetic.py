"""Synthetic gloss-to-pose corpora with planted alignments.

Every gloss maps to a reusable motion prototype assembled from small
per-patch motif pools: each patch (pose, right hand, left hand) draws its
trajectory independently, so patches carry combinatorially independent
detail the way hands and body do in real signing.  A sample concatenates
the prototypes of its gloss sequence, records the exact per-gloss frame
counts as gold alignment, and adds a smooth per-sample perturbation.

Randomness is pinned to the PCG64 bit generator with hierarchical seed
sequences, so a corpus regenerates identically on every platform.  The
dataset file format is JSON lines: a header record carrying the spec hash
and RNG identifier, then one sample per line with coordinates written as
9-significant-digit decimals (the decimals are the canonical values; a
save/load cycle is lossless).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .codec import SkeletonChain, load_chains

RNG_NAME = "pcg64"
FORMAT_NAME = "posediff-dataset"
FORMAT_VERSION = 1

# Tags keep the per-purpose seed streams disjoint.
_TAG_MOTIF = 1
_TAG_GLOSS = 2
_TAG_SAMPLE = 3


class DatasetError(ValueError):
    """Raised for malformed dataset files or invalid corpus specs."""


def _rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


@dataclass
class SyntheticCorpusSpec:
    """Settings of a generated corpus; hashable for the file header."""

    gloss_vocab_size: int = 20
    sequences: int = 100
    glosses_per_sequence: tuple[int, int] = (1, 4)
    frames_per_gloss: tuple[int, int] = (12, 20)  # mean 16
    motifs_per_patch: int = 6
    noise_std: float = 0.0
    length_mode: str = "per_gloss"  # or "uniform": redraw per occurrence
    seed: int = 0
    chains_path: str | None = None

    def __post_init__(self) -> None:
        if self.gloss_vocab_size < 1 or self.sequences < 0:
            raise DatasetError("vocab and sequence counts must be positive")
        for lo, hi in (self.glosses_per_sequence, self.frames_per_gloss):
            if lo < 1 or hi < lo:
                raise DatasetError("ranges must be nonempty with lo <= hi")
        if self.noise_std < 0:
            raise DatasetError("noise_std must be nonnegative")
        if self.length_mode not in ("per_gloss", "uniform"):
            raise DatasetError(f"unknown length_mode {self.length_mode!r}")

    def to_dict(self) -> dict:
        return {
            "gloss_vocab_size": self.gloss_vocab_size,
            "sequences": self.sequences,
            "glosses_per_sequence": list(self.glosses_per_sequence),
            "frames_per_gloss": list(self.frames_per_gloss),
            "motifs_per_patch": self.motifs_per_patch,
            "noise_std": self.noise_std,
            "length_mode": self.length_mode,
            "seed": self.seed,
            "chains_path": self.chains_path,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticCorpusSpec":
        d = dict(d)
        d["glosses_per_sequence"] = tuple(d["glosses_per_sequence"])
        d["frames_per_gloss"] = tuple(d["frames_per_gloss"])
        return cls(**d)

    def sha256(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()

    def gloss_vocab(self) -> list[str]:
        width = len(str(self.gloss_vocab_size - 1))
        return [f"gloss{i:0{width}d}" for i in range(self.gloss_vocab_size)]


@dataclass
class AlignedSample:
    """Gloss tokens, their pose frames, and the gold per-gloss lengths."""

    glosses: list[str]
    frames: np.ndarray  # (N, J, 3)
    lengths: np.ndarray  # (M,) with sum == N

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.lengths = np.asarray(self.lengths, dtype=np.int64)
        if len(self.glosses) != self.lengths.shape[0]:
            raise DatasetError("one length per gloss required")
        if int(self.lengths.sum()) != self.frames.shape[0]:
            raise DatasetError("gold lengths must partition the frames")


@dataclass
class _Motif:
    base: np.ndarray
    amp: np.ndarray
    freq: float
    phase: np.ndarray

    def eval(self, tau: np.ndarray) -> np.ndarray:
        return self.base + self.amp * np.sin(
            2 * np.pi * (self.freq * tau[:, None, None] + self.phase)
        )


class CorpusGenerator:
    """Deterministic sample factory for one corpus spec."""

    def __init__(self, spec: SyntheticCorpusSpec):
        self.spec = spec
        config = load_chains(spec.chains_path)
        self.chains: list[SkeletonChain] = list(config["patches"].values())
        self.n_joints = sum(c.n_joints for c in self.chains)
        self._motifs = [
            [self._make_motif(ci, mi, c) for mi in range(spec.motifs_per_patch)]
            for ci, c in enumerate(self.chains)
        ]
        self._combo, self._gloss_len = self._assign_glosses()

    def _make_motif(self, patch_idx: int, motif_idx: int, chain: SkeletonChain) -> _Motif:
        rng = _rng(self.spec.seed, _TAG_MOTIF, patch_idx, motif_idx)
        shape = (chain.n_joints, 3)
        return _Motif(
            base=rng.normal(0.0, 0.4, size=shape),
            amp=rng.uniform(0.1, 0.3, size=shape),
            freq=float(rng.uniform(0.5, 1.5)),
            phase=rng.uniform(0.0, 2 * np.pi, size=shape),
        )

    def _assign_glosses(self) -> tuple[np.ndarray, np.ndarray]:
        combos = np.zeros((self.spec.gloss_vocab_size, len(self.chains)), dtype=np.int64)
        lengths = np.zeros(self.spec.gloss_vocab_size, dtype=np.int64)
        lo, hi = self.spec.frames_per_gloss
        for g in range(self.spec.gloss_vocab_size):
            rng = _rng(self.spec.seed, _TAG_GLOSS, g)
            combos[g] = rng.integers(0, self.spec.motifs_per_patch, size=len(self.chains))
            lengths[g] = int(rng.integers(lo, hi + 1))
        return combos, lengths

    def gloss_frames(self, gloss_idx: int, n_frames: int) -> np.ndarray:
        """Noise-free prototype frames of one gloss."""
        tau = (np.arange(n_frames) + 0.5) / n_frames
        out = np.zeros((n_frames, self.n_joints, 3))
        for ci, chain in enumerate(self.chains):
            motif = self._motifs[ci][self._combo[gloss_idx, ci]]
            out[:, chain.joints, :] = motif.eval(tau)
        return out

    def sample(self, index: int) -> AlignedSample:
        spec = self.spec
        rng = _rng(spec.seed, _TAG_SAMPLE, index)
        lo_m, hi_m = spec.glosses_per_sequence
        n_glosses = int(rng.integers(lo_m, hi_m + 1))
        gloss_ids = rng.integers(0, spec.gloss_vocab_size, size=n_glosses)
        lo, hi = spec.frames_per_gloss
        vocab = spec.gloss_vocab()
        pieces, lengths = [], []
        for g in gloss_ids:
            n = (
                int(self._gloss_len[g])
                if spec.length_mode == "per_gloss"
                else int(rng.integers(lo, hi + 1))
            )
            frames = self.gloss_frames(int(g), n)
            if spec.noise_std > 0:
                tau = (np.arange(n) + 0.5) / n
                freq = rng.uniform(0.5, 2.0)
                phase = rng.uniform(0.0, 2 * np.pi, size=(self.n_joints, 3))
                frames = frames + spec.noise_std * np.sin(
                    2 * np.pi * (freq * tau[:, None, None] + phase)
                )
            pieces.append(frames)
            lengths.append(n)
        return AlignedSample(
            glosses=[vocab[int(g)] for g in gloss_ids],
            frames=np.concatenate(pieces, axis=0),
            lengths=np.asarray(lengths, dtype=np.int64),
        )


def generate_corpus(spec: SyntheticCorpusSpec) -> list[AlignedSample]:
    """All samples of the corpus, deterministic per spec (seed included)."""
    gen = CorpusGenerator(spec)
    return [gen.sample(i) for i in range(spec.sequences)]


def split_corpus(
    samples: list[AlignedSample],
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
) -> dict[str, list[AlignedSample]]:
    """Deterministic contiguous train/dev/test split."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DatasetError("split fractions must sum to 1")
    n = len(samples)
    n_train = int(round(fractions[0] * n))
    n_dev = int(round(fractions[1] * n))
    return {
        "train": samples[:n_train],
        "dev": samples[n_train : n_train + n_dev],
        "test": samples[n_train + n_dev :],
    }


# ---------------------------------------------------------------------------
# JSON-lines persistence
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def save_dataset(samples: list[AlignedSample], path, spec: SyntheticCorpusSpec | None = None) -> None:
    """Write header plus one sample per line; coordinates as %.9g decimals."""
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "rng": RNG_NAME,
        "spec_sha256": spec.sha256() if spec is not None else None,
        "spec": spec.to_dict() if spec is not None else None,
        "n_samples": len(samples),
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for sample in samples:
            record = {
                "glosses": sample.glosses,
                "lengths": sample.lengths.tolist(),
                "frames": [
                    [[_fmt(v) for v in joint] for joint in frame]
                    for frame in sample.frames
                ],
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_dataset(path) -> tuple[list[AlignedSample], dict]:
    """Parse a dataset file; malformed records report their line number."""
    samples: list[AlignedSample] = []
    with open(path) as fh:
        first = fh.readline()
        if not first:
            raise DatasetError(f"{path}: empty file (missing header line)")
        try:
            header = json.loads(first)
        except json.JSONDecodeError as err:
            raise DatasetError(f"{path}:1: bad header: {err}") from err
        if header.get("format") != FORMAT_NAME:
            raise DatasetError(f"{path}:1: not a {FORMAT_NAME} file")
        if header.get("version") != FORMAT_VERSION:
            raise DatasetError(f"{path}:1: unsupported version {header.get('version')!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                frames = np.asarray(
                    [[[float(v) for v in joint] for joint in frame] for frame in record["frames"]],
                    dtype=np.float64,
                )
                sample = AlignedSample(
                    glosses=list(record["glosses"]),
                    frames=frames,
                    lengths=np.asarray(record["lengths"], dtype=np.int64),
                )
            except (KeyError, ValueError, TypeError, json.JSONDecodeError) as err:
                raise DatasetError(f"{path}:{lineno}: malformed record: {err}") from err
            samples.append(sample)
    declared = header.get("n_samples")
    if declared is not None and declared != len(samples):
        raise DatasetError(
            f"{path}: header declares {declared} samples, found {len(samples)} "
            "(truncated file?)"
        )
    return samples, header


__all__ = [
    "AlignedSample",
    "CorpusGenerator",
    "DatasetError",
    "FORMAT_NAME",
    "FORMAT_VERSION",
    "RNG_NAME",
    "SyntheticCorpusSpec",
    "generate_corpus",
    "load_dataset",
    "save_dataset",
    "split_corpus",
]
