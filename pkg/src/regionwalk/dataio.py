"""Datasets on disk and in memory.

Feature files are binary: magic ``VSRN``, u32 version, u32 num_videos,
u32 frames_per_video, u32 regions (n), u32 dims (d), then float32
little-endian region features, row-major, video-major. Captions are TSV
lines ``video_index<TAB>token_id token_id ...``; the vocabulary is one
token per line, line number = token id.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    DegenerateInputError,
    FormatError,
    PayloadLengthError,
    ShapeError,
    VocabError,
)
from .rng import stream_rng

MAGIC = b"VSRN"
VERSION = 1
_HEADER = struct.Struct("<4sIIIII")


@dataclass(frozen=True)
class RegionSet:
    """Fixed set of region feature vectors for one frame (n x d, float64)."""

    features: np.ndarray
    frame_index: int

    def __post_init__(self) -> None:
        f = self.features
        if f.ndim != 2 or f.size == 0:
            raise ShapeError(f"RegionSet: expected non-empty n x d, got {f.shape}")
        if f.dtype != np.float64:
            raise ShapeError(f"RegionSet: expected float64, got {f.dtype}")
        if not np.isfinite(f).all():
            raise DegenerateInputError("RegionSet: non-finite features")
        if self.frame_index < 0:
            raise ConfigError(f"RegionSet: negative frame index {self.frame_index}")


@dataclass(frozen=True)
class VideoSample:
    video_id: str
    frames: tuple[RegionSet, ...]

    def __post_init__(self) -> None:
        if not self.frames:
            raise ShapeError(f"VideoSample {self.video_id}: no frames")
        shape = self.frames[0].features.shape
        for fr in self.frames:
            if fr.features.shape != shape:
                raise ShapeError(
                    f"VideoSample {self.video_id}: frame shapes differ, "
                    f"{fr.features.shape} vs {shape}"
                )

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames[0].features.shape


@dataclass(frozen=True)
class Caption:
    video_id: str
    token_ids: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.token_ids) < 1:
            raise ShapeError(f"Caption for {self.video_id}: empty token list")
        if any(t < 0 for t in self.token_ids):
            raise VocabError(f"Caption for {self.video_id}: negative token id")


@dataclass(frozen=True)
class Dataset:
    videos: tuple[VideoSample, ...]
    captions: tuple[Caption, ...]
    vocab_size: int
    split: str

    def __post_init__(self) -> None:
        ids = {v.video_id for v in self.videos}
        if len(ids) != len(self.videos):
            raise DataError(f"Dataset {self.split}: duplicate video ids")
        captioned = {c.video_id for c in self.captions}
        missing = ids - captioned
        if missing:
            raise DataError(
                f"Dataset {self.split}: {len(missing)} videos without captions"
            )
        for c in self.captions:
            if c.video_id not in ids:
                raise DataError(
                    f"Dataset {self.split}: caption references unknown video "
                    f"{c.video_id!r}"
                )
            if any(t >= self.vocab_size for t in c.token_ids):
                raise VocabError(
                    f"Dataset {self.split}: token id out of vocabulary "
                    f"(size {self.vocab_size})"
                )

    def video_index(self) -> dict[str, int]:
        return {v.video_id: i for i, v in enumerate(self.videos)}


def sample_frames(total: int, target: int) -> list[int]:
    """Uniform frame indices: ``floor(i * total / target)`` for each slot.

    Repeats indices when ``total < target`` and strides when ``total >
    target``; the result is always sorted and in range.
    """
    if total < 1 or target < 1:
        raise ConfigError(f"sample_frames: need positive counts, got {total}, {target}")
    return [(i * total) // target for i in range(target)]


def write_features(path: str | Path, videos: tuple[VideoSample, ...] | list[VideoSample]) -> None:
    """Write videos to the binary feature format (float32 payload)."""
    if not videos:
        raise ConfigError("write_features: no videos")
    n, d = videos[0].shape
    frames = len(videos[0].frames)
    for v in videos:
        if v.shape != (n, d) or len(v.frames) != frames:
            raise ShapeError(
                f"write_features: inconsistent video {v.video_id}: "
                f"{len(v.frames)} frames of {v.shape}, expected {frames} of {(n, d)}"
            )
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, len(videos), frames, n, d))
        for v in videos:
            for fr in v.frames:
                fh.write(np.ascontiguousarray(fr.features, dtype="<f4").tobytes())


def load_features(path: str | Path, id_prefix: str = "") -> list[VideoSample]:
    """Read a binary feature file back into float64 video samples."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise PayloadLengthError(f"{path}: file shorter than header")
    magic, version, num_videos, frames, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if min(num_videos, frames, n, d) < 1:
        raise FormatError(f"{path}: zero dimension in header")
    expected = num_videos * frames * n * d * 4
    payload = raw[_HEADER.size :]
    if len(payload) != expected:
        raise PayloadLengthError(
            f"{path}: payload is {len(payload)} bytes, header promises {expected}"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    finite = np.isfinite(flat)
    if not finite.all():
        bad = int(np.argmin(finite))
        raise DataError(
            f"{path}: non-finite value at byte offset {_HEADER.size + bad * 4}"
        )
    data = flat.astype(np.float64).reshape(num_videos, frames, n, d)
    videos = []
    for i in range(num_videos):
        fr = tuple(
            RegionSet(features=np.ascontiguousarray(data[i, j]), frame_index=j)
            for j in range(frames)
        )
        videos.append(VideoSample(video_id=f"{id_prefix}{i:05d}", frames=fr))
    return videos


def write_captions(path: str | Path, captions, index_of: dict[str, int]) -> None:
    lines = []
    for c in captions:
        toks = " ".join(str(t) for t in c.token_ids)
        lines.append(f"{index_of[c.video_id]}\t{toks}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_captions(path: str | Path, videos, vocab_size: int) -> list[Caption]:
    path = Path(path)
    out = []
    for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise FormatError(f"{path}:{ln}: expected video_index<TAB>tokens")
        try:
            vidx = int(parts[0])
            toks = tuple(int(t) for t in parts[1].split())
        except ValueError as exc:
            raise FormatError(f"{path}:{ln}: non-integer field") from exc
        if not 0 <= vidx < len(videos):
            raise DataError(f"{path}:{ln}: video index {vidx} out of range")
        if any(not 0 <= t < vocab_size for t in toks):
            raise VocabError(f"{path}:{ln}: token id out of vocabulary")
        out.append(Caption(video_id=videos[vidx].video_id, token_ids=toks))
    return out


def write_vocab(path: str | Path, tokens: list[str]) -> None:
    Path(path).write_text("\n".join(tokens) + "\n", encoding="utf-8")


def load_vocab(path: str | Path) -> list[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    tokens = [t for t in lines if t]
    if not tokens:
        raise FormatError(f"{path}: empty vocabulary")
    return tokens


def synth_dataset(
    seed: int,
    num_pairs: int,
    n: int = 36,
    d: int = 2048,
    vocab_size: int = 512,
    noise_scale: float = 0.1,
    *,
    split: str = "train",
    frames_per_video: int = 16,
    num_topics: int | None = None,
    caption_len: int = 12,
) -> Dataset:
    """Planted-topic synthetic video/caption pairs.

    Topic ``t`` owns a prototype region vector and a contiguous band of
    ``vocab_size // num_topics`` token ids. Pair ``i`` gets topic ``i %
    num_topics``; its regions are the prototype plus Gaussian noise and its
    caption tokens are drawn from the topic band. Prototypes depend only on
    ``(seed, t)``, so different splits built from the same seed share them.
    """
    if num_pairs < 2:
        raise ConfigError(f"synth_dataset: need at least 2 pairs, got {num_pairs}")
    if min(n, d, frames_per_video, caption_len) < 1:
        raise ConfigError("synth_dataset: n, d, frames and caption length must be >= 1")
    if noise_scale < 0:
        raise ConfigError(f"synth_dataset: negative noise scale {noise_scale}")
    if num_topics is None:
        num_topics = max(1, vocab_size // 4)
    if num_topics < 1:
        raise ConfigError(f"synth_dataset: need at least one topic, got {num_topics}")
    if vocab_size < num_topics:
        raise ConfigError(
            f"synth_dataset: vocab_size {vocab_size} < num_topics {num_topics}"
        )
    band = vocab_size // num_topics

    protos = {}
    videos = []
    captions = []
    for i in range(num_pairs):
        t = i % num_topics
        if t not in protos:
            protos[t] = stream_rng(seed, f"synth/topic/{t}").standard_normal(d)
        g = stream_rng(seed, f"synth/{split}/video/{i}")
        noise = noise_scale * g.standard_normal((frames_per_video, n, d))
        # Route through float32 so in-memory data matches a file round-trip.
        cube = (protos[t][None, None, :] + noise).astype(np.float32).astype(np.float64)
        frames = tuple(
            RegionSet(features=np.ascontiguousarray(cube[j]), frame_index=j)
            for j in range(frames_per_video)
        )
        vid = f"{split}:{i:05d}"
        videos.append(VideoSample(video_id=vid, frames=frames))
        gc = stream_rng(seed, f"synth/{split}/caption/{i}")
        toks = t * band + gc.integers(0, band, size=caption_len)
        captions.append(Caption(video_id=vid, token_ids=tuple(int(x) for x in toks)))
    return Dataset(
        videos=tuple(videos),
        captions=tuple(captions),
        vocab_size=vocab_size,
        split=split,
    )


def synth_vocab(vocab_size: int, num_topics: int | None = None) -> list[str]:
    """Human-readable token strings matching ``synth_dataset`` bands."""
    if num_topics is None:
        num_topics = max(1, vocab_size // 4)
    band = max(1, vocab_size // num_topics)
    return [f"topic{i // band:04d}_{i % band}" for i in range(vocab_size)]


def save_dataset(data_dir: str | Path, ds: Dataset, vocab: list[str] | None = None) -> None:
    """Write ``<split>.vsrn``, ``<split>.captions.tsv`` and ``vocab.txt``."""
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    write_features(data_dir / f"{ds.split}.vsrn", ds.videos)
    write_captions(data_dir / f"{ds.split}.captions.tsv", ds.captions, ds.video_index())
    if vocab is None:
        vocab = [f"tok{i:05d}" for i in range(ds.vocab_size)]
    if len(vocab) != ds.vocab_size:
        raise ConfigError(
            f"save_dataset: vocab has {len(vocab)} entries, dataset says {ds.vocab_size}"
        )
    write_vocab(data_dir / "vocab.txt", vocab)


def load_dataset(data_dir: str | Path, split: str, *, target_frames: int | None = None) -> Dataset:
    """Load one split written by :func:`save_dataset`.

    ``target_frames`` resamples each video with :func:`sample_frames`.
    """
    data_dir = Path(data_dir)
    vocab = load_vocab(data_dir / "vocab.txt")
    videos = load_features(data_dir / f"{split}.vsrn", id_prefix=f"{split}:")
    if target_frames is not None:
        picked = []
        for v in videos:
            idx = sample_frames(len(v.frames), target_frames)
            frames = tuple(
                RegionSet(features=v.frames[j].features, frame_index=pos)
                for pos, j in enumerate(idx)
            )
            picked.append(VideoSample(video_id=v.video_id, frames=frames))
        videos = picked
    captions = load_captions(data_dir / f"{split}.captions.tsv", videos, len(vocab))
    return Dataset(
        videos=tuple(videos),
        captions=tuple(captions),
        vocab_size=len(vocab),
        split=split,
    )
