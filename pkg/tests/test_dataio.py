import struct

import numpy as np
import pytest

from regionwalk.dataio import (
    Caption,
    Dataset,
    RegionSet,
    VideoSample,
    load_captions,
    load_dataset,
    load_features,
    load_vocab,
    sample_frames,
    save_dataset,
    synth_dataset,
    synth_vocab,
    write_captions,
    write_features,
    write_vocab,
)
from regionwalk.errors import (
    ConfigError,
    DataError,
    FormatError,
    PayloadLengthError,
    VocabError,
)

HEADER_SIZE = struct.calcsize("<4sIIIII")


def make_videos(num, frames, n, d, seed=0, prefix=""):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(num):
        fr = tuple(
            RegionSet(features=rng.standard_normal((n, d)), frame_index=j)
            for j in range(frames)
        )
        out.append(VideoSample(video_id=f"{prefix}{i:05d}", frames=fr))
    return out


# -- frame sampling -----------------------------------------------------------


def test_sample_frames_upsamples():
    assert sample_frames(10, 16) == [0, 0, 1, 1, 2, 3, 3, 4, 5, 5, 6, 6, 7, 8, 8, 9]


def test_sample_frames_identity():
    assert sample_frames(16, 16) == list(range(16))


def test_sample_frames_strides():
    got = sample_frames(100, 4)
    assert got == [0, 25, 50, 75]


def test_sample_frames_single():
    assert sample_frames(1, 3) == [0, 0, 0]
    assert sample_frames(5, 1) == [0]


def test_sample_frames_sorted_in_range():
    for total in range(1, 40):
        for target in range(1, 40):
            idx = sample_frames(total, target)
            assert len(idx) == target
            assert idx == sorted(idx)
            assert all(0 <= i < total for i in idx)


def test_sample_frames_rejects_zero():
    with pytest.raises(ConfigError):
        sample_frames(0, 4)


# -- binary feature files -----------------------------------------------------


def test_feature_round_trip(tmp_path):
    videos = make_videos(3, 2, 5, 7, seed=1)
    path = tmp_path / "x.vsrn"
    write_features(path, videos)
    back = load_features(path)
    assert len(back) == 3
    for orig, got in zip(videos, back):
        assert got.shape == (5, 7)
        for fo, fg in zip(orig.frames, got.frames):
            # payload is float32, so round-trip quantizes once
            assert np.array_equal(fg.features, fo.features.astype(np.float32).astype(np.float64))


def test_feature_round_trip_full_scale(tmp_path):
    # full default geometry: 16 frames of 36 regions x 2048 dims
    videos = make_videos(2, 16, 36, 2048, seed=2)
    path = tmp_path / "big.vsrn"
    write_features(path, videos)
    assert path.stat().st_size == HEADER_SIZE + 2 * 16 * 36 * 2048 * 4
    back = load_features(path)
    assert back[1].frames[15].features.shape == (36, 2048)


def test_feature_header_fields(tmp_path):
    path = tmp_path / "h.vsrn"
    write_features(path, make_videos(2, 3, 4, 5))
    raw = path.read_bytes()
    magic, version, num, frames, n, d = struct.unpack_from("<4sIIIII", raw)
    assert magic == b"VSRN"
    assert (version, num, frames, n, d) == (1, 2, 3, 4, 5)


def test_feature_bad_magic(tmp_path):
    path = tmp_path / "bad.vsrn"
    path.write_bytes(b"NOPE" + b"\x00" * 40)
    with pytest.raises(FormatError, match="magic"):
        load_features(path)


def test_feature_truncated_payload(tmp_path):
    path = tmp_path / "t.vsrn"
    write_features(path, make_videos(2, 2, 3, 3))
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(PayloadLengthError):
        load_features(path)


def test_feature_truncated_header(tmp_path):
    path = tmp_path / "th.vsrn"
    path.write_bytes(b"VSRN\x01")
    with pytest.raises(PayloadLengthError):
        load_features(path)


def test_feature_nonfinite_reports_offset(tmp_path):
    path = tmp_path / "nan.vsrn"
    write_features(path, make_videos(1, 1, 2, 3))
    raw = bytearray(path.read_bytes())
    flat_idx = 4  # fifth float in the payload
    raw[HEADER_SIZE + flat_idx * 4 : HEADER_SIZE + (flat_idx + 1) * 4] = struct.pack(
        "<f", float("nan")
    )
    path.write_bytes(bytes(raw))
    with pytest.raises(DataError, match=str(HEADER_SIZE + flat_idx * 4)):
        load_features(path)


def test_feature_zero_dim_header(tmp_path):
    path = tmp_path / "z.vsrn"
    path.write_bytes(struct.pack("<4sIIIII", b"VSRN", 1, 0, 1, 1, 1))
    with pytest.raises(FormatError, match="zero"):
        load_features(path)


def test_feature_wrong_version(tmp_path):
    path = tmp_path / "v.vsrn"
    path.write_bytes(struct.pack("<4sIIIII", b"VSRN", 9, 1, 1, 1, 1) + b"\x00" * 4)
    with pytest.raises(FormatError, match="version"):
        load_features(path)


def test_write_features_rejects_ragged(tmp_path):
    a = make_videos(1, 2, 3, 4)[0]
    b = make_videos(1, 2, 3, 5, prefix="b")[0]
    with pytest.raises(Exception):
        write_features(tmp_path / "r.vsrn", [a, b])


# -- captions and vocab -------------------------------------------------------


def test_caption_round_trip(tmp_path):
    videos = make_videos(2, 1, 2, 2)
    caps = [
        Caption(video_id=videos[0].video_id, token_ids=(1, 2, 3)),
        Caption(video_id=videos[1].video_id, token_ids=(0,)),
    ]
    path = tmp_path / "c.tsv"
    write_captions(path, caps, {v.video_id: i for i, v in enumerate(videos)})
    back = load_captions(path, videos, vocab_size=4)
    assert [c.token_ids for c in back] == [(1, 2, 3), (0,)]
    assert [c.video_id for c in back] == [v.video_id for v in videos]


def test_caption_bad_token(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("0\t1 99\n")
    with pytest.raises(VocabError):
        load_captions(path, make_videos(1, 1, 2, 2), vocab_size=10)


def test_caption_bad_video_index(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("5\t1\n")
    with pytest.raises(DataError):
        load_captions(path, make_videos(1, 1, 2, 2), vocab_size=10)


def test_caption_malformed_line(tmp_path):
    path = tmp_path / "c.tsv"
    path.write_text("no tabs here\n")
    with pytest.raises(FormatError):
        load_captions(path, make_videos(1, 1, 2, 2), vocab_size=10)


def test_vocab_round_trip(tmp_path):
    path = tmp_path / "v.txt"
    write_vocab(path, ["alpha", "beta", "gamma"])
    assert load_vocab(path) == ["alpha", "beta", "gamma"]


def test_vocab_empty_rejected(tmp_path):
    path = tmp_path / "v.txt"
    path.write_text("\n\n")
    with pytest.raises(FormatError):
        load_vocab(path)


# -- dataset container --------------------------------------------------------


def test_dataset_rejects_unknown_caption_video():
    videos = tuple(make_videos(1, 1, 2, 2))
    caps = (Caption(video_id="ghost", token_ids=(0,)),)
    with pytest.raises(Exception):
        Dataset(videos=videos, captions=caps, vocab_size=4, split="train")


def test_dataset_rejects_uncaptioned_video():
    videos = tuple(make_videos(2, 1, 2, 2))
    caps = (Caption(video_id=videos[0].video_id, token_ids=(0,)),)
    with pytest.raises(Exception):
        Dataset(videos=videos, captions=caps, vocab_size=4, split="train")


# -- synthetic benchmark ------------------------------------------------------


def test_synth_deterministic():
    a = synth_dataset(5, 4, n=3, d=8, vocab_size=16, frames_per_video=2)
    b = synth_dataset(5, 4, n=3, d=8, vocab_size=16, frames_per_video=2)
    for va, vb in zip(a.videos, b.videos):
        for fa, fb in zip(va.frames, vb.frames):
            assert np.array_equal(fa.features, fb.features)
    assert a.captions == b.captions


def test_synth_splits_share_prototypes():
    # noise 0 collapses every region onto its topic prototype, so the same
    # topic must agree bit for bit across splits
    tr = synth_dataset(5, 4, n=2, d=8, vocab_size=16, noise_scale=0.0,
                       split="train", frames_per_video=1, num_topics=4)
    te = synth_dataset(5, 4, n=2, d=8, vocab_size=16, noise_scale=0.0,
                       split="test", frames_per_video=1, num_topics=4)
    for i in range(4):
        assert np.array_equal(
            tr.videos[i].frames[0].features, te.videos[i].frames[0].features
        )


def test_synth_topics_distinct():
    ds = synth_dataset(5, 4, n=2, d=32, vocab_size=16, noise_scale=0.0,
                       frames_per_video=1, num_topics=4)
    f0 = ds.videos[0].frames[0].features
    f1 = ds.videos[1].frames[0].features
    assert not np.allclose(f0, f1)


def test_synth_caption_tokens_stay_in_band():
    ds = synth_dataset(5, 8, n=2, d=4, vocab_size=16, num_topics=4, caption_len=6)
    band = 16 // 4
    for i, c in enumerate(ds.captions):
        topic = i % 4
        assert all(topic * band <= t < (topic + 1) * band for t in c.token_ids)


def test_synth_topic_wraps_around():
    ds = synth_dataset(5, 6, n=2, d=4, vocab_size=16, noise_scale=0.0,
                       frames_per_video=1, num_topics=4)
    # pair 4 reuses topic 0
    assert np.array_equal(
        ds.videos[4].frames[0].features, ds.videos[0].frames[0].features
    )


def test_synth_rejects_tiny_vocab():
    with pytest.raises(ConfigError):
        synth_dataset(5, 4, vocab_size=3, num_topics=8)


def test_synth_rejects_single_pair():
    with pytest.raises(ConfigError):
        synth_dataset(5, 1)


def test_synth_matches_file_round_trip(tmp_path):
    # in-memory features already carry the float32 quantization
    ds = synth_dataset(9, 3, n=2, d=4, vocab_size=8, frames_per_video=2, num_topics=2)
    save_dataset(tmp_path, ds, synth_vocab(8, 2))
    back = load_dataset(tmp_path, "train")
    for vo, vb in zip(ds.videos, back.videos):
        assert vo.video_id == vb.video_id
        for fo, fb in zip(vo.frames, vb.frames):
            assert np.array_equal(fo.features, fb.features)
    assert back.captions == ds.captions


def test_load_dataset_resamples_frames(tmp_path):
    ds = synth_dataset(9, 2, n=2, d=4, vocab_size=8, frames_per_video=4, num_topics=2)
    save_dataset(tmp_path, ds)
    back = load_dataset(tmp_path, "train", target_frames=8)
    assert all(len(v.frames) == 8 for v in back.videos)
    # slot j holds source frame floor(j*4/8)
    src = sample_frames(4, 8)
    for v_orig, v_back in zip(ds.videos, back.videos):
        for j, s in enumerate(src):
            assert np.array_equal(
                v_back.frames[j].features, v_orig.frames[s].features
            )
