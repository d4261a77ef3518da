import hashlib
import warnings

import numpy as np
import pytest

from surgskill.core import (
    DataError,
    EntropyParams,
    FeatureTag,
    FeatureVector,
    FormatError,
    ParameterError,
    ParseError,
    ShapeError,
    validate,
)
from surgskill.ingest import (
    AccelTrace,
    DescriptorSet,
    IngestWarning,
    MotionCodebook,
    combine_accel,
    early_fuse,
    encode_video,
    load_manifest,
    parse_accel_csv,
    parse_stip_file,
    train_codebook,
    write_accel_csv,
    write_stip_file,
)


def _stip_row(t, desc):
    return "12 40 {} 4 2 0.9 ".format(t) + " ".join(f"{v:.4f}" for v in desc) + "\n"


def test_parse_stip_three_rows(tmp_path, rng):
    p = tmp_path / "a.stip"
    p.write_text("# header\n" + "".join(_stip_row(t, rng.random(162)) for t in (3, 3, 9)))
    ds = parse_stip_file(p)
    assert len(ds) == 3 and ds.D == 162
    assert ds.frames.tolist() == [3, 3, 9]
    assert ds.video_length_frames == 9


def test_parse_stip_comments_only(tmp_path):
    p = tmp_path / "e.stip"
    p.write_text("# nothing\n# here\n")
    with pytest.warns(IngestWarning):
        ds = parse_stip_file(p)
    assert len(ds) == 0 and ds.video_length_frames == 0


def test_parse_stip_inconsistent_dimension(tmp_path, rng):
    p = tmp_path / "bad.stip"
    p.write_text(_stip_row(1, rng.random(162)) + _stip_row(2, rng.random(162)) + _stip_row(3, rng.random(161)))
    with pytest.raises(FormatError) as info:
        parse_stip_file(p)
    assert info.value.line == 3


def test_parse_stip_malformed_row(tmp_path):
    p = tmp_path / "bad.stip"
    p.write_text("# c\n1 2 3 4 5 6 0.1 0.2\n1 2 x 4 5 6 0.1 0.2\n")
    with pytest.raises(ParseError, match="line 3"):
        parse_stip_file(p)


def test_stip_round_trip(tmp_path, rng):
    ds = DescriptorSet(np.array([1, 4, 4]), rng.random((3, 5)), 10)
    write_stip_file(tmp_path / "r.stip", ds)
    back = parse_stip_file(tmp_path / "r.stip", video_length_frames=10)
    np.testing.assert_array_equal(back.descriptors, ds.descriptors)
    np.testing.assert_array_equal(back.frames, ds.frames)


def _blobs(rng, n=100):
    a = rng.normal([0, 0], 0.3, size=(n, 2))
    b = rng.normal([5, 5], 0.3, size=(n, 2))
    return a, b


def test_codebook_two_blobs(rng):
    a, b = _blobs(rng)
    ds = DescriptorSet(np.ones(2 * len(a), int), np.vstack([a, b]), 1)
    cb = train_codebook([ds], 2, seed=3)
    means = np.array([a.mean(0), b.mean(0)])
    order = np.argsort(cb.centroids[:, 0])
    np.testing.assert_allclose(cb.centroids[order], means, atol=0.1)
    la, lb = cb.assign(a), cb.assign(b)
    assert len(set(la)) == 1 and len(set(lb)) == 1 and la[0] != lb[0]


def test_codebook_rejects_k1(rng):
    ds = DescriptorSet(np.ones(10, int), rng.random((10, 2)), 1)
    with pytest.raises(ParameterError):
        train_codebook([ds], 1)


def test_codebook_too_few_points(rng):
    ds = DescriptorSet(np.ones(3, int), rng.random((3, 2)), 1)
    with pytest.raises(DataError):
        train_codebook([ds], 4)


def test_codebook_rejects_non_expert(rng):
    ds = DescriptorSet(np.ones(10, int), rng.random((10, 2)), 1, "t9", expert=False)
    with pytest.raises(DataError, match="t9"):
        train_codebook([ds], 2)


def test_codebook_deterministic(rng):
    ds = DescriptorSet(np.ones(200, int), rng.normal(size=(200, 6)), 1)
    a = train_codebook([ds], 5, seed=11)
    b = train_codebook([ds], 5, seed=11)
    assert a.centroids.tobytes() == b.centroids.tobytes()


def test_codebook_inertia_non_increasing(rng):
    ds = DescriptorSet(np.ones(500, int), rng.normal(size=(500, 4)), 1)
    cb = train_codebook([ds], 8, seed=2)
    trace = np.array(cb.inertia_trace)
    assert np.all(np.diff(trace) <= 1e-9 * trace[0])


def test_codebook_empty_cluster_reseeded():
    # duplicated points force k-means++ to pick coincident centres
    X = np.array([[0.0, 0.0]] * 6 + [[10.0, 10.0]])
    cb = train_codebook([DescriptorSet(np.ones(7, int), X, 1)], 3, seed=0)
    assert np.all(np.isfinite(cb.centroids))


def test_codebook_save_load(tmp_path, rng):
    ds = DescriptorSet(np.ones(50, int), rng.normal(size=(50, 3)), 1)
    cb = train_codebook([ds], 3, seed=1)
    cb.save(tmp_path / "cb.txt")
    back = MotionCodebook.load(tmp_path / "cb.txt")
    assert back.centroids.tobytes() == cb.centroids.tobytes()
    assert (back.seed, back.iterations, back.inertia) == (cb.seed, cb.iterations, cb.inertia)
    cb.save(tmp_path / "cb2.txt")
    digest = lambda p: hashlib.sha256(p.read_bytes()).hexdigest()
    assert digest(tmp_path / "cb.txt") == digest(tmp_path / "cb2.txt")


def test_encode_single_point():
    cb = MotionCodebook(np.array([[0.0], [1.0], [2.0]]))
    ds = DescriptorSet(np.array([5]), np.array([[2.1]]), 10)
    T = encode_video(ds, cb).values
    expected = np.zeros((3, 10))
    expected[2, 4] = 1  # frame 5 -> column 4
    np.testing.assert_array_equal(T, expected)


def test_encode_empty():
    cb = MotionCodebook(np.zeros((4, 2)) + np.arange(4)[:, None])
    ds = DescriptorSet(np.zeros(0, int), np.zeros((0, 2)), 100)
    with pytest.warns(IngestWarning):
        s = encode_video(ds, cb)
    assert s.values.shape == (4, 100) and not s.values.any()


def test_encode_dimension_mismatch():
    cb = MotionCodebook(np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        encode_video(DescriptorSet(np.array([1]), np.zeros((1, 4)), 2), cb)


def test_encode_matches_bruteforce_tally(rng):
    C = rng.normal(size=(5, 4))
    n = 300
    frames = rng.integers(1, 41, size=n)
    X = rng.normal(size=(n, 4))
    s = encode_video(DescriptorSet(frames, X, 40), MotionCodebook(C))
    tally = np.zeros((5, 40))
    for f, x in zip(frames, X):
        dists = [sum((x[d] - c[d]) ** 2 for d in range(4)) for c in C]
        tally[dists.index(min(dists)), f - 1] += 1
    np.testing.assert_array_equal(s.values, tally)
    # column sums equal the number of interest points per frame
    np.testing.assert_array_equal(s.values.sum(0), np.bincount(frames - 1, minlength=40))


def _write_csv(path, rows):
    path.write_text("timestamp,x,y,z\n" + "".join(",".join(map(str, r)) + "\n" for r in rows))


def test_accel_csv_four_rows(tmp_path):
    p = tmp_path / "a.csv"
    _write_csv(p, [(0, 1, 2, 3), (0.01, 1, 2, 3), (0.02, 1, 2, 3), (0.03, 4, 5, 6)])
    tr = parse_accel_csv(p)
    assert tr.samples.shape == (3, 4)
    assert tr.samples[:, 3].tolist() == [4, 5, 6]


def test_accel_csv_non_monotonic(tmp_path):
    p = tmp_path / "a.csv"
    _write_csv(p, [(0, 0, 0, 0), (1, 0, 0, 0), (1, 0, 0, 0), (2, 0, 0, 0)])
    with pytest.raises(ParseError, match="row 3"):
        parse_accel_csv(p)


def test_accel_csv_non_numeric(tmp_path):
    p = tmp_path / "a.csv"
    _write_csv(p, [(0, 0, 0, 0), (1, "abc", 0, 0)])
    with pytest.raises(ParseError, match="row 2"):
        parse_accel_csv(p)


def test_accel_csv_rate_100hz(tmp_path, rng):
    tr = AccelTrace(rng.normal(size=(3, 500)), 100.0, "wrist", np.arange(500) * 0.01)
    write_accel_csv(tmp_path / "a.csv", tr)
    back = parse_accel_csv(tmp_path / "a.csv")
    assert back.sample_rate == pytest.approx(100, rel=0.01)
    np.testing.assert_array_equal(back.samples, tr.samples)


def test_accel_spike_warning(tmp_path):
    p = tmp_path / "a.csv"
    _write_csv(p, [(0, 0, 0, 1), (1, 0, 0, 30), (2, 0, 0, 1)])
    with pytest.warns(IngestWarning, match="exceed"):
        tr = parse_accel_csv(p, spike_threshold=8.0)
    assert tr.Q == 3  # kept, never dropped


def test_combine_truncates(rng):
    a = AccelTrace(rng.normal(size=(3, 100)), 100, "wrist")
    b = AccelTrace(rng.normal(size=(3, 98)), 100, "needle_holder")
    with pytest.warns(IngestWarning, match="98"):
        s = combine_accel(a, b)
    assert s.values.shape == (6, 98)
    np.testing.assert_array_equal(s.values[3:], b.samples)
    assert s.dim_names[0] == "wrist.x" and s.dim_names[5] == "needle_holder.z"


def test_combine_identical(rng):
    a = AccelTrace(rng.normal(size=(3, 50)), 100, "left_wrist")
    s = combine_accel(a, a)
    np.testing.assert_array_equal(s.values[:3], s.values[3:])


def test_single_sensor_pass_through(rng):
    a = AccelTrace(rng.normal(size=(3, 50)), 100, "wrist")
    assert combine_accel(a).values.shape == (3, 50)


def test_combined_series_validates(rng):
    a = AccelTrace(rng.normal(size=(3, 3)), 100)
    assert validate(combine_accel(a, a), EntropyParams(m=1, tau=1)) == []


def test_empty_trace_rejected():
    with pytest.raises(DataError):
        AccelTrace(np.zeros((3, 0)), 100)


def _fv(n, family):
    return FeatureVector(np.arange(n, dtype=float), [FeatureTag(family, (i,), 0) for i in range(n)])


def test_early_fuse_lengths_and_tags():
    v, a = _fv(216, "ApEn"), _fv(126, "XApEn")
    fused = early_fuse(v, a)
    assert len(fused) == 342
    assert fused["accel:XApEn[d5,r0]"] == 5.0
    assert fused["video:ApEn[d7,r0]"] == 7.0
    assert FeatureTag.parse(str(fused.tags[300])) == fused.tags[300]


def test_early_fuse_empty_accel():
    v = _fv(10, "DFT")
    fused = early_fuse(v, FeatureVector(np.zeros(0), ()))
    np.testing.assert_array_equal(fused.values, v.values)


def test_manifest(tmp_path):
    (tmp_path / "m.json").write_text(
        '{"version": 1, "trials": [{"id": "t1", "task": "knot_tying", "expert": true,'
        '"video": {"stip": "t1.stip", "n_frames": 1000}, "accel": ["a.csv"],'
        '"labels": {"TM": "expert"}}]}'
    )
    (t,) = load_manifest(tmp_path / "m.json")
    assert t.expert and t.n_frames == 1000 and t.stip == str(tmp_path / "t1.stip")
    assert t.labels == {"TM": "expert"}
