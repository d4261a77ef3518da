"""Turn external data into :class:`~surgskill.core.MultiTimeSeries`.

Video trials arrive as interest-point descriptor files and become per-frame
motion-class histograms through a k-means codebook learned on expert
trials. Accelerometer trials arrive as ``timestamp,x,y,z`` CSV files.
"""
from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    K_GRID,
    DataError,
    FeatureTag,
    FeatureVector,
    FormatError,
    MultiTimeSeries,
    ParameterError,
    ParseError,
    ShapeError,
)

log = logging.getLogger(__name__)

STIP_POINT_FIELDS = ("y", "x", "t", "sigma2", "tau2", "confidence")
CODEBOOK_MAGIC = "surgskill-codebook"
CODEBOOK_VERSION = 1


class IngestWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class DescriptorSet:
    """Interest points of one video: frame index (1-based) and descriptor per row."""

    frames: np.ndarray
    descriptors: np.ndarray
    video_length_frames: int
    trial_id: str = ""
    expert: bool | None = None

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.int64).reshape(-1)
        desc = np.asarray(self.descriptors, dtype=float)
        if desc.size == 0:
            desc = desc.reshape(0, desc.shape[1] if desc.ndim == 2 else 0)
        if desc.ndim != 2 or desc.shape[0] != frames.size:
            raise ShapeError(f"{frames.size} frame indices for descriptor array {desc.shape}")
        if frames.size and (frames.min() < 1 or frames.max() > self.video_length_frames):
            raise DataError(
                f"frame indices must lie in [1, {self.video_length_frames}], "
                f"got [{frames.min()}, {frames.max()}]"
            )
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "descriptors", desc)

    def __len__(self):
        return self.frames.size

    @property
    def D(self) -> int:
        return self.descriptors.shape[1]


def parse_stip_file(path, video_length_frames: int | None = None, trial_id: str = "",
                    expert: bool | None = None) -> DescriptorSet:
    """Read an interest-point text file.

    Each data row holds ``y x t sigma2 tau2 confidence`` followed by ``D``
    descriptor values; ``#`` starts a comment line. ``t`` is the 1-based
    frame index. Without ``video_length_frames`` the video length is taken
    as the largest frame index seen.
    """
    frames, rows = [], []
    D = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise ParseError(f"non-numeric field in {path}: {exc}", lineno) from None
            if len(vals) <= len(STIP_POINT_FIELDS):
                raise ParseError(
                    f"expected 6 point fields plus a descriptor, got {len(vals)} fields", lineno
                )
            d = len(vals) - len(STIP_POINT_FIELDS)
            if D is None:
                D = d
            elif d != D:
                raise FormatError(f"descriptor length {d} differs from earlier rows ({D})", lineno)
            t = vals[2]
            if t != int(t) or t < 1:
                raise ParseError(f"frame index t={t} must be a positive integer", lineno)
            frames.append(int(t))
            rows.append(vals[len(STIP_POINT_FIELDS):])
    if not rows:
        warnings.warn(f"{path}: no interest points", IngestWarning, stacklevel=2)
    length = video_length_frames if video_length_frames is not None else max(frames, default=0)
    desc = np.array(rows, dtype=float) if rows else np.zeros((0, 0))
    return DescriptorSet(np.array(frames, dtype=np.int64), desc, length, trial_id, expert)


def write_stip_file(path, ds: DescriptorSet) -> None:
    """Write ``ds`` in the layout :func:`parse_stip_file` reads (point fields other than t are 0)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {' '.join(STIP_POINT_FIELDS)} descriptor[{ds.D}]\n")
        for t, row in zip(ds.frames, ds.descriptors):
            fh.write(f"0 0 {t} 0 0 0 " + " ".join(repr(float(v)) for v in row) + "\n")


@dataclass(frozen=True, eq=False)
class MotionCodebook:
    centroids: np.ndarray
    seed: int = 0
    iterations: int = 0
    inertia: float = 0.0
    inertia_trace: tuple[float, ...] = field(default=())

    @property
    def K(self) -> int:
        return self.centroids.shape[0]

    @property
    def D(self) -> int:
        return self.centroids.shape[1]

    def assign(self, X: np.ndarray) -> np.ndarray:
        """Index of the nearest centroid (Euclidean; lowest index on ties)."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.D:
            raise ShapeError(f"descriptor dimension {X.shape[-1]} does not match codebook D={self.D}")
        return _sq_dist(X, self.centroids).argmin(axis=1)

    def save(self, path, comments=()) -> None:
        """Write the text artifact (see README, "Codebook file format")."""
        lines = [f"# {CODEBOOK_MAGIC} v{CODEBOOK_VERSION}"]
        lines += [f"# {c}" for c in comments]
        lines += [
            f"K {self.K}",
            f"D {self.D}",
            f"seed {self.seed}",
            f"iterations {self.iterations}",
            f"inertia {self.inertia!r}",
        ]
        lines += [" ".join(repr(float(v)) for v in row) for row in self.centroids]
        atomic_write_text(path, "\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "MotionCodebook":
        with open(path, encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        if not lines or not lines[0].startswith(f"# {CODEBOOK_MAGIC} v"):
            raise FormatError(f"{path}: not a codebook file", 1)
        version = int(lines[0].rsplit("v", 1)[1])
        lines = lines[:1] + [ln for ln in lines[1:] if not ln.startswith("#")]
        if version != CODEBOOK_VERSION:
            raise FormatError(f"{path}: unsupported codebook version {version}", 1)
        head = {}
        for ln in lines[1:6]:
            key, _, value = ln.partition(" ")
            head[key] = value
        try:
            K, D = int(head["K"]), int(head["D"])
            cents = np.array([[float(v) for v in ln.split()] for ln in lines[6:]])
        except (KeyError, ValueError) as exc:
            raise FormatError(f"{path}: malformed codebook ({exc})") from None
        if cents.shape != (K, D):
            raise FormatError(f"{path}: expected {K}x{D} centroids, found {cents.shape}")
        return cls(cents, int(head["seed"]), int(head["iterations"]), float(head["inertia"]))


def _sq_dist(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    out = np.empty((X.shape[0], C.shape[0]))
    step = max(1, (1 << 22) // max(1, C.size))
    for i in range(0, X.shape[0], step):
        out[i : i + step] = ((X[i : i + step, None, :] - C[None, :, :]) ** 2).sum(axis=2)
    return out


def _kmeans_pp(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    centers = [X[rng.integers(X.shape[0])]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total == 0:
            idx = rng.integers(X.shape[0])
        else:
            idx = rng.choice(X.shape[0], p=d2 / total)
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def train_codebook(expert_sets, K: int, seed: int = 0, max_iter: int = 300,
                   tol: float = 1e-8) -> MotionCodebook:
    """Learn ``K`` motion classes by k-means on the pooled descriptors of expert trials.

    Initialization is k-means++ driven by ``seed``; an empty cluster is
    re-seeded with the point farthest from its centroid. Sets explicitly
    marked ``expert=False`` are rejected.
    """
    if K < 2:
        raise ParameterError(f"K must be at least 2 (smallest grid value), got {K}")
    if K not in K_GRID:
        warnings.warn(f"K={K} is outside the experiment grid {K_GRID}", IngestWarning, stacklevel=2)
    sets = list(expert_sets)
    for s in sets:
        if s.expert is False:
            raise DataError(f"trial {s.trial_id or '?'} is not an expert trial")
    nonempty = [s.descriptors for s in sets if len(s)]
    if len({d.shape[1] for d in nonempty}) > 1:
        raise ShapeError("descriptor sets have different dimensionality")
    X = np.vstack(nonempty) if nonempty else np.zeros((0, 0))
    if X.shape[0] < K:
        raise DataError(f"{X.shape[0]} descriptors cannot form {K} clusters")

    rng = np.random.default_rng(seed)
    C = _kmeans_pp(X, K, rng)
    trace: list[float] = []
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _sq_dist(X, C)
        labels = d2.argmin(axis=1)
        point_d2 = d2[np.arange(X.shape[0]), labels]
        trace.append(float(point_d2.sum()))
        newC = C.copy()
        taken = set()
        for k in range(K):
            members = labels == k
            if members.any():
                newC[k] = X[members].mean(axis=0)
        for k in range(K):
            if not (labels == k).any():
                # farthest point that is not already a re-seed
                order = np.argsort(-point_d2, kind="stable")
                far = next(i for i in order if i not in taken)
                taken.add(far)
                newC[k] = X[far]
                point_d2[far] = 0.0
        shift = float(((newC - C) ** 2).sum())
        C = newC
        if shift <= tol:
            break
    d2 = _sq_dist(X, C)
    inertia = float(d2.min(axis=1).sum())
    trace.append(inertia)
    return MotionCodebook(C, seed, it, inertia, tuple(trace))


def encode_video(descriptors: DescriptorSet, codebook: MotionCodebook) -> MultiTimeSeries:
    """Per-frame counts of interest points assigned to each motion class (``K x N``)."""
    N = descriptors.video_length_frames
    if N < 2:
        raise DataError(f"video length {N} frames is too short to form a series")
    T = np.zeros((codebook.K, N))
    if len(descriptors) == 0:
        warnings.warn(
            f"trial {descriptors.trial_id or '?'}: no interest points, series is all zeros",
            IngestWarning,
            stacklevel=2,
        )
    else:
        labels = codebook.assign(descriptors.descriptors)
        np.add.at(T, (labels, descriptors.frames - 1), 1.0)
    return MultiTimeSeries(T, tuple(f"class{k}" for k in range(codebook.K)), 30.0)


@dataclass(frozen=True, eq=False)
class AccelTrace:
    samples: np.ndarray
    sample_rate: float
    sensor_id: str = "wrist"
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2 or s.shape[0] != 3:
            raise ShapeError(f"accelerometer samples must be 3 x Q, got {s.shape}")
        if s.shape[1] < 2:
            raise DataError(f"accelerometer trace needs at least 2 samples, got {s.shape[1]}")
        if not np.all(np.isfinite(s)):
            raise DataError("accelerometer trace has non-finite samples")
        object.__setattr__(self, "samples", s)

    @property
    def Q(self) -> int:
        return self.samples.shape[1]

    def as_series(self) -> MultiTimeSeries:
        names = tuple(f"{self.sensor_id}.{a}" for a in "xyz")
        return MultiTimeSeries(self.samples, names, self.sample_rate)


def parse_accel_csv(path, sensor_id: str = "wrist", spike_threshold: float | None = None) -> AccelTrace:
    """Read a ``timestamp,x,y,z`` CSV (seconds, comma-delimited, UTF-8).

    The sample rate is the reciprocal of the median timestamp step. Rows are
    numbered from 1 at the first data row. When ``spike_threshold`` is set,
    samples whose magnitude exceeds it raise a warning; they are kept.
    """
    ts, xyz = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["timestamp", "x", "y", "z"]:
            raise ParseError(f"{path}: header must be timestamp,x,y,z, got {header}", 1)
        for row_no, row in enumerate(reader, 1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ParseError(f"{path}: row {row_no} has {len(row)} fields, expected 4", row_no + 1)
            try:
                t, x, y, z = (float(c) for c in row)
            except ValueError:
                raise ParseError(f"{path}: row {row_no} has a non-numeric cell: {row}", row_no + 1) from None
            if ts and t <= ts[-1]:
                raise ParseError(
                    f"{path}: timestamps not increasing at row {row_no} ({t} after {ts[-1]})", row_no + 1
                )
            ts.append(t)
            xyz.append((x, y, z))
    if len(ts) < 2:
        raise DataError(f"{path}: need at least 2 samples, got {len(ts)}")
    t = np.array(ts)
    samples = np.array(xyz).T
    if spike_threshold is not None:
        mag = np.linalg.norm(samples, axis=0)
        n_spikes = int((mag > spike_threshold).sum())
        if n_spikes:
            warnings.warn(
                f"{path}: {n_spikes} samples exceed |a| > {spike_threshold}; check sensor attachment",
                IngestWarning,
                stacklevel=2,
            )
    rate = 1.0 / float(np.median(np.diff(t)))
    return AccelTrace(samples, rate, sensor_id, t)


def write_accel_csv(path, trace: AccelTrace) -> None:
    t = trace.timestamps if trace.timestamps is not None else np.arange(trace.Q) / trace.sample_rate
    lines = ["timestamp,x,y,z"]
    lines += [",".join(repr(float(v)) for v in (ti, *col)) for ti, col in zip(t, trace.samples.T)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def combine_accel(a: AccelTrace, b: AccelTrace | None = None) -> MultiTimeSeries:
    """Stack two pre-aligned traces into a ``6 x Q`` series, or pass one through as ``3 x Q``.

    Both traces are truncated to the shorter length.
    """
    if b is None:
        return a.as_series()
    Q = min(a.Q, b.Q)
    if a.Q != b.Q:
        warnings.warn(
            f"truncating accelerometer traces to common length {Q} (from {a.Q} and {b.Q})",
            IngestWarning,
            stacklevel=2,
        )
    names = tuple(f"{a.sensor_id}.{c}" for c in "xyz") + tuple(f"{b.sensor_id}.{c}" for c in "xyz")
    if len(set(names)) < 6:
        names = tuple(f"a.{c}" for c in "xyz") + tuple(f"b.{c}" for c in "xyz")
    return MultiTimeSeries(np.vstack([a.samples[:, :Q], b.samples[:, :Q]]), names, a.sample_rate)


def early_fuse(video_features: FeatureVector, accel_features: FeatureVector) -> FeatureVector:
    """Concatenate per-modality vectors, prefixing tags with ``video:`` and ``accel:``."""

    def prefixed(fv, modality):
        tags = [FeatureTag(t.family, t.dims, t.radius_index, t.coeff_index, modality) for t in fv.tags]
        return FeatureVector(fv.values, tags, {f"{modality}.{k}": v for k, v in fv.meta.items()})

    return FeatureVector.concat([prefixed(video_features, "video"), prefixed(accel_features, "accel")])


@dataclass
class Trial:
    id: str
    task: str
    labels: dict
    expert: bool = False
    stip: str | None = None
    n_frames: int | None = None
    accel: list = field(default_factory=list)


def load_manifest(path) -> list[Trial]:
    """Read a trial manifest (JSON); relative paths resolve against the manifest's directory.

    ::

        {"version": 1,
         "trials": [{"id": "p01_s1", "task": "suturing", "expert": false,
                     "video": {"stip": "p01_s1.stip", "n_frames": 4000},
                     "accel": ["p01_s1_wrist.csv", "p01_s1_needle.csv"],
                     "labels": {"RT": "beginner", "TM": "intermediate"}}]}
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from None
    base = path.parent
    trials = []
    for entry in doc.get("trials", []):
        if "id" not in entry:
            raise DataError(f"manifest {path}: trial without id")
        video = entry.get("video") or {}
        stip = video.get("stip")
        trials.append(
            Trial(
                id=str(entry["id"]),
                task=entry.get("task", "suturing"),
                labels=dict(entry.get("labels", {})),
                expert=bool(entry.get("expert", False)),
                stip=str(base / stip) if stip else None,
                n_frames=video.get("n_frames"),
                accel=[str(base / p) for p in entry.get("accel", [])],
            )
        )
    ids = [t.id for t in trials]
    if len(set(ids)) != len(ids):
        raise DataError(f"manifest {path}: duplicate trial ids")
    return trials


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)
