"""Domain types, validation and normalization shared by every extractor.

Series are stored dimension-major: a ``K x N`` array with one row per
dimension (motion class or accelerometer axis) and one column per time step.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

SKILL_CLASSES = ("beginner", "intermediate", "expert")
OSATS_CRITERIA = ("RT", "TM", "IH", "SH", "FO", "KP", "OP")
TASKS = ("suturing", "knot_tying")
FAMILIES = ("ApEn", "XApEn", "DCT", "DFT", "SMT")

DEFAULT_RADII = (0.1, 0.13, 0.16, 0.19, 0.22, 0.25)
VIDEO_XAPEN_RADII = (0.2,)
K_GRID = (2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 14, 16, 18, 20)


class SkillError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(SkillError, ValueError):
    pass


class LengthError(SkillError, ValueError):
    pass


class ShapeError(SkillError, ValueError):
    pass


class DataError(SkillError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(ParseError):
    pass


class StratificationError(DataError):
    pass


@dataclass(frozen=True, eq=False)
class MultiTimeSeries:
    """A ``K x N`` real-valued series.

    Parameters
    ----------
    values : array_like
        Matrix of shape (K, N). A 1-D input is promoted to a single row.
    dim_names : sequence of str, optional
        One label per dimension. Defaults to ``d0, d1, ...``.
    sample_rate : float, optional
        Samples per second (30 for video frames).
    """

    values: np.ndarray
    dim_names: tuple[str, ...] = ()
    sample_rate: float | None = None
    flags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2:
            raise ShapeError(f"series must be 2-D (K x N), got shape {v.shape}")
        K, N = v.shape
        if K < 1 or N < 2:
            raise ShapeError(f"series needs K >= 1 and N >= 2, got {K}x{N}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        names = tuple(self.dim_names) or tuple(f"d{k}" for k in range(K))
        if len(names) != K:
            raise ShapeError(f"{len(names)} dim_names for {K} dimensions")
        object.__setattr__(self, "dim_names", names)
        object.__setattr__(self, "flags", frozenset(self.flags))

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.N

    def row(self, k: int) -> np.ndarray:
        return self.values[k]


@dataclass(frozen=True)
class EntropyParams:
    """Embedding dimension, delay and radius grid for the entropy features.

    ``radii`` are fractions of the per-dimension standard deviation.
    """

    m: int = 1
    tau: int = 1
    radii: tuple[float, ...] = DEFAULT_RADII

    def __post_init__(self):
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        if int(self.m) != self.m or self.m < 1:
            raise ParameterError(f"m must be a positive integer, got {self.m}")
        if int(self.tau) != self.tau or self.tau < 1:
            raise ParameterError(f"tau must be a positive integer, got {self.tau}")
        if not self.radii:
            raise ParameterError("radii must not be empty")
        if any(not 0 < r < 1 for r in self.radii):
            raise ParameterError(f"radii must lie in (0, 1), got {self.radii}")
        if any(b <= a for a, b in zip(self.radii, self.radii[1:])):
            raise ParameterError(f"radii must be strictly increasing, got {self.radii}")

    @property
    def R(self) -> int:
        return len(self.radii)

    def min_length(self) -> int:
        # two embedding vectors at order m + 1
        return self.m * self.tau + 2


@dataclass(frozen=True)
class FeatureTag:
    """Provenance of one feature entry."""

    family: str
    dims: tuple[int, ...]
    radius_index: int | None = None
    coeff_index: int | None = None
    modality: str | None = None

    def __str__(self) -> str:
        parts = ["d" + "-".join(str(d) for d in self.dims)]
        if self.radius_index is not None:
            parts.append(f"r{self.radius_index}")
        if self.coeff_index is not None:
            parts.append(f"c{self.coeff_index}")
        s = f"{self.family}[{','.join(parts)}]"
        return f"{self.modality}:{s}" if self.modality else s

    @classmethod
    def parse(cls, text: str) -> "FeatureTag":
        modality = None
        if ":" in text:
            modality, text = text.split(":", 1)
        family, rest = text.rstrip("]").split("[", 1)
        dims, radius, coeff = (), None, None
        for part in rest.split(","):
            if part.startswith("d"):
                dims = tuple(int(d) for d in part[1:].split("-") if d != "")
            elif part.startswith("r"):
                radius = int(part[1:])
            elif part.startswith("c"):
                coeff = int(part[1:])
        return cls(family, dims, radius, coeff, modality)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    tags: tuple[FeatureTag, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "tags", tuple(self.tags))
        if len(self.tags) != v.size:
            raise ShapeError(f"{v.size} values but {len(self.tags)} tags")

    def __len__(self):
        return self.values.size

    def index_of(self, tag) -> int:
        key = str(tag)
        for i, t in enumerate(self.tags):
            if str(t) == key:
                return i
        raise KeyError(key)

    def __getitem__(self, tag) -> float:
        return float(self.values[self.index_of(tag)])

    @classmethod
    def concat(cls, parts: Iterable["FeatureVector"]) -> "FeatureVector":
        parts = list(parts)
        meta: dict = {}
        for p in parts:
            for k, v in p.meta.items():
                meta[k] = meta.get(k, 0) + v if isinstance(v, (int, float)) else v
        if not parts:
            return cls(np.zeros(0), ())
        return cls(
            np.concatenate([p.values for p in parts]),
            tuple(t for p in parts for t in p.tags),
            meta,
        )


@dataclass(frozen=True, eq=False)
class CriterionDataset:
    """Labelled samples for one OSATS criterion.

    ``samples`` holds either feature vectors or raw series; use
    :meth:`featurize` to turn the latter into the former.
    """

    criterion: str
    samples: tuple
    labels: tuple[str, ...]
    task: str = "suturing"
    ids: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.ids:
            object.__setattr__(self, "ids", tuple(f"s{i}" for i in range(len(self.samples))))
        if len(self.samples) != len(self.labels) or len(self.ids) != len(self.labels):
            raise ShapeError("samples, labels and ids must have equal length")
        if len(set(self.labels)) < 2:
            raise DataError(f"criterion {self.criterion}: need at least 2 distinct classes")
        if self.samples and isinstance(self.samples[0], FeatureVector):
            lengths = {len(s) for s in self.samples}
            if len(lengths) > 1:
                raise ShapeError(f"feature vectors of unequal length {sorted(lengths)}")

    def __len__(self):
        return len(self.samples)

    @property
    def X(self) -> np.ndarray:
        if not all(isinstance(s, FeatureVector) for s in self.samples):
            raise DataError("dataset holds raw series; featurize it first")
        return np.vstack([s.values for s in self.samples])

    @property
    def y(self) -> np.ndarray:
        return np.asarray(self.labels)

    def featurize(self, fn) -> "CriterionDataset":
        return CriterionDataset(
            self.criterion, tuple(fn(s) for s in self.samples), self.labels, self.task, self.ids
        )

    @classmethod
    def from_arrays(cls, X, y, criterion="TM", task="suturing") -> "CriterionDataset":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        tags = tuple(FeatureTag("raw", (), coeff_index=j) for j in range(X.shape[1]))
        return cls(criterion, tuple(FeatureVector(row, tags) for row in X), tuple(str(v) for v in y), task)


def zscore_normalize(series: MultiTimeSeries) -> MultiTimeSeries:
    """Center every dimension and scale it to unit population std.

    Zero-variance dimensions come back as all zeros and are listed in
    ``flags`` as ``"constant:<k>"``.
    """
    v = series.values
    mu = v.mean(axis=1, keepdims=True)
    sd = v.std(axis=1, keepdims=True)
    centered = v - mu
    const = sd[:, 0] == 0
    out = np.where(const[:, None], 0.0, centered / np.where(sd == 0, 1.0, sd))
    flags = frozenset(f"constant:{k}" for k in np.flatnonzero(const))
    return MultiTimeSeries(out, series.dim_names, series.sample_rate, flags)


def validate(series, params: EntropyParams | None = None) -> list[str]:
    """Return every invariant violation of ``series``; an empty list means ok.

    ``series`` may be a :class:`MultiTimeSeries` or a raw array, so that
    inputs can be checked before construction.
    """
    params = params or EntropyParams()
    v = series.values if isinstance(series, MultiTimeSeries) else np.asarray(series, dtype=float)
    if v.ndim == 1:
        v = v[None, :]
    problems: list[str] = []
    if v.ndim != 2 or v.shape[0] < 1:
        return [f"series must be K x N, got shape {v.shape}"]
    for k, n in zip(*np.nonzero(~np.isfinite(v))):
        problems.append(f"non-finite value {v[k, n]} at (dim {k}, t {n})")
    need = params.min_length()
    if v.shape[1] < need:
        problems.append(
            f"length {v.shape[1]} too short: m={params.m}, tau={params.tau} "
            f"needs at least {need} samples to embed at order m+1"
        )
    return problems


def check_series(series, params: EntropyParams | None = None) -> None:
    problems = validate(series, params)
    if problems:
        if any("too short" in p for p in problems):
            raise LengthError("; ".join(problems))
        raise DataError("; ".join(problems))


def as_1d(x: Sequence[float]) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim != 1:
        raise ShapeError(f"expected a 1-D sequence, got shape {a.shape}")
    return a
