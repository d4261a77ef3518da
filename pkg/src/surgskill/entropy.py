"""Approximate entropy (ApEn) and cross-approximate entropy (XApEn).

Both statistics compare delay-embedded patterns with the Chebyshev distance
and count matches with ``dist <= r``. The kernel evaluates orders ``m`` and
``m + 1`` and every radius in one blocked pass over the pairwise distances,
so a whole radius grid costs barely more than a single radius.

Conventions
-----------
* ApEn includes self-matches, so every count is at least one.
* Each order is normalized by the number of embedding vectors that actually
  exist at that order: ``N - (m-1)*tau`` for ``m`` and ``N - m*tau`` for
  ``m + 1``.
* XApEn z-scores both inputs and treats ``r`` as absolute; a zero
  cross-count is floored to one match before taking the log.
"""
from __future__ import annotations

from concurrent.futures import Executor
from itertools import combinations
from typing import Sequence

import numpy as np

from .core import (
    VIDEO_XAPEN_RADII,
    EntropyParams,
    FeatureTag,
    FeatureVector,
    LengthError,
    MultiTimeSeries,
    ParameterError,
    ShapeError,
    SkillError,
    as_1d,
    check_series,
)

# cap on distance-block entries (rows x cols) held in memory at once
_BLOCK_ELEMS = 1 << 22


def embed(series_1d: Sequence[float], m: int, tau: int = 1) -> np.ndarray:
    """Delay embedding ``x(i) = [T_i, T_{i+tau}, ..., T_{i+(m-1)tau}]``.

    Returns an array of shape ``(N - (m-1)*tau, m)``.
    """
    x = as_1d(series_1d)
    if m < 1 or tau < 1:
        raise ParameterError(f"m and tau must be >= 1, got m={m}, tau={tau}")
    n = x.size - (m - 1) * tau
    if n < 2:
        raise LengthError(
            f"series of length {x.size} too short for m={m}, tau={tau}: "
            f"need at least {(m - 1) * tau + 2} samples"
        )
    return np.stack([x[k * tau : k * tau + n] for k in range(m)], axis=1)


def _match_counts(x: np.ndarray, y: np.ndarray, m: int, tau: int, radii: np.ndarray):
    """Count, for each template of ``x``, the templates of ``y`` within each radius.

    Returns ``(counts_m, counts_m1)`` with shapes ``(R, N-(m-1)tau)`` and
    ``(R, N-m*tau)``.
    """
    n_m = x.size - (m - 1) * tau
    n_m1 = x.size - m * tau
    ex = embed(x, m, tau)
    ey = embed(y, m, tau)
    R = radii.size
    rmax = float(radii.max())

    # Sort templates by their first coordinate. A row can only match columns
    # whose first coordinate lies within rmax of its own, so each block of
    # sorted rows is compared against one contiguous column window.
    row_order = np.argsort(ex[:, 0], kind="stable")
    col_order = np.argsort(ey[:, 0], kind="stable")
    cols = ey[col_order]
    key = cols[:, 0]
    # widen the window so rounding in the bounds can never drop a true match
    slack = rmax * (1 + 1e-9) + 1e-300
    lo = np.searchsorted(key, ex[:, 0] - slack, side="left")
    hi = np.searchsorted(key, ex[:, 0] + slack, side="right")

    # last coordinate of the order-(m+1) templates; columns with no
    # order-(m+1) template get +inf so they never match
    col_next = np.full(n_m, np.inf)
    has_next = col_order < n_m1
    col_next[has_next] = y[m * tau :][col_order[has_next]]
    x_next = x[m * tau :]

    counts_m = np.zeros((R, n_m), dtype=np.int64)
    counts_m1 = np.zeros((R, n_m1), dtype=np.int64)
    block = max(1, min(512, _BLOCK_ELEMS // n_m))
    for s in range(0, n_m, block):
        rows = row_order[s : s + block]
        c0, c1 = int(lo[rows[0]]), int(hi[rows[-1]])
        if c1 <= c0:
            continue
        d = np.abs(ex[rows, 0, None] - cols[None, c0:c1, 0])
        for k in range(1, m):
            np.maximum(d, np.abs(ex[rows, k, None] - cols[None, c0:c1, k]), out=d)
        for ri in range(R):
            counts_m[ri, rows] = np.count_nonzero(d <= radii[ri], axis=1)
        sel = rows < n_m1
        if sel.any():
            r1 = rows[sel]
            d1 = np.maximum(d[sel], np.abs(x_next[r1, None] - col_next[None, c0:c1]))
            for ri in range(R):
                counts_m1[ri, r1] = np.count_nonzero(d1 <= radii[ri], axis=1)
    return counts_m, counts_m1


def _phi_difference(counts_m: np.ndarray, counts_m1: np.ndarray) -> np.ndarray:
    omega_m = np.log(counts_m / counts_m.shape[1]).mean(axis=1)
    omega_m1 = np.log(counts_m1 / counts_m1.shape[1]).mean(axis=1)
    return omega_m - omega_m1


def _check_length(n: int, m: int, tau: int) -> None:
    if n - m * tau < 2:
        raise LengthError(
            f"series of length {n} too short for m={m}, tau={tau}: "
            f"need at least {m * tau + 2} samples"
        )


def _zscore(x: np.ndarray) -> np.ndarray | None:
    sd = x.std()
    if sd == 0:
        return None
    return (x - x.mean()) / sd


def apen_grid(series_1d, m: int = 1, radii=(0.2,), tau: int = 1) -> np.ndarray:
    """ApEn of one series for every radius fraction in ``radii``."""
    x = as_1d(series_1d)
    _check_length(x.size, m, tau)
    radii = np.asarray(radii, dtype=float)
    if np.any((radii <= 0) | (radii >= 1)):
        raise ParameterError(f"radius fractions must lie in (0, 1), got {radii}")
    if not np.all(np.isfinite(x)):
        raise SkillError("series contains non-finite values")
    z = _zscore(x)
    if z is None:
        return np.zeros(radii.size)
    cm, cm1 = _match_counts(z, z, m, tau, radii)
    return _phi_difference(cm, cm1)


def apen(series_1d, m: int = 1, r_fraction: float = 0.2, tau: int = 1) -> float:
    """Approximate entropy with tolerance ``r_fraction`` times the population std.

    A constant series is perfectly regular and yields 0.

    Examples
    --------
    >>> apen([5.0] * 100)
    0.0
    """
    return float(apen_grid(series_1d, m, (r_fraction,), tau)[0])


def xapen_grid(series_a, series_b, m: int = 1, radii=(0.2,), tau: int = 1):
    """XApEn of ``series_a`` against ``series_b`` for each absolute radius.

    Returns ``(values, floored)`` where ``floored[i]`` counts templates whose
    cross-match count was zero and got floored to one.
    """
    a = as_1d(series_a)
    b = as_1d(series_b)
    if a.size != b.size:
        raise ShapeError(f"series lengths differ: {a.size} vs {b.size}")
    _check_length(a.size, m, tau)
    radii = np.asarray(radii, dtype=float)
    if np.any(radii <= 0):
        raise ParameterError(f"radii must be positive, got {radii}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise SkillError("series contains non-finite values")
    za = _zscore(a)
    zb = _zscore(b)
    za = np.zeros_like(a) if za is None else za
    zb = np.zeros_like(b) if zb is None else zb
    cm, cm1 = _match_counts(za, zb, m, tau, radii)
    floored = (cm == 0).sum(axis=1) + (cm1 == 0).sum(axis=1)
    np.maximum(cm, 1, out=cm)
    np.maximum(cm1, 1, out=cm1)
    return _phi_difference(cm, cm1), floored


def xapen(series_a, series_b, m: int = 1, r: float = 0.2, tau: int = 1) -> float:
    """Cross-approximate entropy (asynchrony) of ``series_a`` against ``series_b``.

    The measure is directional: templates of ``a`` are matched against all
    templates of ``b``.
    """
    values, _ = xapen_grid(series_a, series_b, m, (r,), tau)
    return float(values[0])


def _run(executor: Executor | None, fn, items):
    if executor is None:
        return [fn(it) for it in items]
    # map preserves submission order
    return list(executor.map(fn, items))


def apen_features(
    series: MultiTimeSeries, params: EntropyParams | None = None, executor: Executor | None = None
) -> FeatureVector:
    """Per-dimension ApEn over the radius grid, dimension-major (length ``R*K``)."""
    params = params or EntropyParams()
    check_series(series, params)

    def one(k):
        try:
            return apen_grid(series.row(k), params.m, params.radii, params.tau)
        except SkillError as exc:
            raise type(exc)(f"dimension {k}: {exc}") from exc

    rows = _run(executor, one, range(series.K))
    tags = [
        FeatureTag("ApEn", (k,), radius_index=ri)
        for k in range(series.K)
        for ri in range(params.R)
    ]
    return FeatureVector(np.concatenate(rows) if rows else np.zeros(0), tags)


def xapen_features(
    series: MultiTimeSeries, params: EntropyParams | None = None, executor: Executor | None = None
) -> FeatureVector:
    """XApEn for each unordered dimension pair ``d1 < d2`` and each radius.

    Pairs are visited lexicographically; the output has ``R*K*(K-1)/2``
    entries. Pass ``EntropyParams(radii=VIDEO_XAPEN_RADII)`` for video
    series.
    """
    params = params or EntropyParams()
    check_series(series, params)
    pairs = list(combinations(range(series.K), 2))

    def one(pair):
        d1, d2 = pair
        try:
            return xapen_grid(series.row(d1), series.row(d2), params.m, params.radii, params.tau)
        except SkillError as exc:
            raise type(exc)(f"pair ({d1}, {d2}): {exc}") from exc

    results = _run(executor, one, pairs)
    values = np.concatenate([v for v, _ in results]) if results else np.zeros(0)
    floored = int(sum(int(f.sum()) for _, f in results))
    tags = [FeatureTag("XApEn", p, radius_index=ri) for p in pairs for ri in range(params.R)]
    return FeatureVector(values, tags, {"xapen_floored": floored})


def fused_entropy_features(
    series: MultiTimeSeries,
    params: EntropyParams | None = None,
    xapen_params: EntropyParams | None = None,
    executor: Executor | None = None,
) -> FeatureVector:
    """Concatenation of :func:`apen_features` and :func:`xapen_features`.

    ``xapen_params`` defaults to ``params``; use a single 0.2 radius for
    video series.
    """
    params = params or EntropyParams()
    xapen_params = xapen_params or params
    return FeatureVector.concat(
        [apen_features(series, params, executor), xapen_features(series, xapen_params, executor)]
    )


def video_xapen_params(params: EntropyParams | None = None) -> EntropyParams:
    params = params or EntropyParams()
    return EntropyParams(params.m, params.tau, VIDEO_XAPEN_RADII)


def fused_length(K: int, R: int) -> int:
    """Closed-form length of the fused vector with 6 ApEn radii and ``R`` XApEn radii."""
    return (R * K * K + K * (12 - R)) // 2
