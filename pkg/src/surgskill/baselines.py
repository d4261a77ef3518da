"""Comparison features: DFT and DCT coefficients and sequential motion texture (SMT)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .core import FeatureTag, FeatureVector, MultiTimeSeries, ParameterError, check_series

HARALICK_NAMES = (
    "asm",
    "contrast",
    "correlation",
    "sum_of_squares",
    "idm",
    "sum_average",
    "sum_variance",
    "sum_entropy",
    "entropy",
    "difference_variance",
    "difference_entropy",
    "imc1",
    "imc2",
)


@dataclass(frozen=True)
class SpectralParams:
    coeffs_per_dim: int = 10

    def __post_init__(self):
        if self.coeffs_per_dim < 1:
            raise ParameterError(f"coeffs_per_dim must be >= 1, got {self.coeffs_per_dim}")


@dataclass(frozen=True)
class SmtParams:
    n_windows: int = 10
    quant_levels: int = 8

    def __post_init__(self):
        if self.n_windows < 1:
            raise ParameterError(f"n_windows must be >= 1, got {self.n_windows}")
        if self.quant_levels < 2:
            raise ParameterError(f"quant_levels must be >= 2, got {self.quant_levels}")


def _spectral(series, p, family, transform):
    p = p or SpectralParams()
    check_series(series)
    c = p.coeffs_per_dim
    if c > series.N:
        raise ParameterError(f"coeffs_per_dim={c} exceeds series length {series.N}")
    coeffs = transform(series.values)[:, :c]
    tags = [FeatureTag(family, (k,), coeff_index=j) for k in range(series.K) for j in range(c)]
    return FeatureVector(coeffs.reshape(-1), tags)


def dft_features(series: MultiTimeSeries, p: SpectralParams | None = None) -> FeatureVector:
    """Magnitudes of the lowest ``coeffs_per_dim`` Fourier coefficients per dimension (DC first)."""
    return _spectral(series, p, "DFT", lambda v: np.abs(np.fft.fft(v, axis=1)))


def dct_features(series: MultiTimeSeries, p: SpectralParams | None = None) -> FeatureVector:
    """Signed type-II DCT coefficients ``sum_n x_n cos(pi k (2n+1) / 2N)``, lowest first."""
    # scipy's unnormalized type-II DCT carries an extra factor of 2
    return _spectral(series, p, "DCT", lambda v: scipy.fft.dct(v, type=2, axis=1) / 2.0)


def frame_kernel(window: np.ndarray) -> np.ndarray:
    """Inner products between the per-time-step K-vectors of a ``K x W`` window."""
    return window.T @ window


def quantize(mat: np.ndarray, levels: int) -> np.ndarray:
    """Min-max scale to [0, 1] and bin into ``levels`` gray levels. A flat matrix maps to level 0."""
    lo, hi = mat.min(), mat.max()
    if hi == lo:
        return np.zeros(mat.shape, dtype=int)
    scaled = (mat - lo) / (hi - lo)
    return np.minimum((scaled * levels).astype(int), levels - 1)


def cooccurrence(q: np.ndarray, levels: int) -> np.ndarray:
    """Symmetric normalized co-occurrence matrix at pixel offset (1, 1)."""
    a = q[:-1, :-1].ravel()
    b = q[1:, 1:].ravel()
    P = np.zeros((levels, levels))
    np.add.at(P, (a, b), 1.0)
    P = P + P.T
    return P / P.sum()


def _entropy2(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def haralick(P: np.ndarray) -> np.ndarray:
    """Thirteen Haralick statistics of a normalized co-occurrence matrix, in :data:`HARALICK_NAMES` order.

    Logs are base 2 with ``0 log 0 = 0``. Sum variance is taken about the sum
    average. Correlation and IMC1 are 0 when their denominators vanish.
    """
    L = P.shape[0]
    i, j = np.indices(P.shape)
    px, py = P.sum(axis=1), P.sum(axis=0)
    lv = np.arange(L)
    mux, muy = (lv * px).sum(), (lv * py).sum()
    sx = np.sqrt(((lv - mux) ** 2 * px).sum())
    sy = np.sqrt(((lv - muy) ** 2 * py).sum())
    psum = np.bincount((i + j).ravel(), P.ravel(), minlength=2 * L - 1)
    pdiff = np.bincount(np.abs(i - j).ravel(), P.ravel(), minlength=L)
    ks = np.arange(2 * L - 1)

    asm = (P**2).sum()
    contrast = ((i - j) ** 2 * P).sum()
    corr = ((i - mux) * (j - muy) * P).sum() / (sx * sy) if sx > 0 and sy > 0 else 0.0
    sos = ((i - (i * P).sum()) ** 2 * P).sum()
    idm = (P / (1.0 + (i - j) ** 2)).sum()
    savg = (ks * psum).sum()
    svar = ((ks - savg) ** 2 * psum).sum()
    sent = _entropy2(psum)
    ent = _entropy2(P.ravel())
    dmean = (lv * pdiff).sum()
    dvar = ((lv - dmean) ** 2 * pdiff).sum()
    dent = _entropy2(pdiff)
    hx, hy = _entropy2(px), _entropy2(py)
    outer = np.outer(px, py)
    nz = P > 0
    hxy1 = float(-(P[nz] * np.log2(outer[nz])).sum())
    hxy2 = _entropy2(outer.ravel())
    denom = max(hx, hy)
    imc1 = (ent - hxy1) / denom if denom > 0 else 0.0
    imc2 = np.sqrt(max(0.0, 1.0 - np.exp(-2.0 * (hxy2 - ent))))
    return np.array(
        [asm, contrast, corr, sos, idm, savg, svar, sent, ent, dvar, dent, imc1, imc2], dtype=float
    )


def window_bounds(N: int, n_windows: int) -> list[tuple[int, int]]:
    """Equal contiguous windows; the last one absorbs the remainder."""
    w = N // n_windows
    return [(k * w, (k + 1) * w if k < n_windows - 1 else N) for k in range(n_windows)]


def smt_features(series: MultiTimeSeries, p: SmtParams | None = None) -> FeatureVector:
    """Sequential motion texture: Haralick statistics of each window's frame-kernel matrix."""
    p = p or SmtParams()
    check_series(series)
    if series.N < 2 * p.n_windows:
        raise ParameterError(
            f"{series.N} time steps cannot fill {p.n_windows} windows of at least 2 steps"
        )
    feats = []
    for a, b in window_bounds(series.N, p.n_windows):
        G = frame_kernel(series.values[:, a:b])
        feats.append(haralick(cooccurrence(quantize(G, p.quant_levels), p.quant_levels)))
    tags = [
        FeatureTag("SMT", tuple(range(series.K)), coeff_index=w * 13 + s)
        for w in range(p.n_windows)
        for s in range(13)
    ]
    return FeatureVector(np.concatenate(feats), tags)
