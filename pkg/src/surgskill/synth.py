"""Synthetic signals: noisy sinusoids for the entropy sanity curves and
skill-like multichannel datasets for end-to-end checks.

Every random draw comes from ``np.random.default_rng([seed, stream, ...])``
so a grid point's result depends only on its own coordinates, never on
evaluation order.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import spearmanr

from .core import (
    DEFAULT_RADII,
    SKILL_CLASSES,
    CriterionDataset,
    MultiTimeSeries,
    ParameterError,
)
from .entropy import apen_grid, xapen

DEFAULT_CYCLES = 8.0
DEFAULT_LENGTH = 1024
SNR_GRID = tuple(range(1, 51))

_SNR_STREAM = 1
_PHASE_STREAM = 2
_SKILL_STREAM = 3


@dataclass(frozen=True)
class SineSpec:
    """Unit-amplitude sine, ``frequency`` cycles over ``length`` samples.

    ``snr`` is the linear signal-to-noise power ratio; ``None`` or ``inf``
    disables noise.
    """

    frequency: float = DEFAULT_CYCLES
    phase: float = 0.0
    snr: float | None = None
    length: int = DEFAULT_LENGTH
    seed: int | Sequence[int] = 0

    def __post_init__(self):
        if self.length < 16:
            raise ParameterError(f"length must be >= 16, got {self.length}")
        if self.snr is not None and not self.snr > 0:
            raise ParameterError(f"snr must be positive, got {self.snr}")


def gen_sine(spec: SineSpec) -> MultiTimeSeries:
    """Sine plus white Gaussian noise rescaled to hit the requested SNR exactly.

    The noise draw is rescaled so its realized mean power equals the realized
    signal power divided by ``snr``.
    """
    t = np.arange(spec.length)
    s = np.sin(2 * np.pi * spec.frequency * t / spec.length + spec.phase)
    if spec.snr is None or math.isinf(spec.snr):
        return MultiTimeSeries(s)
    noise = np.random.default_rng(spec.seed).standard_normal(spec.length)
    noise *= np.sqrt(np.mean(s**2) / spec.snr / np.mean(noise**2))
    return MultiTimeSeries(s + noise)


def realized_snr(spec: SineSpec) -> float:
    clean = gen_sine(SineSpec(spec.frequency, spec.phase, None, spec.length)).values[0]
    noise = gen_sine(spec).values[0] - clean
    return float(np.mean(clean**2) / np.mean(noise**2))


@dataclass
class CurveTable:
    """Plot-ready long-format table."""

    header: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        i = self.header.index(name)
        return np.array([r[i] for r in self.rows])

    def to_csv(self, comments: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for c in comments:
            buf.write(f"# {c}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for r in self.rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])
        return buf.getvalue()


def snr_sweep(radii=DEFAULT_RADII, snr_grid=SNR_GRID, reps: int = 20, seed: int = 0,
              frequency: float = DEFAULT_CYCLES, length: int = DEFAULT_LENGTH,
              m: int = 1, tau: int = 1) -> CurveTable:
    """Mean ApEn of noisy sines over an SNR grid, for each radius fraction.

    Columns: ``snr, radius, mean_apen, std_apen, reps``.
    """
    radii = tuple(float(r) for r in radii)
    table = CurveTable(("snr", "radius", "mean_apen", "std_apen", "reps"))
    for gi, snr in enumerate(snr_grid):
        vals = np.array([
            apen_grid(
                gen_sine(SineSpec(frequency, 0.0, float(snr), length, [seed, _SNR_STREAM, gi, rep])).values[0],
                m, radii, tau,
            )
            for rep in range(reps)
        ])
        for ri, r in enumerate(radii):
            table.rows.append((float(snr), r, float(vals[:, ri].mean()), float(vals[:, ri].std()), reps))
    return table


def snr_trend(table: CurveTable) -> dict:
    """Spearman correlation between SNR and mean ApEn, per radius."""
    out = {}
    radius, snr, mean = table.column("radius"), table.column("snr"), table.column("mean_apen")
    for r in dict.fromkeys(radius.tolist()):
        sel = radius == r
        out[r] = float(spearmanr(snr[sel], mean[sel]).statistic)
    return out


def phase_sweep(phase_grid=None, snr: float = 10.0, reps: int = 20, seed: int = 0, r: float = 0.2,
                frequency: float = DEFAULT_CYCLES, length: int = DEFAULT_LENGTH,
                m: int = 1, tau: int = 1) -> CurveTable:
    """Mean XApEn between a phase-0 reference sine and a phase-shifted sine of equal SNR.

    Reference and shifted signals get independent noise. Columns:
    ``phase, phase_over_pi, mean_xapen, std_xapen, reps``.
    """
    if phase_grid is None:
        phase_grid = np.linspace(0.0, np.pi, 21)
    table = CurveTable(("phase", "phase_over_pi", "mean_xapen", "std_xapen", "reps"))
    for gi, phase in enumerate(phase_grid):
        vals = []
        for rep in range(reps):
            ref = gen_sine(SineSpec(frequency, 0.0, snr, length, [seed, _PHASE_STREAM, gi, rep, 0]))
            sh = gen_sine(SineSpec(frequency, float(phase), snr, length, [seed, _PHASE_STREAM, gi, rep, 1]))
            vals.append(xapen(ref.values[0], sh.values[0], m, r, tau))
        vals = np.array(vals)
        table.rows.append((float(phase), float(phase / np.pi), float(vals.mean()), float(vals.std()), reps))
    return table


def phase_shape(table: CurveTable) -> dict:
    """Peak location and end-point ratios of a phase-sweep curve."""
    phase, mean = table.column("phase"), table.column("mean_xapen")
    peak = int(np.argmax(mean))
    return {
        "peak_phase_over_pi": float(phase[peak] / np.pi),
        "peak": float(mean[peak]),
        "ratio_at_0": float(mean[0] / mean[peak]),
        "ratio_at_pi": float(mean[-1] / mean[peak]),
    }


# Per-class generator settings. Experts move smoothly and in lockstep;
# beginners add more sensor noise, more sudden jerks and more phase drift
# between channels.
SKILL_PROFILES = {
    "expert": {"noise": 0.05, "jerks_per_1k": 1.0, "drift": 0.002},
    "intermediate": {"noise": 0.2, "jerks_per_1k": 4.0, "drift": 0.02},
    "beginner": {"noise": 0.45, "jerks_per_1k": 10.0, "drift": 0.06},
}


def skill_series(label: str, K: int, length: int, rng: np.random.Generator) -> MultiTimeSeries:
    """One synthetic trial of the given skill class."""
    prof = SKILL_PROFILES[label]
    t = np.arange(length)
    cycles = rng.uniform(6.0, 14.0) * length / DEFAULT_LENGTH
    base = 2 * np.pi * cycles * t / length
    rows = []
    for d in range(K):
        amp = rng.uniform(0.5, 2.0)
        offset = rng.uniform(0, 2 * np.pi)
        drift = np.cumsum(rng.normal(0, prof["drift"] * 2 * np.pi, length))
        x = amp * np.sin(base + offset + drift)
        x += amp * prof["noise"] * rng.standard_normal(length)
        n_jerks = rng.poisson(prof["jerks_per_1k"] * length / 1000)
        for start in rng.integers(0, length, n_jerks):
            width = int(rng.integers(3, 12))
            x[start : start + width] += amp * rng.choice([-1, 1]) * rng.uniform(1.0, 3.0)
        rows.append(x)
    return MultiTimeSeries(np.array(rows))


def gen_skill_dataset(classes: int = 3, per_class: int = 10, K: int = 6, length: int = DEFAULT_LENGTH,
                      seed: int = 0, criterion: str = "TM", task: str = "suturing") -> CriterionDataset:
    """Raw-series dataset whose classes differ in regularity, jerk rate and channel synchrony.

    Samples are ordered beginner, intermediate, expert (``classes=2`` drops
    intermediate).
    """
    if classes not in (2, 3):
        raise ParameterError(f"classes must be 2 or 3, got {classes}")
    if per_class < 4:
        raise ParameterError(f"per_class must be >= 4, got {per_class}")
    labels = SKILL_CLASSES if classes == 3 else ("beginner", "expert")
    samples, ys, ids = [], [], []
    for ci, label in enumerate(labels):
        for i in range(per_class):
            rng = np.random.default_rng([seed, _SKILL_STREAM, ci, i])
            samples.append(skill_series(label, K, length, rng))
            ys.append(label)
            ids.append(f"syn_{label[:3]}_{i:03d}")
    return CriterionDataset(criterion, tuple(samples), tuple(ys), task, tuple(ids))
