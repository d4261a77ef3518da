"""Command-line entry point: ``surgskill {codebook,featurize,evaluate,synth,report}``.

Configuration comes from a ``key = value`` text file whose values are JSON
literals (see README). Command-line flags override file values, and the
``SURGSKILL_OUTPUT`` environment variable sets the default output root.
Every output embeds the fully resolved configuration.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import warnings
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import SmtParams, SpectralParams, dct_features, dft_features, smt_features
from .core import (
    DEFAULT_RADII,
    K_GRID,
    OSATS_CRITERIA,
    TASKS,
    VIDEO_XAPEN_RADII,
    CriterionDataset,
    DataError,
    EntropyParams,
    FeatureTag,
    FeatureVector,
    MultiTimeSeries,
    ParameterError,
    SkillError,
)
from .entropy import apen_features, fused_entropy_features, xapen_features
from .ingest import (
    AccelTrace,
    MotionCodebook,
    atomic_write_text,
    combine_accel,
    early_fuse,
    encode_video,
    load_manifest,
    parse_accel_csv,
    parse_stip_file,
    train_codebook,
    write_accel_csv,
)
from .learn import Pipeline, Scheme, sweep_k, table2_rows, TABLE2_HEADER, OsatsTable
from .synth import gen_skill_dataset, phase_shape, phase_sweep, snr_sweep, snr_trend

log = logging.getLogger("surgskill")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CHECK = 4

OUTPUT_ENV = "SURGSKILL_OUTPUT"
FEATURES = ("apen", "xapen", "apen+xapen", "dct", "dft", "smt")
MODALITIES = ("video", "accel", "fused")
FEATURE_SCHEMA = "surgskill.features/1"
EVAL_SCHEMA = "surgskill.evaluation/1"


class ConfigError(SkillError, ValueError):
    pass


class CheckFailure(SkillError):
    pass


@dataclass
class ExperimentConfig:
    task: str = "suturing"
    modality: str = "video"
    feature: str = "apen+xapen"
    k_grid: list = field(default_factory=lambda: list(K_GRID))
    radii: list = field(default_factory=lambda: list(DEFAULT_RADII))
    video_xapen_radii: list = field(default_factory=lambda: list(VIDEO_XAPEN_RADII))
    m: int = 1
    tau: int = 1
    coeffs_per_dim: int = 10
    n_windows: int = 10
    quant_levels: int = 8
    schemes: list = field(default_factory=lambda: ["loocv"])
    seed: int = 0
    paper_protocol: bool = False
    max_dim: int = 10
    metric: str = "euclidean"
    criteria: list = field(default_factory=list)
    manifest: str = ""
    output_dir: str = ""
    workers: int = 1
    spike_threshold: float | None = None
    snr_grid: list = field(default_factory=lambda: list(range(1, 51)))
    phase_points: int = 21
    phase_snr: float = 10.0
    reps: int = 20
    sine_cycles: float = 8.0
    sine_length: int = 1024
    synth_per_class: int = 10
    synth_K: int = 6

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.modality not in MODALITIES:
            raise ConfigError(f"modality must be one of {MODALITIES}, got {self.modality!r}")
        if self.feature not in FEATURES:
            raise ConfigError(f"feature must be one of {FEATURES}, got {self.feature!r}")
        bad = [k for k in self.k_grid if k not in K_GRID]
        if bad:
            raise ConfigError(f"k_grid values {bad} are outside {list(K_GRID)}")
        bad = [c for c in self.criteria if c not in OSATS_CRITERIA]
        if bad:
            raise ConfigError(f"unknown criteria {bad}")
        try:
            self.entropy_params()
            EntropyParams(self.m, self.tau, tuple(self.video_xapen_radii))
            SpectralParams(self.coeffs_per_dim)
            SmtParams(self.n_windows, self.quant_levels)
            for s in self.schemes:
                self.scheme(s)
        except ParameterError as exc:
            raise ConfigError(str(exc)) from None
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def entropy_params(self) -> EntropyParams:
        return EntropyParams(self.m, self.tau, tuple(self.radii))

    def scheme(self, text: str) -> Scheme:
        return Scheme.parse(text, seed=derive_seed(self.seed, "cv"))

    def pipeline(self) -> Pipeline:
        return Pipeline(True, self.max_dim, self.metric, self.paper_protocol)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        """Serialize as ``key = <json>`` lines."""
        return "".join(f"{k} = {json.dumps(v)}\n" for k, v in self.to_dict().items())

    @classmethod
    def loads(cls, text: str, source: str = "<config>") -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, raw = line.partition("=")
            key = key.strip()
            if not sep or key not in known:
                raise ConfigError(f"{source}:{lineno}: unknown or malformed entry {line!r}")
            try:
                values[key] = json.loads(raw.strip())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{source}:{lineno}: value for {key} is not JSON: {exc}") from None
        return cls(**values)


def derive_seed(seed: int, name: str, *extra: int) -> int:
    """Named sub-stream seed derived from the top-level seed."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode()), *map(int, extra)])
    return int(ss.generate_state(1)[0])


def _config_comment(cfg: ExperimentConfig) -> str:
    return "config: " + json.dumps(cfg.to_dict(), sort_keys=True)


def _write_json(path: Path, doc: dict) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _out(cfg: ExperimentConfig) -> Path:
    p = Path(cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _trials(cfg: ExperimentConfig):
    if not cfg.manifest:
        raise ConfigError("a manifest path is required")
    if not Path(cfg.manifest).exists():
        raise ConfigError(f"manifest {cfg.manifest} does not exist")
    return [t for t in load_manifest(cfg.manifest) if t.task == cfg.task]


def cmd_codebook(cfg: ExperimentConfig) -> list[Path]:
    """Train one codebook per K on the manifest's expert trials."""
    experts = [t for t in _trials(cfg) if t.expert]
    if not experts:
        raise DataError(f"manifest lists no expert trials for task {cfg.task}")
    sets = []
    for t in experts:
        if not t.stip:
            raise DataError(f"trial {t.id}: no interest-point file")
        if not Path(t.stip).exists():
            raise DataError(f"trial {t.id}: missing file {t.stip}")
        try:
            sets.append(parse_stip_file(t.stip, t.n_frames, t.id, True))
        except SkillError as exc:
            raise DataError(f"trial {t.id}: {exc}") from None
    outdir = _out(cfg) / "codebooks"
    outdir.mkdir(exist_ok=True)
    paths = []
    for K in cfg.k_grid:
        cb = train_codebook(sets, K, seed=derive_seed(cfg.seed, "codebook", K))
        path = outdir / f"codebook_{cfg.task}_K{K}.txt"
        cb.save(path, comments=[_config_comment(cfg)])
        paths.append(path)
        log.info("codebook K=%d inertia=%.6g -> %s", K, cb.inertia, path)
    return paths


def _entropy_fv(cfg, series, video: bool) -> FeatureVector:
    p = cfg.entropy_params()
    xp = EntropyParams(cfg.m, cfg.tau, tuple(cfg.video_xapen_radii)) if video else p
    if cfg.feature == "apen":
        return apen_features(series, p)
    if cfg.feature == "xapen":
        return xapen_features(series, xp)
    return fused_entropy_features(series, p, xp)


def extract(cfg: ExperimentConfig, series: MultiTimeSeries, video: bool) -> FeatureVector:
    if cfg.feature in ("apen", "xapen", "apen+xapen"):
        return _entropy_fv(cfg, series, video)
    if cfg.feature == "dft":
        return dft_features(series, SpectralParams(cfg.coeffs_per_dim))
    if cfg.feature == "dct":
        return dct_features(series, SpectralParams(cfg.coeffs_per_dim))
    return smt_features(series, SmtParams(cfg.n_windows, cfg.quant_levels))


def _featurize_trial(cfg, trial, codebooks):
    """Feature records for one trial; ``None`` means skipped (missing accel in fused mode)."""
    records = []
    accel_fv = None
    if cfg.modality in ("accel", "fused"):
        if not trial.accel:
            if cfg.modality == "fused":
                warnings.warn(f"trial {trial.id}: no accelerometer data, skipped")
                return None
            raise DataError(f"trial {trial.id}: no accelerometer data")
        traces = [parse_accel_csv(p, f"s{i}", cfg.spike_threshold) for i, p in enumerate(trial.accel[:2])]
        accel_fv = extract(cfg, combine_accel(*traces), video=False)
        if cfg.modality == "accel":
            return [(None, accel_fv)]
    if not trial.stip:
        raise DataError(f"trial {trial.id}: no interest-point file")
    ds = parse_stip_file(trial.stip, trial.n_frames, trial.id)
    for K in cfg.k_grid:
        fv = extract(cfg, encode_video(ds, codebooks[K]), video=True)
        records.append((K, early_fuse(fv, accel_fv) if accel_fv is not None else fv))
    return records


def cmd_featurize(cfg: ExperimentConfig) -> tuple[Path, list]:
    """Write the feature store; returns its path and the per-trial failures."""
    trials = _trials(cfg)
    if not trials:
        warnings.warn("manifest has no trials for this task; writing an empty store")
    codebooks = {}
    if cfg.modality in ("video", "fused") and trials:
        for K in cfg.k_grid:
            path = _out(cfg) / "codebooks" / f"codebook_{cfg.task}_K{K}.txt"
            if not path.exists():
                raise DataError(f"codebook {path} missing; run the codebook command first")
            codebooks[K] = MotionCodebook.load(path)

    def work(trial):
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                res = _featurize_trial(cfg, trial, codebooks)
            return res, None, [str(w.message) for w in caught]
        except (SkillError, OSError) as exc:
            return None, f"{type(exc).__name__}: {exc}", []

    with ThreadPoolExecutor(cfg.workers) as pool:
        results = list(pool.map(work, trials))

    records, failures, notes = [], [], []
    for trial, (res, err, msgs) in zip(trials, results):
        for m in msgs:
            log.warning("%s", m)
            notes.append({"trial": trial.id, "warning": m})
        if err:
            log.error("trial %s failed: %s", trial.id, err)
            failures.append({"trial": trial.id, "error": err})
            continue
        if res is None:
            continue
        for K, fv in res:
            records.append({
                "trial": trial.id,
                "task": trial.task,
                "modality": cfg.modality,
                "feature": cfg.feature,
                "K": K,
                "labels": dict(sorted(trial.labels.items())),
                "tags": [str(t) for t in fv.tags],
                "values": [float(v) for v in fv.values],
                "meta": fv.meta,
            })
    doc = {
        "schema": FEATURE_SCHEMA,
        "version": __version__,
        "config": cfg.to_dict(),
        "records": records,
        "failures": failures,
        "warnings": notes,
    }
    path = _out(cfg) / "features.json"
    _write_json(path, doc)
    return path, failures


def _datasets_by_k(cfg, store: dict) -> dict:
    by_k: dict = {}
    for rec in store["records"]:
        by_k.setdefault(rec["K"], []).append(rec)
    out = {}
    for K, recs in by_k.items():
        criteria = cfg.criteria or sorted(
            {c for r in recs for c in r["labels"]}, key=lambda c: OSATS_CRITERIA.index(c)
            if c in OSATS_CRITERIA else len(OSATS_CRITERIA)
        )
        dsets = []
        for c in criteria:
            rows = [r for r in recs if c in r["labels"]]
            if len({r["labels"][c] for r in rows}) < 2:
                log.warning("criterion %s: fewer than 2 classes, skipped", c)
                continue
            tags = [FeatureTag.parse(t) for t in rows[0]["tags"]]
            dsets.append(CriterionDataset(
                c, tuple(FeatureVector(r["values"], tags) for r in rows),
                tuple(r["labels"][c] for r in rows), cfg.task, tuple(r["trial"] for r in rows),
            ))
        if dsets:
            out[K] = dsets
    return out


def _scheme_tag(scheme: Scheme) -> str:
    return "loocv" if scheme.kind == "loocv" else f"{scheme.k}fold"


def cmd_evaluate(cfg: ExperimentConfig) -> list[Path]:
    """Cross-validate the feature store under each configured scheme."""
    store_path = _out(cfg) / "features.json"
    if not store_path.exists():
        raise DataError(f"feature store {store_path} missing; run featurize first")
    store = json.loads(store_path.read_text(encoding="utf-8"))
    by_k = _datasets_by_k(cfg, store)
    if not by_k:
        raise DataError("feature store has no evaluable criterion datasets")
    paths = []
    for text in cfg.schemes:
        scheme = cfg.scheme(text)
        with ThreadPoolExecutor(cfg.workers) as pool:
            sweep = sweep_k(by_k, scheme, cfg.pipeline(), cfg.feature, cfg.modality,
                            executor=pool if cfg.workers > 1 else None)
        tag = _scheme_tag(scheme)
        doc = {
            "schema": EVAL_SCHEMA,
            "version": __version__,
            "config": cfg.to_dict(),
            "features_config": store["config"],
            "scheme": str(scheme),
            "mode": cfg.pipeline().mode,
            "paper_protocol": cfg.paper_protocol,
            "best_K": sweep.best_K,
            "tables": [sweep.tables[K].to_dict() for K in sorted(sweep.tables, key=_k_key)],
        }
        base = _out(cfg) / f"evaluation_{cfg.task}_{cfg.modality}_{cfg.feature}_{tag}"
        _write_json(base.with_suffix(".json"), doc)
        rows = table2_rows([sweep.tables[K] for K in sorted(sweep.tables, key=_k_key)])
        per_crit = [
            (c, f"{100 * r.accuracy:.1f}", "" if K is None else K)
            for K in sorted(sweep.tables, key=_k_key)
            for c, r in sweep.tables[K].reports.items()
        ]
        csv_text = _csv([_config_comment(cfg), f"best_K: {sweep.best_K}"], TABLE2_HEADER, rows)
        atomic_write_text(base.with_suffix(".csv"), csv_text)
        atomic_write_text(
            base.with_name(base.name + "_criteria.csv"),
            _csv([_config_comment(cfg)], ("criterion", "accuracy", "K"), per_crit),
        )
        paths.append(base.with_suffix(".json"))
        log.info("%s: best K=%s average accuracy %.3f", tag, sweep.best_K, sweep.best.average_accuracy)
    return paths


def _k_key(K):
    return -1 if K is None else K


def _csv(comments, header, rows) -> str:
    import csv
    import io

    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_report(cfg: ExperimentConfig) -> Path:
    """Collect the best-K row of every evaluation in the output directory into one table."""
    out = _out(cfg)
    rows = []
    for p in sorted(out.glob("evaluation_*.json")):
        doc = json.loads(p.read_text(encoding="utf-8"))
        tables = [OsatsTable.from_dict(t) for t in doc["tables"]]
        best = next(t for t in tables if t.K == doc["best_K"])
        rows.extend(table2_rows([best]))
    if not rows:
        raise DataError(f"no evaluation_*.json files in {out}")
    path = out / "table2.csv"
    atomic_write_text(path, _csv([_config_comment(cfg)], TABLE2_HEADER, rows))
    return path


def cmd_synth(cfg: ExperimentConfig, check: bool = False, dataset: bool = False) -> list[Path]:
    """Write the SNR and phase sweep curves; optionally a synthetic trial set with manifest."""
    out = _out(cfg)
    seed = derive_seed(cfg.seed, "synth")
    snr = snr_sweep(tuple(cfg.radii), cfg.snr_grid, cfg.reps, seed, cfg.sine_cycles, cfg.sine_length,
                    cfg.m, cfg.tau)
    phase = phase_sweep(np.linspace(0, np.pi, cfg.phase_points), cfg.phase_snr, cfg.reps, seed, 0.2,
                        cfg.sine_cycles, cfg.sine_length, cfg.m, cfg.tau)
    comment = [_config_comment(cfg)]
    paths = [out / "snr_sweep.csv", out / "phase_sweep.csv"]
    atomic_write_text(paths[0], snr.to_csv(comment))
    atomic_write_text(paths[1], phase.to_csv(comment))
    if dataset:
        paths.append(write_synthetic_trials(cfg, out / "synthetic"))
    if check:
        problems = []
        for r, rho in snr_trend(snr).items():
            if not rho <= -0.9:
                problems.append(f"SNR trend at r={r}: Spearman {rho:.3f} > -0.9")
        shape = phase_shape(phase)
        if not 0.35 <= shape["peak_phase_over_pi"] <= 0.65:
            problems.append(f"phase peak at {shape['peak_phase_over_pi']:.2f} pi, outside [0.35, 0.65] pi")
        for end in ("ratio_at_0", "ratio_at_pi"):
            if shape[end] > 0.25:
                problems.append(f"phase curve {end} = {shape[end]:.3f} > 0.25")
        if problems:
            raise CheckFailure("; ".join(problems))
    return paths


def write_synthetic_trials(cfg: ExperimentConfig, folder: Path) -> Path:
    """Two 3-axis accelerometer CSVs per synthetic trial, plus a manifest labelling every criterion."""
    folder.mkdir(parents=True, exist_ok=True)
    K = cfg.synth_K
    if K != 6:
        raise ConfigError("synthetic trials are written as two 3-axis sensors; synth_K must be 6")
    crits = cfg.criteria or ["TM"]
    ds = gen_skill_dataset(3, cfg.synth_per_class, K, cfg.sine_length, derive_seed(cfg.seed, "skill"))
    trials = []
    for tid, series, label in zip(ds.ids, ds.samples, ds.labels):
        files = []
        for s, rows in enumerate((series.values[:3], series.values[3:])):
            name = f"{tid}_s{s}.csv"
            t = np.arange(series.N) / 100.0
            write_accel_csv(folder / name, AccelTrace(rows, 100.0, f"s{s}", t))
            files.append(name)
        trials.append({"id": tid, "task": cfg.task, "expert": label == "expert", "accel": files,
                       "labels": {c: label for c in crits}})
    path = folder / "manifest.json"
    _write_json(path, {"version": 1, "trials": trials})
    return path


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="surgskill", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("codebook", "train motion codebooks on expert trials"),
        ("featurize", "extract per-trial feature vectors"),
        ("evaluate", "cross-validate features per OSATS criterion"),
        ("synth", "write synthetic sweep curves (and optionally a synthetic trial set)"),
        ("report", "collect evaluations into one summary table"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("-c", "--config", help="key = value config file")
        sp.add_argument("-o", "--output", help="output directory")
        sp.add_argument("--manifest")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--task", choices=TASKS)
        sp.add_argument("--modality", choices=MODALITIES)
        sp.add_argument("--feature", choices=FEATURES)
        sp.add_argument("--k-grid", type=lambda s: [int(v) for v in s.split(",")])
        sp.add_argument("--scheme", action="append", dest="schemes",
                        help="loocv, 2fold, 5fold, 10fold or kfold:K:SEED; repeatable")
        sp.add_argument("--paper-protocol", action="store_true", default=None,
                        help="select features once on all data before cross-validation")
        sp.add_argument("--workers", type=int)
        sp.add_argument("--reps", type=int)
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "synth":
            sp.add_argument("--check", action="store_true", help="fail (exit 4) if a trend check fails")
            sp.add_argument("--dataset", action="store_true", help="also write synthetic trials + manifest")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        cfg = ExperimentConfig.loads(text, args.config)
    if not cfg.output_dir:
        cfg.output_dir = os.environ.get(OUTPUT_ENV, "surgskill-out")
    overrides = {
        "output_dir": args.output, "manifest": args.manifest, "seed": args.seed, "task": args.task,
        "modality": args.modality, "feature": args.feature, "k_grid": args.k_grid,
        "schemes": args.schemes, "paper_protocol": args.paper_protocol, "workers": args.workers,
        "reps": args.reps,
    }
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "codebook":
            for path in cmd_codebook(cfg):
                print(path)
        elif args.command == "featurize":
            path, failures = cmd_featurize(cfg)
            print(path)
            if failures:
                print(f"{len(failures)} trial(s) failed", file=sys.stderr)
                return EXIT_DATA
        elif args.command == "evaluate":
            for path in cmd_evaluate(cfg):
                print(path)
        elif args.command == "synth":
            for path in cmd_synth(cfg, args.check, args.dataset):
                print(path)
        elif args.command == "report":
            print(cmd_report(cfg))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckFailure as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (SkillError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
