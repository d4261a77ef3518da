import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20160101)


def write_trial_set(folder, per_class=3, n_frames=80, accel_len=200, seed=0, accel=True):
    """Tiny manifest of video (interest points) + accelerometer trials, 3 skill classes."""
    from surgskill.core import SKILL_CLASSES
    from surgskill.ingest import AccelTrace, DescriptorSet, write_accel_csv, write_stip_file
    from surgskill.synth import skill_series

    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    r = np.random.default_rng(seed)
    centers = r.normal(scale=4.0, size=(5, 4))
    trials = []
    for c, label in enumerate(SKILL_CLASSES):
        for i in range(per_class):
            tid = f"{label[:3]}{i:02d}"
            n_pts = 60 + 20 * c
            frames = r.integers(1, n_frames + 1, size=n_pts)
            desc = centers[r.integers(0, 5, size=n_pts)] + r.normal(scale=0.3 + 0.3 * c, size=(n_pts, 4))
            write_stip_file(folder / f"{tid}.stip", DescriptorSet(frames, desc, n_frames, tid))
            entry = {"id": tid, "task": "suturing", "expert": label == "expert",
                     "video": {"stip": f"{tid}.stip", "n_frames": n_frames},
                     "labels": {"RT": label, "TM": label}}
            if accel:
                s = skill_series(label, 6, accel_len, np.random.default_rng([seed, c, i]))
                names = []
                for k, rows in enumerate((s.values[:3], s.values[3:])):
                    names.append(f"{tid}_s{k}.csv")
                    write_accel_csv(folder / names[-1], AccelTrace(rows, 100.0, f"s{k}"))
                entry["accel"] = names
            trials.append(entry)
    path = folder / "manifest.json"
    path.write_text(json.dumps({"version": 1, "trials": trials}, indent=1), encoding="utf-8")
    return path


@pytest.fixture
def trial_manifest(tmp_path):
    return write_trial_set(tmp_path / "data")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.VERDICTS):
        ok, detail = mod.VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
