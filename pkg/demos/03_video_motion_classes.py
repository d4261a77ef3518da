"""From interest-point descriptors to a K-dimensional motion-class time series.

A codebook is learned on expert trials only. Every interest point of a
trial is then assigned to its nearest motion class, and the per-frame counts
form a K x N series that entropy features can be computed on.

    python3 demos/03_video_motion_classes.py
"""
import numpy as np

from surgskill.entropy import fused_entropy_features, video_xapen_params
from surgskill.ingest import DescriptorSet, encode_video, train_codebook

rng = np.random.default_rng(3)
centers = rng.normal(scale=5.0, size=(4, 16))


def trial(n_points, n_frames, spread, expert):
    frames = rng.integers(1, n_frames + 1, size=n_points)
    desc = centers[rng.integers(0, 4, size=n_points)] + rng.normal(scale=spread, size=(n_points, 16))
    return DescriptorSet(frames, desc, n_frames, expert=expert)


experts = [trial(400, 300, 0.5, True) for _ in range(3)]
codebook = train_codebook(experts, K=4, seed=0)
print(f"codebook: K={codebook.K}, {codebook.iterations} iterations, inertia {codebook.inertia:.1f}")
print("inertia trace (first 5):", [round(v, 1) for v in codebook.inertia_trace[:5]])

novice = trial(400, 300, 2.0, False)
series = encode_video(novice, codebook)
print(f"encoded novice trial: {series.K} x {series.N}, points per class {series.values.sum(axis=1)}")

fv = fused_entropy_features(series, xapen_params=video_xapen_params())
print(f"{len(fv)} fused entropy features; first three:")
for tag, v in list(zip(fv.tags, fv.values))[:3]:
    print(f"  {tag}: {v:.4f}")
