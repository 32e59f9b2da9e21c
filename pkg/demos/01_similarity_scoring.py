"""Duplicate control with the similarity scorer.

Builds two small synthetic "team" image folders, extracts the built-in
4096-d features, prints local and global duplicate scores, then samples a
diverse subset with a similarity threshold.
"""
# %%
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from conetools.similarity import extract_many, sample_diverse, save_features, load_features, score_report

rng = np.random.default_rng(0)
root = Path(tempfile.mkdtemp())

# %% A "video stream": one scene with tiny per-frame noise -> near duplicates.
scene = rng.integers(0, 256, (120, 160, 3)).astype(np.int16)
team_a = root / "team-a"
team_a.mkdir()
for k in range(8):
    frame = np.clip(scene + rng.integers(-3, 4, scene.shape), 0, 255).astype(np.uint8)
    Image.fromarray(frame).save(team_a / f"team-a_{k:05d}.png")

# %% A diverse team: every image is a different random scene.
team_b = root / "team-b"
team_b.mkdir()
for k in range(8):
    Image.fromarray(rng.integers(0, 256, (120, 160, 3), dtype=np.uint8)).save(team_b / f"team-b_{k:05d}.png")

# %%
feats = {t.name: extract_many(sorted(t.glob("*.png"))) for t in (team_a, team_b)}
report = score_report(feats)
print(report.to_csv())
# team-a has 7 near-duplicates per image at 0.99; team-b has none.

# %% Features can be stored and reloaded (e.g. when produced by another backend).
save_features(feats["team-a"], root / "team-a.fsfv")
assert len(load_features(root / "team-a.fsfv")) == 8

# %% Sampling keeps one representative of the duplicated stream.
kept = sample_diverse(feats["team-a"] + feats["team-b"], threshold=0.99)
print("kept", len(kept), "of 16")
