#!/usr/bin/env python3
"""Regenerate the bundled demo dataset (data/bundled_r50.csv).

Never edit the CSV by hand; rerun this script instead.
"""

from pathlib import Path

import numpy as np

from malakit.targets import sample_sphere_dataset, save_dataset

ROOT = Path(__file__).resolve().parents[1]

theta = np.zeros(5)
theta[0] = 1.0
data = sample_sphere_dataset(d=5, r=50, theta_star=theta, q0=0.7, seed=1234)
csv_path, sidecar = save_dataset(data, ROOT / "data" / "bundled_r50.csv")
print(f"wrote {csv_path}")
print(f"wrote {sidecar}")
