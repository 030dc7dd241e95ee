"""Fill-curve calibration under the two official-fill counting rules.

Buckets the packaged ETH-like trade tape into per-threshold hit counts
under both counting modes, fits the exponential intensity curve for each,
and shows why the permissive minute-hit rule always reports fill rates at
or above the quote-size-aware volume rule.
"""

import json
from pathlib import Path

import numpy as np

from perpmm import data_io
from perpmm.fills import bucket_hits, default_thresholds, fit_fill_curve

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data" / "eth"

tape_ts, dist, vol = data_io.load_tape_csv(DATA / "tape.csv")
minute_ids = np.floor(tape_ts * 60 + 1e-9).astype(np.int64)
n_minutes = int(minute_ids.max() - minute_ids.min()) + 1
print(f"tape: {len(tape_ts)} crossings over {n_minutes} minutes")

_, mid = data_io.load_mid_csv(DATA / "mids.csv")
thresholds = default_thresholds(float(np.median(mid)))
print("thresholds (quote currency):", np.round(thresholds, 3))

quote_size = 1.0
curves = {}
for mode in ("volume_minute", "minute_hit"):
    panel = bucket_hits(minute_ids, dist, vol, thresholds, mode, quote_size,
                        n_minutes=n_minutes)
    curve = fit_fill_curve(panel, delta_min=0.3)
    curves[mode] = curve
    print(f"\n{mode}:")
    print("  hits:", panel.hits.astype(int).tolist())
    print(f"  lambda0 = {curve.lambda0:.3f} fills/h at touch")
    print(f"  k = {curve.k:.4f} per quote unit  (1/k = {1 / curve.k:.3f})")

truth = json.loads((DATA / "ground_truth.json").read_text())
print(f"\ngenerator used lambda0 = {truth['fill_lambda0']}, k = {truth['fill_k']}")
print("volume_minute requires cumulative crossed volume >= the quote size, so")
print("its hit counts (and fitted at-touch intensity) can only sit at or below")
print("minute_hit's:",
      f"{curves['minute_hit'].lambda0:.3f} >= {curves['volume_minute'].lambda0:.3f}")

# sanity: per-minute fill probabilities implied by the stricter curve
p = curves["volume_minute"].fill_probability(thresholds, 1 / 60)
print("\nimplied per-minute fill probability by threshold:")
for d, pi in zip(thresholds, p):
    print(f"  delta = {d:7.3f}  ->  {100 * pi:.4f} %")
