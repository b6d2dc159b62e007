"""Personalized split learning against SplitFed on label-skewed devices.

Ten devices each hold mostly two labels (the normalised 40% / 5% scheme).
Personalized split learning keeps every device-side model private and only
averages the server side; SplitFed averages both halves every round. Both
runs share the seed, so they start from the same weights and draw the
same mini-batches.

The default here is a short run; pass --rounds 30 --seeds 5 for the full
desk-scale comparison (about ten minutes on one core).

Run:  python demos/training_comparison.py [--rounds R] [--seeds S] [--cut C]
"""

import argparse
import time

import numpy as np

from splitbargain.data import partition_noniid, split_train_val_test, synth_dataset
from splitbargain.scenario import CALIBRATED_COMPUTE_SCALE, generate_scenario
from splitbargain.sltrain import TrainConfig, train_personalized, train_splitfed
from splitbargain.wireless import expected_upload_times

parser = argparse.ArgumentParser()
parser.add_argument("--rounds", type=int, default=10)
parser.add_argument("--seeds", type=int, default=1)
parser.add_argument("--cut", type=int, default=3)
parser.add_argument("--lr", type=float, default=0.01)
args = parser.parse_args()

cfg = TrainConfig(lr=args.lr, loss_eval="steps")
for seed in range(args.seeds):
    pool = synth_dataset(22_000, seed=seed)
    train, val = split_train_val_test(pool, (20_000, 2_000), seed=seed)
    pt = partition_noniid(train, 10, seed=seed)
    pv = partition_noniid(val, 10, seed=seed + 1, majors=pt.major_labels)
    train_sets, val_sets = pt.subsets(train), pv.subsets(val)
    scen = generate_scenario(seed=seed, compute_scale=CALIBRATED_COMPUTE_SCALE,
                             samples_per_device=pt.sizes)
    taus = expected_upload_times(scen, 20_000, seed)

    curves = {}
    for name, fn in (("personalized", train_personalized), ("splitfed", train_splitfed)):
        t0 = time.perf_counter()
        rec = fn(scen, train_sets, val_sets, args.cut, rounds=args.rounds, seed=seed,
                 config=cfg, expected_taus=taus)
        curves[name] = rec
        print(f"seed {seed} {name:12s} {time.perf_counter() - t0:6.1f} s host, "
              f"{rec.sim_time_s[-1]:8.1f} s simulated")
    print(" round  personalized  splitfed   (mean validation accuracy)")
    for r in range(args.rounds):
        print(f" {r + 1:5d}  {curves['personalized'].mean_val_acc[r]:12.3f}  "
              f"{curves['splitfed'].mean_val_acc[r]:8.3f}")
    final = np.array(curves["personalized"].per_device_acc[-1])
    print(" personalized per-device accuracy:", np.round(final, 3).tolist())
