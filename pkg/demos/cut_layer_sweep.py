"""Sum of utilities at every candidate cut layer.

For each block boundary of the default network the share of parameters on
the device gives alpha; all utilities are evaluated there and summed. The
table also marks the layer the bargaining picks. The ten device utilities
fall steeply with alpha while the server's barely moves, so the plain sum
follows the devices towards shallow cuts. The bargain instead compares
normalised gains, which gives the server's small absolute range the same
weight as any device's.

Run:  python demos/cut_layer_sweep.py [--seed N]
"""

import argparse

from splitbargain.bargaining import cut_layer_from_alpha, make_problem, solve_ksbs
from splitbargain.nn import build_model
from splitbargain.scenario import CALIBRATED_COMPUTE_SCALE, ScenarioConfig, generate_scenario, mean_parameter_scenario
from splitbargain.sweep import sweep_utilities
from splitbargain.wireless import expected_upload_times

parser = argparse.ArgumentParser()
parser.add_argument("--seed", type=int, default=None, help="random draw instead of mean parameters")
args = parser.parse_args()

counts = build_model().layer_param_counts
for lam in [(25.0, 30.0), (30.0, 35.0)]:
    config = ScenarioConfig(compute_scale=CALIBRATED_COMPUTE_SCALE, privacy_weight_range=lam)
    if args.seed is None:
        scen = mean_parameter_scenario(config)
    else:
        scen = generate_scenario(config, seed=args.seed)
    taus = expected_upload_times(scen, 20_000, seed=0)
    sweep = sweep_utilities(scen, counts, taus)
    cut = cut_layer_from_alpha(solve_ksbs(make_problem(scen, taus)).alpha_star, counts)
    print(f"\nlambda ~ U{lam}")
    print(" cut   alpha    devices    server      sum")
    for c, a, d, s, t in zip(sweep.cut_index, sweep.alpha, sweep.device_utility_sum,
                             sweep.server_utility, sweep.total):
        mark = "  <- bargain" if c == cut else ""
        print(f" C{c:<3d} {a:.4f}  {d:9.3f}  {s:9.3f}  {t:9.3f}{mark}")
    print(f" best sum at C{sweep.best_cut}")
