"""Solving the cut-layer bargain step by step.

Builds the mean-parameter scenario (every device at the centre of its draw
ranges), prints each player's ideal utility, then follows the bisection on
beta until the feasible split interval shrinks to a point. A brute-force
grid search over alpha is run alongside as a cross-check.

Run:  python demos/bargaining_walkthrough.py
"""

from splitbargain.bargaining import brute_force_ksbs, cut_layer_from_alpha, make_problem, solve_ksbs
from splitbargain.nn import build_model
from splitbargain.scenario import CALIBRATED_COMPUTE_SCALE, ScenarioConfig, mean_parameter_scenario
from splitbargain.utility import ideal_alphas
from splitbargain.wireless import expected_upload_times

counts = build_model().layer_param_counts
config = ScenarioConfig(compute_scale=CALIBRATED_COMPUTE_SCALE)
scen = mean_parameter_scenario(config)
taus = expected_upload_times(scen, 20_000, seed=0)
problem = make_problem(scen, taus)

print("expected upload time per step: %.4f s" % taus[0])
print("ideal splits:", [round(a, 4) for a in ideal_alphas(scen)])
print("ideal utilities:", [round(u, 3) for u in problem.ideal.as_array()])

outcome = solve_ksbs(problem)
print("\n iter  beta        feasible  witness alpha")
for i, (beta, ok, alpha) in enumerate(outcome.trace, start=1):
    print(f"{i:5d}  {beta:.8f}  {str(ok):8s}  {'-' if alpha is None else f'{alpha:.6f}'}")

grid = brute_force_ksbs(problem, 1e-4)
print(f"\nbisection: beta* = {outcome.beta_star:.6f}, alpha* = {outcome.alpha_star:.6f}")
print(f"grid:      beta* = {grid.beta_star:.6f}, alpha* = {grid.alpha_star:.6f}")
print(f"smallest normalised gain at alpha*: {outcome.min_ratio(problem):.6f}")
print(f"cut layer C{cut_layer_from_alpha(outcome.alpha_star, counts)}")

# stronger privacy preferences push more of the model onto the devices
for lam in [(25.0, 30.0), (30.0, 35.0), (35.0, 40.0)]:
    s = mean_parameter_scenario(ScenarioConfig(compute_scale=CALIBRATED_COMPUTE_SCALE,
                                               privacy_weight_range=lam))
    a = solve_ksbs(make_problem(s, expected_upload_times(s, 20_000, seed=0))).alpha_star
    print(f"lambda ~ U{lam}: alpha* = {a:.4f} -> C{cut_layer_from_alpha(a, counts)}")
