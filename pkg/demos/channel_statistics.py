"""Rayleigh fading, achievable rate and the expected upload time.

Checks the sampled channel gain against the path-loss mean d^-4 at a few
distances, then shows how the expected time to push one batch of cut-layer
activations grows with distance from the server.

Run:  python demos/channel_statistics.py
"""

import numpy as np

from splitbargain.scenario import generate_scenario
from splitbargain.wireless import expected_upload_time, sample_channel

scen = generate_scenario(seed=0)
rng = np.random.default_rng(1)
print("payload per step: %.0f bits" % scen.server.payload_bits_per_step)

print("\ndistance  mean gain   d^-4       ratio")
centre = scen.area_side_m / 2
for d in (5.0, 10.0, 20.0):
    dev = scen.devices[0]
    dev = type(dev)(**{**dev.__dict__, "position_m": (centre + d, centre)})
    gains = np.array([sample_channel(dev, scen, rng).gain for _ in range(50_000)])
    print(f"{d:8.1f}  {gains.mean():.3e}  {d ** -4:.3e}  {gains.mean() * d ** 4:.4f}")

print("\ndevice  distance  E[tau] (s)   stderr")
for dev in sorted(scen.devices, key=scen.distance_m):
    e = expected_upload_time(dev, scen, 20_000, np.random.default_rng(dev.id))
    print(f"{dev.id:6d}  {scen.distance_m(dev):8.2f}  {e.mean:.6f}  {e.stderr:.2e}")
