# Calibrating all four taxels from one simulated session.
#
# The robot localizes the probe, then presses each dome through a force
# schedule while the F/T sensor (416.7 Hz) and the Hall sensors (100 Hz) log.
# The F/T stream is smoothed with a 100-sample moving average, interpolated
# onto the Hall timestamps, and a degree-3 polynomial in B is fitted to F by
# least squares for every taxel.

import time

import numpy as np

from taxcal.acquisition import align_log
from taxcal.calibration import calibrate, format_report
from taxcal.config import RigConfig
from taxcal.inference import predict
from taxcal.session import simulate_session

cfg = RigConfig({"dome.hysteresis_tau": 0.3})   # default noise plus dome lag

t0 = time.perf_counter()
session = simulate_session(cfg, seed=1)
print(f"simulated {session.rig.clock:.0f} s of rig time in {time.perf_counter() - t0:.1f} s")
print(f"{len(session.log.ft)} F/T samples, {len(session.log.hall)} Hall samples")

datasets = align_log(session.log, window=100)
for k, ds in datasets.items():
    print(f"taxel {k}: {len(ds)} aligned rows, Fz from {ds.f[:, 2].min():.2f} to {ds.f[:, 2].max():.2f} N")

model, metrics = calibrate(datasets, seed=0)
print()
print(format_report(metrics))

# the dome lags the force, so the prediction trails the label on ramps
ds = datasets[0]
fz_pred = predict(model.taxels[0], ds.b)[:, 2]
start = np.flatnonzero(ds.f[:, 2] < -0.5)[0]   # first ramp, 1 N/s
for i in range(start, start + 100, 20):
    sl = slice(i, i + 10)   # 0.1 s averages to see past the noise
    print(f"  t={ds.t[i]:.2f}  label {ds.f[sl, 2].mean():+.3f} N  predicted {fz_pred[sl].mean():+.3f} N")

batch = np.repeat(ds.b, 20, axis=0)
t0 = time.perf_counter()
predict(model.taxels[0], batch)
print(f"\nbatch inference: {len(batch) / (time.perf_counter() - t0):.2e} predictions/s")
