# Motor-unit decomposition on the easy scenario, scored against ground truth.
#
# Run:  python3 demos/02_decomposition.py [out_dir]

import sys
import warnings
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from mudec import decomp as dc
from mudec import dsp
from mudec import synthgen as sg
from mudec.spiketrains import match_to_truth

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)

# Six training trials, one held out. The decomposition only ever sees the
# training trials; the held-out trial is processed with the frozen filters
# and thresholds, the same way validation and test trials are.

sc = sg.default_scenario("easy", seed=0)
trials = [sg.generate_trial(sc.pool, sc.mix, spec) for spec in sc.specs[:7]]
emg = [dsp.butterworth_filter(dsp.notch_filter(t.emg), "highpass", 6, 20.0) for t in trials]
force = [dsp.butterworth_filter(t.force, "lowpass", 4, 10.0) for t in trials]

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    dec = dc.fit_decomposition(emg[:6], force[:6], sc.mix.channel_groups, seed=0)
print(f"accepted units: {len(dec.units)}")
for i, u in enumerate(dec.units):
    print(f"  unit {i}: array {u.group:<9} silhouette {u.silhouette:.3f}  force corr {u.force_corr:+.3f}")

# ## Held-out agreement
#
# Rate of agreement counts a discharge as matched when it falls within 2.5 ms
# of a true one, after the best constant lag is removed.

held_out = trials[6]
est = dec.spikes(emg[6])
print("\nheld-out trial:")
for u, j, roa in match_to_truth(est, held_out.truth_spikes):
    print(f"  unit {u} -> true unit {j}: RoA {roa:.3f}")

# ## Neural drive
#
# Each spike train is smoothed with a causal 400 ms Hann window, resampled to
# 200 Hz and summed per array. These two traces are the decoder inputs.

drive = dc.neural_drive(est, unit_groups=dec.unit_groups, group_names=dec.group_names)
f200 = dsp.resample(force[6], 200.0)
t = np.arange(f200.n_samples) / 200.0
fig, ax = plt.subplots(figsize=(8, 3.5))
for name, row in zip(dec.group_names, drive.group_drives.data):
    ax.plot(t, row, label=f"{name} drive (spikes/s)")
ax2 = ax.twinx()
ax2.plot(t, f200.data[0], "k--", lw=1, label="force")
ax2.set_ylabel("force (%MVF)")
ax.set_xlabel("time (s)")
ax.legend(loc="upper left")
fig.tight_layout()
fig.savefig(out / "neural_drive.png", dpi=120)
print(f"\nfigure written to {out}/neural_drive.png")
