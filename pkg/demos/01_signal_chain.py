# Signal chain: filters, a synthetic trial, and what preprocessing does to it.
#
# Run:  python3 demos/01_signal_chain.py [out_dir]

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from scipy import signal as sps

from mudec import dsp
from mudec import synthgen as sg

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)
FS = sg.EMG_RATE_HZ

# ## The three filters
#
# EMG gets a 60 Hz notch (Q = 35) and a 6th-order 20 Hz high-pass; force gets
# a 4th-order 10 Hz low-pass. All are causal IIR sections, so nothing
# downstream ever sees the future.

filters = {
    "notch 60 Hz": (dsp.notch_design(60.0, 35.0, FS), FS),
    "high-pass 20 Hz": (dsp.butterworth_design("highpass", 6, 20.0, FS), FS),
    "low-pass 10 Hz": (dsp.butterworth_design("lowpass", 4, 10.0, FS), FS),
}
freqs = np.logspace(0, np.log10(FS / 2 - 1), 2000)
fig, ax = plt.subplots(figsize=(7, 3.5))
for name, (sos, fs) in filters.items():
    _, h = sps.sosfreqz(sos, worN=freqs, fs=fs)
    ax.semilogx(freqs, 20 * np.log10(np.maximum(abs(h), 1e-12)), label=name)
    at = {"notch 60 Hz": 60.0, "high-pass 20 Hz": 20.0, "low-pass 10 Hz": 100.0}[name]
    _, h_at = sps.sosfreqz(sos, worN=[at], fs=fs)
    print(f"{name:>16}: {20 * np.log10(abs(h_at[0])):8.2f} dB at {at:g} Hz")
ax.set(xlabel="frequency (Hz)", ylabel="gain (dB)", ylim=(-120, 5))
ax.legend()
fig.tight_layout()
fig.savefig(out / "filters.png", dpi=120)

# ## One synthetic trial
#
# The easy scenario has 8 motor units seen by a 64-channel montage split into
# a flexor and an extensor array, recorded at 2048 Hz with 20 dB SNR. The
# force is the sum of the units' twitches, scaled to %MVF.

sc = sg.default_scenario("easy", seed=0)
trial = sg.generate_trial(sc.pool, sc.mix, sc.specs[0])
print(f"\nscenario: {sc.name}, {sc.pool.n_units} units, {trial.emg.n_channels} channels, "
      f"{trial.emg.n_samples / FS:.0f} s per trial")
print("spikes per unit:", [int(s.size) for s in trial.truth_spikes.spikes])

# Add some mains hum to show the notch doing its job.
t = np.arange(trial.emg.n_samples) / FS
hum = 0.5 * trial.emg.data.std() * np.sin(2 * np.pi * 60.0 * t)
raw = trial.emg.data + hum
clean = dsp.butterworth_filter(dsp.notch_filter(type(trial.emg)(raw, FS)), "highpass", 6, 20.0)
force = dsp.butterworth_filter(trial.force, "lowpass", 4, 10.0)

fig, axes = plt.subplots(3, 1, figsize=(8, 6), sharex=True)
sl = slice(int(8 * FS), int(8.5 * FS))
axes[0].plot(t[sl], raw[0, sl], lw=0.6)
axes[0].set_ylabel("raw ch0")
axes[1].plot(t[sl], clean.data[0, sl], lw=0.6)
axes[1].set_ylabel("filtered ch0")
axes[2].plot(t, force.data[0])
axes[2].set(ylabel="force (%MVF)", xlabel="time (s)")
fig.tight_layout()
fig.savefig(out / "trial.png", dpi=120)

# ## Feature rate
#
# Decoders run at 200 Hz. The resampler low-passes at 0.45 of the target rate
# before interpolating, so a 5 Hz tone keeps its amplitude.

tone = type(trial.emg)(np.sin(2 * np.pi * 5.0 * t)[None], FS)
down = dsp.resample(tone, 200.0)
print(f"\n5 Hz tone after resampling to 200 Hz: peak {np.abs(down.data[0, 100:-100]).max():.3f}")
print(f"figures written to {out}/")
