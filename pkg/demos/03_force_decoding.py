# End to end: synthetic trials, decomposition, then both causal decoders.
#
# Run:  python3 demos/03_force_decoding.py [out_dir] [max_epochs]
#
# With the default 80 epochs this takes roughly 15 minutes on one core; pass a
# small epoch count for a quick look.

import sys
from pathlib import Path

from mudec import pipeline
from mudec.config import PipelineConfig
from mudec.models import receptive_field

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out") / "pipeline"
cfg = PipelineConfig(seed=0)
if len(sys.argv) > 2:
    cfg.train.max_epochs = int(sys.argv[2])

# The TCN looks back over 1017 samples (about 5 s at 200 Hz); the spiking
# network only over 25, relying on its membrane and synaptic state for memory.

print(f"receptive fields: TCN {receptive_field(cfg.model.tcn)}, SNN {receptive_field(cfg.model.snn)} samples")

res = pipeline.run_pipeline(cfg, out, kinds=("tcn", "snn"))
print(res.decomposition.report_text)
for kind, r in res.results.items():
    print(f"{kind}: {r.report.epochs_run} epochs, best {r.report.best_epoch}")
    print(r.table)
    print()

# Overlay of predicted and measured force for the first test trial, plus the
# loss curves. Both are SVG with a CSV next to them.

trial = res.decomposition.manifest["split"]["test"][0]
for kind in res.results:
    svg, csv_path = pipeline.plot_trial(cfg, out / f"train_{kind}" / "checkpoint", out / "drives", trial, out / f"plot_{kind}")
    print("wrote", svg, csv_path)
    print("wrote", pipeline.plot_report(out / f"train_{kind}" / "train_report.json", out / f"plot_{kind}"))
