"""Stage functions behind the ``mudec`` subcommands.

Every stage reads its inputs from files written by the previous one and
writes its own outputs to a directory, so each can be rerun in isolation:

    synth -> decompose -> dataset -> train -> eval / plot
"""

from __future__ import annotations

import copy
import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import container, dsp
from .config import PipelineConfig
from .decomp import Decomposition, UnitFilter, fit_decomposition, neural_drive
from .dsp import MultiChannelSignal, NormStats, Units
from .errors import ConfigError, DataError, EmptyDecompositionError
from .models import Decoder, SnnConfig, TcnConfig, build_model
from .spiketrains import SpikeTrainSet, rate_of_agreement
from .synthgen import EMG_RATE_HZ, default_scenario, generate_trial
from .train import (
    TrainReport,
    evaluate,
    fit,
    format_metrics_table,
    predict_trial,
    split_trials,
)

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


def _ensure_dir(path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write_test"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise DataError(f"output directory {path} is not writable: {exc.strerror or exc}") from exc
    return path


def _read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _load_signal(path: Path) -> MultiChannelSignal:
    if path.suffix.lower() == ".csv":
        return container.read_csv_signal(path)
    return container.read_signal(path)


def spikes_to_signal(spikes: SpikeTrainSet) -> MultiChannelSignal:
    data = spikes.binary() if spikes.n_units else np.zeros((0, spikes.n_samples))
    return MultiChannelSignal(data, spikes.sample_rate_hz, [f"mu{u}" for u in spikes.unit_ids], Units.DIMENSIONLESS)


def signal_to_spikes(sig: MultiChannelSignal) -> SpikeTrainSet:
    return SpikeTrainSet([np.flatnonzero(row > 0.5) for row in sig.data], sig.n_samples, sig.sample_rate_hz)


# ---------------------------------------------------------------------------
# synth


def synth(cfg: PipelineConfig, out_dir) -> dict:
    """Write EMG, force and true spike trains for every trial of the configured scenario."""
    out = _ensure_dir(out_dir)
    scenario = default_scenario(cfg.scenario, seed=cfg.seed)

    def one(item):
        k, spec = item
        trial = generate_trial(scenario.pool, scenario.mix, spec)
        name = f"trial{k:02d}"
        entry = {"name": name, "seed": int(spec.seed)}
        for kind, sig in (("emg", trial.emg), ("force", trial.force), ("spikes", spikes_to_signal(trial.truth_spikes))):
            fname = f"{name}_{kind}.mdc"
            entry[f"{kind}_crc"] = container.write_signal(out / fname, sig)
            entry[kind] = fname
        return entry

    trials = _map(one, list(enumerate(scenario.specs)), cfg.jobs)
    manifest = {
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "snr_db": scenario.snr_db,
        "sample_rate_hz": EMG_RATE_HZ,
        "split": _split_names([t["name"] for t in trials], cfg),
        "channel_groups": scenario.mix.channel_groups,
        "trials": trials,
    }
    _write_json(out / MANIFEST, manifest)
    return manifest


# ---------------------------------------------------------------------------
# decompose


def _split_names(names: list[str], cfg: PipelineConfig) -> dict[str, list[str]]:
    return split_trials(names, tuple(cfg.window.split), seed=cfg.seed)


def preprocess_emg(emg: MultiChannelSignal, cfg: PipelineConfig) -> MultiChannelSignal:
    d = cfg.dsp
    emg = dsp.notch_filter(emg, d.notch_f0_hz, d.notch_q)
    return dsp.butterworth_filter(emg, "highpass", d.hp_order, d.hp_fc_hz)


def preprocess_force(force: MultiChannelSignal, cfg: PipelineConfig) -> MultiChannelSignal:
    return dsp.butterworth_filter(force, "lowpass", cfg.dsp.lp_order, cfg.dsp.lp_fc_hz)


def save_decomposition(dec: Decomposition, n_channels: int, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    weights = np.zeros((len(dec.units), n_channels))
    means = np.zeros((len(dec.units), n_channels))
    for i, u in enumerate(dec.units):
        weights[i, u.channels] = u.weights
        means[i, u.channels] = u.mean
    # float64 parameters are stored as JSON; MDC1 copies are for inspection tools
    container.write_signal(out / "unmixing.mdc", MultiChannelSignal(weights if len(dec.units) else np.zeros((1, n_channels)), 1.0))
    _write_json(
        out / "decomposition.json",
        {
            "group_names": dec.group_names,
            "sample_rate_hz": dec.sample_rate_hz,
            "refractory_ms": dec.refractory_ms,
            "diagnostics": dec.diagnostics,
            "units": [
                {
                    "group": u.group,
                    "channels": u.channels,
                    "weights": u.weights.tolist(),
                    "mean": u.mean.tolist(),
                    "threshold": u.threshold,
                    "silhouette": u.silhouette,
                    "force_corr": u.force_corr,
                }
                for u in dec.units
            ],
        },
    )


def load_decomposition(path) -> Decomposition:
    d = _read_json(Path(path) / "decomposition.json")
    units = [
        UnitFilter(
            u["group"], u["channels"], np.array(u["mean"]), np.array(u["weights"]), u["threshold"], u["silhouette"], u["force_corr"]
        )
        for u in d["units"]
    ]
    return Decomposition(units, d["group_names"], d["sample_rate_hz"], d["refractory_ms"], d["diagnostics"])


@dataclass
class DecomposeResult:
    manifest: dict
    report_text: str
    rows: list[dict]


def decompose(cfg: PipelineConfig, in_dir, out_dir, train_trials: list[str] | None = None) -> DecomposeResult:
    """Fit the decomposition on the training trials only, then apply it frozen to every trial.

    Writes per-trial neural drives (group and per-unit), the 200 Hz force, the
    estimated spike trains, the fitted decomposition and a quality report.
    """
    in_dir, out = Path(in_dir), _ensure_dir(out_dir)
    manifest = _read_json(in_dir / MANIFEST)
    groups = {k: list(v) for k, v in manifest["channel_groups"].items()}
    names = [t["name"] for t in manifest["trials"]]
    if train_trials is not None:
        rest = [n for n in names if n not in train_trials]
        split = {"train": list(train_trials), "val": rest[: len(rest) // 2], "test": rest[len(rest) // 2 :]}
    else:
        split = manifest.get("split") or _split_names(names, cfg)
    by_name = {t["name"]: t for t in manifest["trials"]}
    for n in split["train"]:
        if n not in by_name:
            raise ConfigError(f"training trial {n!r} not in {in_dir / MANIFEST}")

    def load(name):
        t = by_name[name]
        emg = preprocess_emg(_load_signal(in_dir / t["emg"]), cfg)
        force = preprocess_force(_load_signal(in_dir / t["force"]), cfg)
        truth = signal_to_spikes(container.read_signal(in_dir / t["spikes"])) if t.get("spikes") else None
        return name, emg, force, truth

    loaded = {n: (e, f, s) for n, e, f, s in _map(load, names, cfg.jobs)}
    try:
        dec = fit_decomposition(
            [loaded[n][0] for n in split["train"]],
            [loaded[n][1] for n in split["train"]],
            groups,
            cfg.decomp,
            seed=cfg.seed,
        )
    except EmptyDecompositionError as exc:
        text = f"units kept: 0\nfrozen transforms: yes (fitted on training trials only)\nerror: {exc}\n"
        (out / "decomposition_report.txt").write_text(text)
        _write_json(out / "decomposition_report.json", {"units": 0, "error": str(exc), "diagnostics": exc.diagnostics})
        raise
    save_decomposition(dec, next(iter(loaded.values()))[0].n_channels, out / "decomposition")

    rate = cfg.dsp.feature_rate_hz
    group_names = list(groups)

    def apply(name):
        emg, force, truth = loaded[name]
        est = dec.spikes(emg)
        drive = neural_drive(est, cfg.decomp.kernel, rate, dec.unit_groups, group_names)
        force200 = dsp.resample(force, rate)
        files = {
            "drive_group": f"{name}_drive_group.mdc",
            "drive_mu": f"{name}_drive_mu.mdc",
            "force": f"{name}_force200.mdc",
            "spikes": f"{name}_spikes_est.mdc",
        }
        container.write_signal(out / files["drive_group"], drive.group_drives)
        unit_sig = drive.unit_drives if drive.unit_drives.n_channels else MultiChannelSignal(np.zeros((1, force200.n_samples)), rate)
        container.write_signal(out / files["drive_mu"], unit_sig)
        container.write_signal(out / files["force"], force200)
        container.write_signal(out / files["spikes"], spikes_to_signal(est))
        roa = None
        if truth is not None:
            roa = []
            for u, s in enumerate(est.spikes):
                scores = [rate_of_agreement(s, t, est.sample_rate_hz)[0] for t in truth.spikes]
                j = int(np.argmax(scores)) if scores else -1
                roa.append({"truth_unit": j, "roa": scores[j] if scores else 0.0})
        role = next((r for r in ("train", "val", "test") if name in split[r]), "unused")
        return {"name": name, "role": role, "files": files, "n_spikes": [int(s.size) for s in est.spikes], "roa": roa}

    rows = _map(apply, names, cfg.jobs)
    out_manifest = {
        "source_dir": str(in_dir),
        "feature_rate_hz": rate,
        "group_names": group_names,
        "split": split,
        "frozen_transforms": True,
        "n_units": len(dec.units),
        "trials": rows,
    }
    _write_json(out / MANIFEST, out_manifest)
    text = decomposition_report(dec, rows)
    (out / "decomposition_report.txt").write_text(text)
    _write_json(out / "decomposition_report.json", {"units": len(dec.units), "trials": rows, "diagnostics": dec.diagnostics})
    return DecomposeResult(out_manifest, text, rows)


def decomposition_report(dec: Decomposition, rows: list[dict]) -> str:
    has_truth = any(r["roa"] is not None for r in rows)
    lines = [f"units kept: {len(dec.units)}", "frozen transforms: yes (fitted on training trials only)", ""]
    header = f"{'unit':>4} {'group':<9} {'silhouette':>10} {'force_r':>8}"
    if has_truth:
        header += f" {'truth':>5} {'RoA(train)':>10} {'RoA(all)':>9}"
    lines.append(header)
    for u, unit in enumerate(dec.units):
        line = f"{u:>4} {unit.group:<9} {unit.silhouette:>10.3f} {unit.force_corr:>8.3f}"
        if has_truth:
            tr = [r["roa"][u] for r in rows if r["roa"] is not None and r["role"] == "train"]
            al = [r["roa"][u] for r in rows if r["roa"] is not None]
            truth_unit = max(set(x["truth_unit"] for x in al), key=[x["truth_unit"] for x in al].count)
            line += f" {truth_unit:>5} {np.mean([x['roa'] for x in tr]) if tr else float('nan'):>10.3f} {np.mean([x['roa'] for x in al]):>9.3f}"
        lines.append(line)
    if has_truth:
        good = recovered_count(dec, rows)
        lines += ["", f"units with RoA > 90%: {good}"]
    lines += ["", "trial        role   spikes per unit"]
    for r in rows:
        lines.append(f"{r['name']:<12} {r['role']:<6} {r['n_spikes']}")
    return "\n".join(lines) + "\n"


def recovered_count(dec: Decomposition, rows: list[dict], min_roa: float = 0.9) -> int:
    """Distinct true units matched with mean RoA above ``min_roa`` across all trials."""
    best: dict[int, float] = {}
    for u in range(len(dec.units)):
        al = [r["roa"][u] for r in rows if r["roa"] is not None]
        if not al:
            continue
        truth_unit = max(set(x["truth_unit"] for x in al), key=[x["truth_unit"] for x in al].count)
        score = float(np.mean([x["roa"] for x in al if x["truth_unit"] == truth_unit] + [0.0] * sum(x["truth_unit"] != truth_unit for x in al)))
        best[truth_unit] = max(best.get(truth_unit, 0.0), score)
    return sum(v > min_roa for v in best.values())


# ---------------------------------------------------------------------------
# dataset


@dataclass
class TrialFeatures:
    name: str
    features: MultiChannelSignal
    force: MultiChannelSignal


def load_trial_features(drive_dir, cfg: PipelineConfig) -> tuple[dict, dict[str, TrialFeatures]]:
    drive_dir = Path(drive_dir)
    manifest = _read_json(drive_dir / MANIFEST)
    key = "drive_group" if cfg.decomp.feature_mode == "per_group" else "drive_mu"
    out = {}
    for row in manifest["trials"]:
        feats = container.read_signal(drive_dir / row["files"][key])
        force = container.read_signal(drive_dir / row["files"]["force"])
        out[row["name"]] = TrialFeatures(row["name"], feats, force)
    return manifest, out


@dataclass
class Datasets:
    train: dsp.WindowedDataset
    val: dsp.WindowedDataset
    test: dsp.WindowedDataset
    norm_stats: NormStats
    target_stats: NormStats | None
    split: dict[str, list[str]]
    trials: dict[str, TrialFeatures]


def build_datasets(cfg: PipelineConfig, drive_dir) -> Datasets:
    """Window every trial, fit z-score statistics on the training windows only."""
    manifest, trials = load_trial_features(drive_dir, cfg)
    split = manifest["split"]
    if not split.get("val") or not split.get("test"):
        raise ConfigError("decomposition manifest has no validation/test trials; rerun decompose with the default split")
    w = cfg.window

    def windows(names):
        return dsp.concat_datasets([dsp.make_windows(trials[n].features, trials[n].force, w.T, w.stride, w.shift_ms) for n in names])

    raw = {role: windows(split[role]) for role in ("train", "val", "test")}
    stats = dsp.zscore_fit([raw["train"].inputs])
    tstats = dsp.zscore_fit([raw["train"].targets[..., None]]) if w.standardize_targets else None
    std = {role: dsp.standardize(raw[role], stats, tstats) for role in raw}
    return Datasets(std["train"], std["val"], std["test"], stats, tstats, split, trials)


def _stats_to_json(s: NormStats | None):
    return None if s is None else {"mean": s.mean.tolist(), "std": s.std.tolist()}


def _stats_from_json(d) -> NormStats | None:
    return None if d is None else NormStats(np.array(d["mean"]), np.array(d["std"]))


def dataset(cfg: PipelineConfig, drive_dir, out_dir) -> Datasets:
    """Write standardised windows (``.npz``) and the training-split statistics."""
    out = _ensure_dir(out_dir)
    ds = build_datasets(cfg, drive_dir)
    for role in ("train", "val", "test"):
        d = getattr(ds, role)
        np.savez(out / f"windows_{role}.npz", inputs=d.inputs, targets=d.targets)
    _write_json(
        out / "norm_stats.json",
        {"inputs": _stats_to_json(ds.norm_stats), "targets": _stats_to_json(ds.target_stats), "split": ds.split, "fitted_on": "train"},
    )
    return ds


# ---------------------------------------------------------------------------
# train / checkpoint


def save_checkpoint(decoder: Decoder, out, extra: dict | None = None) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    model = decoder.model
    shapes = {}
    for i, (name, p) in enumerate(model.parameters().items()):
        container.write_signal(out / f"param{i:03d}.mdc", MultiChannelSignal(p.data.reshape(1, -1), 1.0, [name]))
        shapes[name] = list(p.shape)
    _write_json(
        out / "checkpoint.json",
        {
            "kind": model.kind,
            "config": model.config.__dict__,
            "param_order": list(shapes),
            "shapes": shapes,
            "norm_stats": _stats_to_json(decoder.norm_stats),
            "target_stats": _stats_to_json(decoder.target_stats),
            **(extra or {}),
        },
    )


def load_checkpoint(path) -> Decoder:
    path = Path(path)
    meta = _read_json(path / "checkpoint.json")
    cfg_cls = TcnConfig if meta["kind"] == "tcn" else SnnConfig
    model = build_model(meta["kind"], cfg_cls(**meta["config"]))
    state = {}
    for i, name in enumerate(meta["param_order"]):
        sig = container.read_signal(path / f"param{i:03d}.mdc")
        state[name] = sig.data.reshape(meta["shapes"][name])
    model.load_state_dict(state)
    return Decoder(model, _stats_from_json(meta["norm_stats"]), _stats_from_json(meta["target_stats"]))


def _model_config(cfg: PipelineConfig, n_features: int):
    section = cfg.model.tcn if cfg.model.kind == "tcn" else cfg.model.snn
    return type(section)(**{**section.__dict__, "in_features": n_features})


@dataclass
class TrainResult:
    decoder: Decoder
    report: TrainReport
    table: str


def train_model(cfg: PipelineConfig, drive_dir, out_dir=None, kind: str | None = None) -> TrainResult:
    """Fit the configured decoder, restore the best-validation weights, evaluate the test trials."""
    kind = kind or cfg.model.kind
    cfg_kind = copy.deepcopy(cfg)
    cfg_kind.model.kind = kind
    ds = build_datasets(cfg, drive_dir)
    model = build_model(kind, _model_config(cfg_kind, ds.train.n_features), seed=cfg.seed)
    t = cfg.train
    report = fit(model, ds.train, ds.val, t.max_epochs, t.batch_size, t.patience, t.lr, t.min_delta, seed=cfg.seed)
    decoder = Decoder(model, ds.norm_stats, ds.target_stats)
    report.test = evaluate(decoder, _trial_tuples(ds, "test"), cfg.window.T, cfg.window.stride, cfg.window.shift_ms)
    table = format_metrics_table({kind: report.test})
    if out_dir is not None:
        out = _ensure_dir(out_dir)
        save_checkpoint(decoder, out / "checkpoint", {"best_epoch": report.best_epoch, "drive_dir": str(drive_dir), "feature_mode": cfg.decomp.feature_mode})
        _write_json(out / "train_report.json", report.to_dict())
        (out / "train_report.txt").write_text(report_key_values(report) + "\n" + table + "\n")
        write_metrics_csv(out / "metrics.csv", {kind: report.test})
    return TrainResult(decoder, report, table)


def _trial_tuples(ds: Datasets, role: str):
    return [(n, ds.trials[n].features, ds.trials[n].force) for n in ds.split[role]]


def report_key_values(report: TrainReport) -> str:
    lines = [
        f"model = {report.model_kind}",
        f"epochs_run = {report.epochs_run}",
        f"best_epoch = {report.best_epoch}",
        f"stopped_early = {str(report.stopped_early).lower()}",
        f"best_val_loss = {min(report.val_loss):.6f}" if report.val_loss else "best_val_loss = nan",
        f"seconds = {report.seconds:.1f}",
    ]
    if report.test:
        lines += [f"mean_rmse_pct_mvf = {report.mean_rmse:.3f}", f"mean_pearson_r = {report.mean_r:.4f}"]
    return "\n".join(lines) + "\n"


def write_metrics_csv(path, reports: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "trial", "rmse_pct_mvf", "pearson_r", "r_undefined"])
        for kind, rows in reports.items():
            for m in rows:
                w.writerow([kind, m.trial, f"{m.rmse_pct_mvf:.6f}", f"{m.pearson_r:.6f}", int(m.r_undefined)])


# ---------------------------------------------------------------------------
# eval / plot


def _checkpoint_cfg(cfg: PipelineConfig, checkpoint) -> PipelineConfig:
    """Config whose feature mode matches the one the checkpoint was trained with."""
    meta = _read_json(Path(checkpoint) / "checkpoint.json")
    out = copy.deepcopy(cfg)
    out.decomp.feature_mode = meta.get("feature_mode", cfg.decomp.feature_mode)
    return out


def eval_checkpoint(cfg: PipelineConfig, checkpoint, drive_dir, trials: list[str] | None = None, out_dir=None):
    decoder = load_checkpoint(checkpoint)
    manifest, feats = load_trial_features(drive_dir, _checkpoint_cfg(cfg, checkpoint))
    names = trials or manifest["split"]["test"]
    for n in names:
        if n not in feats:
            raise ConfigError(f"unknown trial {n!r}")
        if feats[n].features.n_channels != decoder.model.in_features:
            raise DataError(
                f"trial {n} has {feats[n].features.n_channels} features but checkpoint expects {decoder.model.in_features}"
            )
    metrics = evaluate(decoder, [(n, feats[n].features, feats[n].force) for n in names], cfg.window.T, cfg.window.stride, cfg.window.shift_ms)
    table = format_metrics_table({decoder.model.kind: metrics})
    if out_dir is not None:
        out = _ensure_dir(out_dir)
        (out / "metrics.txt").write_text(table + "\n")
        write_metrics_csv(out / "metrics.csv", {decoder.model.kind: metrics})
    return metrics, table


def plot_trial(cfg: PipelineConfig, checkpoint, drive_dir, trial: str, out_dir) -> tuple[Path, Path]:
    """Overlay of measured and predicted force for one trial, as CSV and SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    decoder = load_checkpoint(checkpoint)
    _, feats = load_trial_features(drive_dir, _checkpoint_cfg(cfg, checkpoint))
    if trial not in feats:
        raise ConfigError(f"unknown trial {trial!r}")
    tf = feats[trial]
    if tf.features.n_channels != decoder.model.in_features:
        raise DataError(f"trial {trial} has {tf.features.n_channels} features but checkpoint expects {decoder.model.in_features}")
    w = cfg.window
    y, yhat = predict_trial(decoder, tf.features, tf.force, w.T, w.stride, w.shift_ms)
    from .train import trial_metrics

    m = trial_metrics(trial, y, yhat)
    rate = tf.features.sample_rate_hz
    shift = dsp.shift_samples_for(w.shift_ms, rate)
    t = (np.arange(y.size) + shift) / rate
    out = _ensure_dir(out_dir)
    csv_path = out / f"{trial}_{decoder.model.kind}_overlay.csv"
    with open(csv_path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["time_s", "measured_pct_mvf", "predicted_pct_mvf"])
        for row in zip(t, y, yhat):
            wr.writerow([f"{row[0]:.4f}", f"{row[1]:.4f}", f"{row[2]:.4f}"])
    plt.rcParams["svg.hashsalt"] = "mudec"
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(t, y, label="measured", color="k", lw=1.2)
    ax.plot(t, yhat, label=f"predicted ({decoder.model.kind.upper()})", color="tab:red", lw=1.0)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("force (%MVF)")
    ax.legend(loc="upper right", frameon=False)
    ax.set_title(f"{trial}: RMSE {m.rmse_pct_mvf:.2f} %MVF, r = {m.pearson_r:.3f}")
    fig.tight_layout()
    svg_path = out / f"{trial}_{decoder.model.kind}_overlay.svg"
    fig.savefig(svg_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return svg_path, csv_path


def plot_report(report_path, out_dir) -> Path:
    """Train/validation loss curves from a saved ``train_report.json``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rep = TrainReport.from_dict(_read_json(report_path))
    out = _ensure_dir(out_dir)
    epochs = np.arange(1, len(rep.train_loss) + 1)
    with open(out / "loss_curves.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["epoch", "train_loss", "val_loss"])
        for e, a, b in zip(epochs, rep.train_loss, rep.val_loss):
            wr.writerow([e, f"{a:.6f}", f"{b:.6f}"])
    plt.rcParams["svg.hashsalt"] = "mudec"
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(epochs, rep.train_loss, label="train")
    ax.plot(epochs, rep.val_loss, label="validation")
    ax.axvline(rep.best_epoch, color="grey", ls=":", label=f"best epoch {rep.best_epoch}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE (standardised)")
    ax.legend(frameon=False)
    fig.tight_layout()
    path = out / "loss_curves.svg"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


# ---------------------------------------------------------------------------
# whole pipeline


@dataclass
class PipelineResult:
    decomposition: DecomposeResult
    results: dict[str, TrainResult]

    def metrics(self) -> dict:
        return {k: r.report.test for k, r in self.results.items()}


def run_pipeline(cfg: PipelineConfig, workdir, kinds=("tcn",)) -> PipelineResult:
    """synth -> decompose -> train (+ test evaluation) for each requested model kind."""
    work = Path(workdir)
    synth(cfg, work / "synth")
    dec = decompose(cfg, work / "synth", work / "drives")
    results = {k: train_model(cfg, work / "drives", work / f"train_{k}", kind=k) for k in kinds}
    return PipelineResult(dec, results)
