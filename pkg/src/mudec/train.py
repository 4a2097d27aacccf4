"""Adam, mini-batch training with validation early stopping, and held-out metrics."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .dsp import MultiChannelSignal, make_windows
from .errors import NumericalError, ParameterError
from .models import Decoder, Model
from .tensor import Tensor, mse_loss

log = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: OptimizerState) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {k!r}", {"param": k, "step": state.step})
    state.step += 1
    b1, b2 = state.betas
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            continue
        if k not in state.m:
            state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= (state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)).astype(p.dtype)


@dataclass
class TrialMetrics:
    trial: str
    rmse_pct_mvf: float
    pearson_r: float
    r_undefined: bool = False


@dataclass
class TrainReport:
    model_kind: str = ""
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    epochs_run: int = 0
    stopped_early: bool = False
    seconds: float = 0.0
    test: list[TrialMetrics] = field(default_factory=list)

    @property
    def mean_rmse(self) -> float:
        return float(np.mean([t.rmse_pct_mvf for t in self.test])) if self.test else float("nan")

    @property
    def mean_r(self) -> float:
        return float(np.mean([t.pearson_r for t in self.test])) if self.test else float("nan")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean_rmse_pct_mvf"] = self.mean_rmse
        d["mean_pearson_r"] = self.mean_r
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainReport":
        d = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        d["test"] = [TrialMetrics(**t) for t in d.get("test", [])]
        return cls(**d)


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def dataset_loss(model: Model, inputs: np.ndarray, targets: np.ndarray, batch_size: int = 64) -> float:
    """Eval-mode MSE over a whole standardised dataset (window-weighted)."""
    total = 0.0
    for start in range(0, inputs.shape[0], batch_size):
        xb = np.transpose(inputs[start : start + batch_size], (0, 2, 1))
        yb = targets[start : start + batch_size][:, None, :]
        pred = model(Tensor(xb), train=False)
        total += float(mse_loss(pred, yb).data) * xb.shape[0]
    return total / inputs.shape[0]


def fit(
    model: Model,
    train,
    val,
    max_epochs: int = 80,
    batch_size: int = 32,
    patience: int = 10,
    lr: float = 1e-3,
    min_delta: float = 1e-5,
    seed=0,
) -> TrainReport:
    """Train on standardised windows; keep the parameters with the best validation MSE.

    Batches are reshuffled each epoch from a generator seeded by ``(seed, epoch)``.
    Training stops once validation loss has not improved by ``min_delta`` for
    ``patience`` consecutive epochs.
    """
    if len(train) == 0 or len(val) == 0:
        raise ParameterError("fit needs non-empty train and validation sets")
    report = TrainReport(model_kind=model.kind)
    state = OptimizerState(lr=lr)
    params = model.parameters()
    best_val, best_state, wait = np.inf, model.state_dict(), 0
    t0 = time.perf_counter()
    for epoch in range(max_epochs):
        rng = np.random.default_rng([int(seed), epoch])
        losses = []
        for idx in _batches(len(train), batch_size, rng):
            xb = np.transpose(train.inputs[idx], (0, 2, 1))
            yb = train.targets[idx][:, None, :]
            model.zero_grad()
            loss = mse_loss(model(Tensor(xb), train=True, rng=rng), yb)
            loss.backward()
            grads = {k: p.grad for k, p in params.items() if p.grad is not None}
            adam_step({k: p.data for k, p in params.items()}, grads, state)
            losses.append(float(loss.data))
        val_loss = dataset_loss(model, val.inputs, val.targets)
        report.train_loss.append(float(np.mean(losses)))
        report.val_loss.append(val_loss)
        report.epochs_run = epoch + 1
        log.info("%s epoch %d train %.5f val %.5f", model.kind, epoch + 1, report.train_loss[-1], val_loss)
        if not np.isfinite(val_loss):
            if not np.isfinite(best_val):
                raise NumericalError("validation loss is not finite", {"epoch": epoch + 1})
            wait += 1
        elif val_loss < best_val - min_delta:
            best_val, best_state, wait = val_loss, model.state_dict(), 0
            report.best_epoch = epoch + 1
            continue
        else:
            wait += 1
        if wait >= patience:
            report.stopped_early = epoch + 1 < max_epochs
            break
    model.load_state_dict(best_state)
    report.seconds = time.perf_counter() - t0
    return report


# ---------------------------------------------------------------------------
# evaluation


def pearson_r(y_true, y_pred) -> tuple[float, bool]:
    """Sample Pearson correlation; ``(0.0, True)`` when either side is constant."""
    a = np.asarray(y_true, dtype=np.float64) - np.mean(y_true)
    b = np.asarray(y_pred, dtype=np.float64) - np.mean(y_pred)
    den = np.sqrt((a @ a) * (b @ b))
    if den == 0:
        return 0.0, True
    return float(np.clip(a @ b / den, -1.0, 1.0)), False


def rmse(y_true, y_pred) -> float:
    d = np.asarray(y_pred, dtype=np.float64) - np.asarray(y_true, dtype=np.float64)
    return float(np.sqrt(np.mean(d * d)))


def trial_metrics(name: str, y_true, y_pred) -> TrialMetrics:
    r, undefined = pearson_r(y_true, y_pred)
    return TrialMetrics(name, rmse(y_true, y_pred), r, undefined)


def stitch(windows: np.ndarray, stride: int) -> np.ndarray:
    """Continuous trace from overlapping windows: all of the first, then each window's last ``stride`` samples."""
    windows = np.asarray(windows)
    if windows.shape[0] == 0:
        return np.empty(0)
    return np.concatenate([windows[0]] + [w[-stride:] for w in windows[1:]])


def predict_trial(
    decoder: Decoder,
    features: MultiChannelSignal,
    force: MultiChannelSignal,
    T: int = 256,
    stride: int = 128,
    shift_ms: float = 80.0,
) -> tuple[np.ndarray, np.ndarray]:
    """(measured, predicted) force in %MVF over the trial, windowed as in training."""
    ds = make_windows(features, force, T, stride, shift_ms)
    pred = decoder.predict(ds.inputs)
    return stitch(ds.targets, stride), stitch(pred, stride)


def evaluate(decoder: Decoder, test_trials, T: int = 256, stride: int = 128, shift_ms: float = 80.0) -> list[TrialMetrics]:
    """RMSE (%MVF) and Pearson r per held-out trial.

    ``test_trials`` is a sequence of ``(name, features, force)``.
    """
    if not test_trials:
        raise ParameterError("evaluate needs at least one test trial")
    out = []
    for name, feats, force in test_trials:
        y, yhat = predict_trial(decoder, feats, force, T, stride, shift_ms)
        out.append(trial_metrics(name, y, yhat))
    return out


def format_metrics_table(reports: dict[str, list[TrialMetrics]]) -> str:
    """Plain-text table: one row per (model, trial) plus a mean row per model."""
    lines = [f"{'model':<6} {'trial':<12} {'RMSE(%MVF)':>10} {'r':>7}"]
    for kind, rows in reports.items():
        for m in rows:
            flag = "*" if m.r_undefined else ""
            lines.append(f"{kind.upper():<6} {m.trial:<12} {m.rmse_pct_mvf:>10.2f} {m.pearson_r:>7.3f}{flag}")
        if rows:
            lines.append(
                f"{kind.upper():<6} {'mean':<12} {np.mean([m.rmse_pct_mvf for m in rows]):>10.2f} "
                f"{np.mean([m.pearson_r for m in rows]):>7.3f}"
            )
    return "\n".join(lines)


def format_summary(reports: dict[str, list[TrialMetrics]]) -> str:
    """One-line ``RMSE / r`` summary, e.g. ``TCN 4.44 / 0.974, SNN 8.25 / 0.922``."""
    parts = []
    for kind, rows in reports.items():
        parts.append(
            f"{kind.upper()} {np.mean([m.rmse_pct_mvf for m in rows]):.2f} / {np.mean([m.pearson_r for m in rows]):.3f}"
        )
    return ", ".join(parts)


def split_trials(trials: list, scheme: tuple[int, int, int] = (6, 2, 2), seed=0) -> dict[str, list]:
    """Seeded disjoint train/val/test partition of a trial list."""
    n_needed = sum(scheme)
    if len(trials) < n_needed:
        raise ParameterError(f"split {scheme} needs {n_needed} trials, got {len(trials)}")
    order = np.random.default_rng(seed).permutation(len(trials))
    a, b, c = scheme
    pick = lambda ix: [trials[i] for i in sorted(ix)]
    return {"train": pick(order[:a]), "val": pick(order[a : a + b]), "test": pick(order[a + b : a + b + c])}
