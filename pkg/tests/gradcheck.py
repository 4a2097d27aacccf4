"""Central finite-difference gradient checking for the autodiff engine (64-bit)."""

import numpy as np

from mudec import models as md
from mudec import tensor as tn
from mudec.tensor import Tensor

H = 1e-5


def rel_error(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    den = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / den)


def check(build, inputs: dict[str, np.ndarray], seed: int = 0, h: float = H) -> float:
    """Worst relative error between backprop and finite differences over ``inputs``.

    ``build(tensors)`` maps a dict of leaf tensors to an output tensor; the
    scalar checked is ``sum(out * R)`` for a fixed random projection ``R``.
    """
    leaves = {k: Tensor(v, requires_grad=True, dtype=np.float64) for k, v in inputs.items()}
    out = build(leaves)
    proj = np.random.default_rng(seed).normal(size=out.shape)
    loss = tn.tensor_sum(tn.mul(out, Tensor(proj, dtype=np.float64)))
    loss.backward()

    def f(vals):
        t = {k: Tensor(v, dtype=np.float64) for k, v in vals.items()}
        return float(np.sum(build(t).data * proj))

    worst = 0.0
    for name, value in inputs.items():
        num = np.zeros_like(value, dtype=np.float64)
        flat = num.reshape(-1)
        for i in range(value.size):
            plus = {k: v.copy() for k, v in inputs.items()}
            minus = {k: v.copy() for k, v in inputs.items()}
            plus[name].reshape(-1)[i] += h
            minus[name].reshape(-1)[i] -= h
            flat[i] = (f(plus) - f(minus)) / (2 * h)
        grad = leaves[name].grad if leaves[name].grad is not None else np.zeros_like(num)
        worst = max(worst, rel_error(grad, num))
    return worst


def check_model(model, x: np.ndarray, seed: int = 0, h: float = H) -> float:
    """Worst relative error over every parameter of ``model`` (eval mode) and the input."""
    proj = np.random.default_rng(seed).normal(size=(x.shape[0], 1, x.shape[2]))
    model.zero_grad()
    xt = Tensor(x, requires_grad=True, dtype=np.float64)
    loss = tn.tensor_sum(tn.mul(model(xt), Tensor(proj, dtype=np.float64)))
    loss.backward()

    def f():
        return float(np.sum(model(Tensor(x, dtype=np.float64)).data * proj))

    worst = 0.0
    for p in list(model.parameters().values()):
        num = np.zeros_like(p.data)
        for i in range(p.data.size):
            old = p.data.reshape(-1)[i]
            p.data.reshape(-1)[i] = old + h
            fp = f()
            p.data.reshape(-1)[i] = old - h
            fm = f()
            p.data.reshape(-1)[i] = old
            num.reshape(-1)[i] = (fp - fm) / (2 * h)
        worst = max(worst, rel_error(p.grad, num))
    num = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.reshape(-1)[i] += h
        xm.reshape(-1)[i] -= h
        num.reshape(-1)[i] = (
            np.sum(model(Tensor(xp, dtype=np.float64)).data * proj) - np.sum(model(Tensor(xm, dtype=np.float64)).data * proj)
        ) / (2 * h)
    return max(worst, rel_error(xt.grad, num))


def away_from_zero(rng, shape, margin=0.05):
    """Random values bounded away from zero so kinks (ReLU, |x|) are not straddled by +-h."""
    v = rng.normal(size=shape)
    return np.where(np.abs(v) < margin, np.sign(v + 1e-12) * margin, v)


def op_cases(seed: int):
    """One random small instance of every differentiable op: name -> (build, inputs)."""
    rng = np.random.default_rng(seed)
    n, c, t = 2, int(rng.integers(2, 4)), int(rng.integers(4, 8))
    k, d = int(rng.integers(1, 4)), int(rng.integers(1, 3))
    x = rng.normal(size=(n, c, t))
    drop_seed = int(rng.integers(1 << 30))
    cases = {
        "add": (lambda z: tn.add(z["a"], z["b"]), {"a": x, "b": rng.normal(size=(1, c, 1))}),
        "sub": (lambda z: tn.sub(z["a"], z["b"]), {"a": x, "b": rng.normal(size=(c, t))}),
        "mul": (lambda z: tn.mul(z["a"], z["b"]), {"a": x, "b": rng.normal(size=(n, c, t))}),
        "mul_scalar": (lambda z: tn.mul_scalar(z["a"], -1.7), {"a": x}),
        "square": (lambda z: tn.square(z["a"]), {"a": x}),
        "relu": (lambda z: tn.relu(z["a"]), {"a": away_from_zero(rng, (n, c, t))}),
        "sigmoid": (lambda z: tn.sigmoid(z["a"]), {"a": x}),
        "sum": (lambda z: tn.tensor_sum(z["a"]), {"a": x}),
        "mean": (lambda z: tn.mean(z["a"]), {"a": x}),
        "reshape": (lambda z: tn.reshape(z["a"], (n * c, t)), {"a": x}),
        "take": (lambda z: tn.take(z["a"], 1), {"a": x}),
        "causal_conv1d": (
            lambda z: tn.causal_conv1d(z["x"], z["w"], z["b"], d),
            {"x": x, "w": rng.normal(size=(3, c, k)), "b": rng.normal(size=3)},
        ),
        "layer_norm_channels": (
            lambda z: tn.layer_norm_channels(z["x"], z["g"], z["b"]),
            {"x": x, "g": rng.normal(size=c), "b": rng.normal(size=c)},
        ),
        "dropout": (
            lambda z: tn.dropout(z["x"], 0.3, True, np.random.default_rng(drop_seed)),
            {"x": x},
        ),
        "lif_forward": (
            lambda z: tn.add(*tn.lif_forward(z["i"], 0.9, 1.0, 25.0, relaxed=True)),
            {"i": rng.uniform(0.0, 0.6, size=(n, c, t + 10))},
        ),
        "synaptic_readout": (
            lambda z: tn.synaptic_readout(z["s"], z["a"]),
            {"s": rng.normal(size=(n, c, t)), "a": rng.normal(size=1)},
        ),
        "mse_loss": (
            lambda z: tn.mse_loss(z["p"], np.asarray(x[:, :1, :])),
            {"p": rng.normal(size=(n, 1, t))},
        ),
    }
    return cases


def lif_chain(x, w, alpha, relaxed):
    """conv front-end -> LIF -> synaptic readout, as in the spiking decoder."""
    cur = tn.causal_conv1d(x, w, None, 1)
    spikes, _ = tn.lif_forward(cur, 0.9, 1.0, 25.0, relaxed=relaxed)
    return tn.synaptic_readout(spikes, alpha), spikes


def lif_chain_check(seed: int, t_len: int = 20, channels: int = 2, h: float = H):
    """Front-end weight gradients of the LIF chain against finite differences.

    Returns ``(rel_error, spikes_stable)``. The gradient is compared on the
    surrogate-smoothed relaxation, whose exact derivative is what BPTT
    computes. ``spikes_stable`` reports whether the hard spike pattern is
    unchanged under every +-h weight perturbation (the guard that excludes
    the Heaviside discontinuity).
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=(1, channels, t_len))
    w = rng.uniform(0.0, 0.5, size=(channels, channels, 3))
    alpha = rng.normal(size=1)

    def hard(wv):
        _, s = lif_chain(Tensor(x, dtype=np.float64), Tensor(wv, dtype=np.float64), Tensor(alpha, dtype=np.float64), False)
        return s.data

    base = hard(w)
    stable = True
    for i in range(w.size):
        for sign in (1, -1):
            wp = w.copy()
            wp.reshape(-1)[i] += sign * h
            stable &= np.array_equal(hard(wp), base)
    err = check(
        lambda z: lif_chain(z["x"], z["w"], z["a"], True)[0],
        {"x": x, "w": w, "a": alpha},
        seed=seed,
        h=h,
    )
    return err, bool(stable), int(base.sum())


def snn_kink_margin(model, x) -> float:
    """Distance of the nearest ReLU pre-activation or membrane value from its kink."""
    p, cfg = model.params, model.config
    h, margin = Tensor(x), np.inf
    for i, d in enumerate(cfg.dilations):
        h = tn.causal_conv1d(h, p[f"front{i}.w"], p[f"front{i}.b"], d)
        margin = min(margin, np.abs(h.data).min())
        h = tn.relu(h)
    _, v = tn.lif_forward(h, cfg.beta_m, cfg.v_th, cfg.surrogate_slope, relaxed=True)
    return min(margin, np.abs(v.data - cfg.v_th).min())


def stable_snn_instance(seed, t_len=20, margin=1e-3):
    """Small SNN and input whose kinks all sit at least ``margin`` away (resampled until so)."""
    rng = np.random.default_rng(seed)
    while True:
        model = md.build_snn(md.SnnConfig(in_features=2, width=3, kernel=3, dilations=[1, 2]), seed=int(rng.integers(1 << 30)))
        for p in model.parameters().values():
            p.data = p.data + 0.1 * rng.normal(size=p.shape)
        x = rng.normal(size=(2, 2, t_len))
        if snn_kink_margin(model, x) > margin:
            return model, x
