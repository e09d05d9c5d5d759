"""Central finite-difference checks for the hand-written backward passes.

Relative error is measured norm-wise over the checked coordinates:
``||analytic - numeric|| / max(||analytic||, ||numeric||)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import loss as loss_mod
from . import tensor as T
from .model import ModelConfig, SCTNet, init_weights

H_STEP = 1e-4


@dataclass
class CheckResult:
    name: str
    rel_error: float

    def ok(self, tol: float) -> bool:
        return self.rel_error <= tol


def rel_error(a, n) -> float:
    a, n = np.ravel(a), np.ravel(n)
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)


def numeric_grad(f, x: np.ndarray, idx=None, h: float = H_STEP) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. entries of ``x`` (mutated in place)."""
    flat = x.reshape(-1)
    idx = range(flat.size) if idx is None else idx
    out = []
    for i in idx:
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        out.append((fp - fm) / (2 * h))
    return np.array(out)


def check_op(name, make_op, inputs, rng, h: float = H_STEP) -> CheckResult:
    """Check every input gradient of an op against a random linear functional of its output."""
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    out = make_op()(*inputs)
    r = rng.standard_normal(out.shape)
    op = make_op()
    op(*inputs)
    grads = op.backward(r)
    if not isinstance(grads, tuple):
        grads = (grads,)
    errs = []
    for x, g in zip(inputs, grads):
        num = numeric_grad(lambda: float(np.sum(make_op()(*inputs) * r)), x, h=h)
        errs.append((g.ravel(), num))
    a = np.concatenate([e[0] for e in errs])
    n = np.concatenate([e[1] for e in errs])
    return CheckResult(name, rel_error(a, n))


def op_suite(seed: int) -> list[CheckResult]:
    """Gradient checks for every differentiable kernel on small random shapes."""
    rng = np.random.default_rng(seed)
    m, k, n = rng.integers(2, 5, size=3)
    c = int(rng.integers(2, 6))
    res = [
        check_op("matmul", T.MatMul, [rng.standard_normal((m, k)), rng.standard_normal((k, n))], rng),
        check_op("matmul.batched", T.MatMul,
                 [rng.standard_normal((2, m, k)), rng.standard_normal((2, k, n))], rng),
        check_op("linear", T.Linear,
                 [rng.standard_normal((m, c)), rng.standard_normal((c, n)), rng.standard_normal(n)], rng),
        check_op("softmax", T.Softmax, [rng.standard_normal((m, n))], rng),
        check_op("layernorm", T.LayerNorm,
                 [rng.standard_normal((m, c)), rng.standard_normal(c), rng.standard_normal(c)], rng),
        check_op("gelu", T.Gelu, [rng.standard_normal((m, n))], rng),
        check_op("sigmoid", T.Sigmoid, [rng.standard_normal((m, n))], rng),
        check_op("mlp", T.Mlp, [rng.standard_normal((m, c)), rng.standard_normal((c, 2 * c)),
                                rng.standard_normal(2 * c), rng.standard_normal((2 * c, c)),
                                rng.standard_normal(c)], rng),
        check_op("conv2d.pad1", lambda: T.Conv2d(pad=1),
                 [rng.standard_normal((2, 5, 4)), rng.standard_normal((3, 2, 3, 3)),
                  rng.standard_normal(3)], rng),
        check_op("conv2d.stride2", lambda: T.Conv2d(pad=1, stride=2),
                 [rng.standard_normal((2, 6, 5)), rng.standard_normal((3, 2, 3, 3)),
                  rng.standard_normal(3)], rng),
    ]
    g = rng.uniform(0.05, 0.95, size=(3, 4, 5))
    p = rng.uniform(0.05, 0.95, size=(3, 4, 5))
    res.append(check_op("mu_law", loss_mod.MuLaw, [p], rng))
    res.append(_check_loss(seed, p, g))
    return res


def _check_loss(seed, pred, gt) -> CheckResult:
    phi = loss_mod.FeatureExtractor(seed=seed, dtype=np.float64)
    pred = np.array(pred, dtype=np.float64)
    f = lambda: loss_mod.total_loss(pred, gt, phi).total
    grad = loss_mod.total_loss(pred, gt, phi, with_grad=True).grad
    num = numeric_grad(f, pred)
    return CheckResult("total_loss", rel_error(grad, num))


def network_check(cfg: ModelConfig, seed: int, size=(8, 8), samples_per_param: int = 3,
                  h: float = H_STEP) -> list[CheckResult]:
    """Check the whole network on sampled parameter entries and on its inputs.

    The objective is a fixed random projection of the prediction, so every
    output pixel contributes.
    """
    rng = np.random.default_rng(seed)
    w = init_weights(cfg, rng, dtype=np.float64)
    # move LN gains and biases off their init so their gradients are generic
    for name in w:
        if name.endswith(".bias") or ".norm" in name:
            w[name] = w[name] + 0.1 * rng.standard_normal(w[name].shape)
    hh, ww = size
    inputs = [np.concatenate([l, l ** 2.2 / t]) for l, t in
              ((rng.uniform(0, 1, (3, hh, ww)), t) for t in (0.25, 1.0, 4.0))]
    r = rng.standard_normal((3, hh, ww))

    def objective():
        return float(np.sum(SCTNet(cfg, w).forward(inputs) * r))

    net = SCTNet(cfg, w)
    net.forward(inputs)
    grads, dinputs = net.backward(r, return_inputs=True)
    results = []
    all_a, all_n = [], []
    for name in sorted(w):
        size_ = w[name].size
        idx = rng.choice(size_, size=min(samples_per_param, size_), replace=False)
        num = numeric_grad(objective, w[name], idx, h)
        ana = grads[name].reshape(-1)[idx]
        all_a.append(ana)
        all_n.append(num)
    for i, x in enumerate(inputs):
        idx = rng.choice(x.size, size=4, replace=False)
        num = numeric_grad(objective, x, idx, h)
        all_a.append(dinputs[i].reshape(-1)[idx])
        all_n.append(num)
    results.append(CheckResult(f"network[seed={seed}]", rel_error(
        np.concatenate(all_a), np.concatenate(all_n))))
    # directional derivative along a random direction in full parameter space
    dirs = {k: rng.standard_normal(v.shape) for k, v in w.items()}
    ana = sum(float(np.sum(grads[k] * dirs[k])) for k in w)
    orig = {k: v.copy() for k, v in w.items()}
    vals = []
    for s in (1, -1):
        for k in w:
            w[k][...] = orig[k] + s * h * dirs[k]
        vals.append(objective())
    for k in w:
        w[k][...] = orig[k]
    num = (vals[0] - vals[1]) / (2 * h)
    results.append(CheckResult(f"network.direction[seed={seed}]", rel_error(ana, num)))
    return results


def run_suite(cfg: ModelConfig, seeds=(0, 1, 2), size=(8, 8)) -> list[CheckResult]:
    results = []
    for s in seeds:
        results.extend(op_suite(s))
        results.extend(network_check(cfg, s, size))
    return results
