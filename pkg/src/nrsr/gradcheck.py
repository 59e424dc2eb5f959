"""Central-difference gradient validation.

Runs in 64-bit on small shapes. The function under test maps a list of
leaf tensors to a single output tensor; a fixed random projection turns
that output into the scalar whose derivative is checked entry by entry.

Central differences only measure a derivative where the scalar is
locally smooth. Networks with PReLU activations are piecewise linear in
any single coordinate, so for a few probed entries the +-h interval
straddles an activation kink; there the central difference lands
between the two one-sided slopes and disagrees with the (correct)
analytic derivative by up to half the slope jump. The checker therefore
measures both one-sided slopes and charges an entry only with the part
of the discrepancy that the jump cannot explain; a genuinely wrong
gradient (one-sided slopes agreeing, analytic value off) is still
reported at full size.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor

DEFAULT_H = 1e-4

# fraction of the one-sided slope jump treated as kink-attributable
# (the exact bound is 1/2; the margin absorbs evaluation noise)
KINK_JUMP_FRACTION = 0.75


def grad_check(
    fn: Callable[[Sequence[Tensor]], Tensor],
    leaves: Sequence[np.ndarray],
    h: float = DEFAULT_H,
    max_checks_per_leaf: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Per entry the error is |analytic - numeric| / max(|analytic|, |numeric|,
    1e-8). With ``max_checks_per_leaf`` set, a seeded random subset of each
    leaf's entries is probed instead of all of them (needed for whole
    networks, where two forward passes per parameter would be prohibitive).
    """
    leaves = [np.asarray(a, dtype=np.float64) for a in leaves]
    if rng is None:
        rng = np.random.default_rng(0)
    proj: np.ndarray | None = None

    def scalar(values: list[np.ndarray]) -> tuple[float, Tensor, list[Tensor]]:
        nonlocal proj
        ts = [Tensor(v.copy(), requires_grad=True) for v in values]
        out = fn(ts)
        if proj is None:
            proj = rng.standard_normal(out.data.shape)
        return float(np.sum(out.data * proj)), out, ts

    f0, out, ts = scalar(leaves)
    out.backward(proj)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in ts]

    max_err = 0.0
    for i, base in enumerate(leaves):
        flat = base.reshape(-1)
        n = flat.size
        if max_checks_per_leaf is not None and n > max_checks_per_leaf:
            idx = rng.choice(n, size=max_checks_per_leaf, replace=False)
        else:
            idx = np.arange(n)
        for j in idx:
            orig = flat[j]
            flat[j] = orig + h
            plus, *_ = scalar(leaves)
            flat[j] = orig - h
            minus, *_ = scalar(leaves)
            flat[j] = orig
            jump = abs((plus - f0) / h - (f0 - minus) / h)
            numeric = (plus - minus) / (2.0 * h)
            a = analytic[i].reshape(-1)[j]
            excess = abs(a - numeric) - KINK_JUMP_FRACTION * jump
            if excess <= 0:
                continue
            err = excess / max(abs(a), abs(numeric), 1e-8)
            max_err = max(max_err, err)
    return max_err


def _swap_params(model, ts: Sequence[Tensor]) -> None:
    """Point the model's parameter slots at freshly built leaf tensors."""
    it = iter(ts)
    from .lfcr import LfcrModel

    if isinstance(model, LfcrModel):
        for blk in model.blocks:
            blk.weights, blk.bias, blk.slopes = next(it), next(it), next(it)
        model.deconv_weights = next(it)
        model.deconv_bias = next(it)
    else:  # VdsrModel
        for layer in model.layers:
            layer.weights = next(it)
            layer.bias = next(it)
            if layer.slopes is not None:
                layer.slopes = next(it)


def lfcr_case(seed: int, param_samples: int | None = 48):
    """Full LFCR forward on one 16x16 block; parameters spot-checked by sampling."""
    from .lfcr import build_lfcr
    from .masks import generate_mask
    from .netutil import to_dtype_params

    rng = np.random.default_rng(seed)
    model = build_lfcr(generate_mask("quarter", seed), "quarter", seed=seed)
    to_dtype_params(model, np.float64)
    x = rng.uniform(0.0, 255.0, size=(1, 1, 16, 16))
    leaves = [x] + [p.data for _, p in model.named_parameters()]

    def fn(ts):
        _swap_params(model, ts[1:])
        return model.forward_t(ts[0])

    return fn, leaves, param_samples


def vdsr_case(seed: int, depth: int = 4, param_samples: int | None = 48):
    """Reduced-depth VDSR on a 12x12 input."""
    from .netutil import to_dtype_params
    from .vdsr import build_vdsr

    rng = np.random.default_rng(seed)
    model = build_vdsr(seed=seed, depth=depth)
    to_dtype_params(model, np.float64)
    x = rng.uniform(0.0, 255.0, size=(1, 1, 12, 12))
    leaves = [x] + [p.data for _, p in model.named_parameters()]

    def fn(ts):
        _swap_params(model, ts[1:])
        _, f = model.forward_t(ts[0])
        return f

    return fn, leaves, param_samples


def run_standard_checks(seed: int = 0) -> dict[str, float]:
    """Max relative gradient error for every differentiable operator and both networks."""
    from .tensor import ConvSpec, concat_channels, conv2d, deconv2d, mse_loss, prelu

    rng = np.random.default_rng(seed)
    results: dict[str, float] = {}

    spec = ConvSpec(3, 3, 1, 1, pad=1, in_channels=2, out_channels=3)
    leaves = [rng.standard_normal((1, 2, 4, 4)), rng.standard_normal((3, 2, 3, 3)),
              rng.standard_normal(3)]
    results["conv2d"] = grad_check(
        lambda ts: conv2d(ts[0], ts[1], ts[2], spec), leaves, rng=np.random.default_rng(seed))

    dspec = ConvSpec(4, 4, 4, 4, in_channels=2, out_channels=3)
    leaves = [rng.standard_normal((1, 2, 3, 3)), rng.standard_normal((2, 3, 4, 4)),
              rng.standard_normal(3)]
    results["deconv2d"] = grad_check(
        lambda ts: deconv2d(ts[0], ts[1], ts[2], dspec), leaves, rng=np.random.default_rng(seed))

    # keep inputs away from the kink so |x| >> h
    x = rng.standard_normal((2, 3, 4, 4))
    x = np.where(np.abs(x) < 0.1, 0.5, x)
    leaves = [x, rng.uniform(0.1, 0.5, size=3)]
    results["prelu"] = grad_check(
        lambda ts: prelu(ts[0], ts[1]), leaves, rng=np.random.default_rng(seed))

    leaves = [rng.standard_normal((2, 3, 4, 4)), rng.standard_normal((2, 2, 4, 4))]
    results["concat_channels"] = grad_check(
        lambda ts: concat_channels(ts[0], ts[1]), leaves, rng=np.random.default_rng(seed))

    leaves = [rng.standard_normal((2, 1, 4, 4)), rng.standard_normal((2, 1, 4, 4))]
    results["mse_loss"] = grad_check(
        lambda ts: mse_loss(ts[0], ts[1]), leaves, rng=np.random.default_rng(seed))

    fn, leaves, samples = lfcr_case(seed)
    results["lfcr_16x16"] = grad_check(fn, leaves, max_checks_per_leaf=samples,
                                       rng=np.random.default_rng(seed))

    fn, leaves, samples = vdsr_case(seed)
    results["vdsr_depth4"] = grad_check(fn, leaves, max_checks_per_leaf=samples,
                                        rng=np.random.default_rng(seed))
    return results
