"""Shared finite-difference oracle for the unfolding backward pass."""

import numpy as np

from riscade import backward, forward, nmse_loss
from riscade.unfolding import LayerParams, UnfoldingParams


def random_network(seed, dim=8, n_layers=3, weight_scale=0.3):
    """A small random layer stack plus matching random inputs and target."""
    rng = np.random.default_rng(seed)
    gram = rng.standard_normal((dim, dim))
    stats = rng.standard_normal(dim)
    h_true = rng.standard_normal(dim)
    layers = [
        LayerParams(
            delta1=float(rng.uniform(-1, 0)),
            delta2=float(rng.uniform(0, 1)),
            delta3=float(rng.uniform(-1, 0)),
            weight=np.eye(dim) + weight_scale * rng.standard_normal((dim, dim)),
            bias=weight_scale * rng.standard_normal(dim),
        )
        for _ in range(n_layers)
    ]
    return UnfoldingParams(layers=layers), gram, stats, h_true


def max_gradient_error(params, gram, stats, h_true, step=1e-6):
    """Worst relative error of analytic versus central-difference gradients.

    The denominator floor (1e-3) sits at the noise scale of the difference
    oracle itself: with O(1) losses the central difference carries ~1e-10
    absolute error, so below the floor agreement is checked absolutely.
    """
    _, cache = forward(params, gram, stats)
    grads = backward(params, cache, gram, stats, h_true)

    def loss_fn():
        out, _ = forward(params, gram, stats, keep_cache=False)
        return nmse_loss(out, h_true)

    worst = 0.0
    for lp, lg in zip(params.layers, grads.layers):
        for name in ("delta1", "delta2", "delta3"):
            orig = getattr(lp, name)
            setattr(lp, name, orig + step)
            up = loss_fn()
            setattr(lp, name, orig - step)
            down = loss_fn()
            setattr(lp, name, orig)
            numeric = (up - down) / (2 * step)
            analytic = getattr(lg, name)
            denom = max(abs(analytic), abs(numeric), 1e-3)
            worst = max(worst, abs(analytic - numeric) / denom)
        for arr, grad_arr in ((lp.weight, lg.weight), (lp.bias, lg.bias)):
            flat = arr.ravel()
            gflat = grad_arr.ravel()
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + step
                up = loss_fn()
                flat[j] = orig - step
                down = loss_fn()
                flat[j] = orig
                numeric = (up - down) / (2 * step)
                denom = max(abs(gflat[j]), abs(numeric), 1e-3)
                worst = max(worst, abs(gflat[j] - numeric) / denom)
    return worst
