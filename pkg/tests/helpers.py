"""Shared test utilities: float64 gradient checking of modules."""

import numpy as np

from aceplan.nn import Tensor
from aceplan.oracle import finite_difference_gradients, relative_errors


def to_float64(module):
    for _, p in module.named_parameters():
        p.data = p.data.astype(np.float64)
    return module


def module_gradcheck(module, inputs, rng, h=1e-5, tol=1e-4):
    """Compare analytic grads of a random projection of module(*inputs) against
    central finite differences computed in float64.

    Returns the worst relative error. inputs are plain float64 ndarrays.
    """
    to_float64(module)
    names = [n for n, _ in module.named_parameters()]
    params = {n: p.data.copy() for n, p in module.named_parameters()}
    out_probe = module(*[Tensor(np.asarray(x, dtype=np.float64)) for x in inputs])
    proj = rng.normal(size=out_probe.data.shape)

    def scalar_loss(pdict):
        for n, p in module.named_parameters():
            p.data = np.asarray(pdict[n], dtype=np.float64)
        out = module(*[Tensor(np.asarray(x, dtype=np.float64)) for x in inputs])
        return float((out.data * proj).sum())

    # analytic pass
    for n, p in module.named_parameters():
        p.data = params[n].copy()
        p.grad = None
    out = module(*[Tensor(np.asarray(x, dtype=np.float64)) for x in inputs])
    (out * proj).sum().backward()
    analytic = {n: (p.grad if p.grad is not None else np.zeros_like(p.data))
                for n, p in module.named_parameters()}

    numeric = finite_difference_gradients(scalar_loss, params, h=h)
    worst = 0.0
    for n in names:
        err = relative_errors(analytic[n], numeric[n]).max()
        worst = max(worst, float(err))
    assert worst < tol, f"gradcheck failed: worst rel err {worst:.3e}"
    return worst
