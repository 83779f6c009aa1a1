"""Central-finite-difference verification of analytic gradients."""

import numpy as np

from .tensor import GradTape, NumericsError


def grad_check(loss_fn, store, epsilon=1e-5, max_coords=None, seed=0):
    """Max relative error between tape gradients and central differences.

    loss_fn is a zero-argument callable building a scalar loss Tensor from
    the parameters in ``store``; it must be deterministic. Up to
    ``max_coords`` coordinates per parameter are probed (all by default).
    """
    if not (1e-6 <= epsilon <= 1e-3):
        raise NumericsError("epsilon must lie in [1e-6, 1e-3]")

    with GradTape() as tape:
        loss = loss_fn()
    if loss.shape != ():
        raise NumericsError("loss must be scalar")
    if not np.isfinite(loss.data):
        raise NumericsError("non-finite loss")
    store.zero_grad()
    tape.backward(loss)
    analytic = {name: p.grad.copy() for name, p in store.items()}

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, p in store.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if max_coords is not None and n > max_coords:
            coords = rng.choice(n, size=max_coords, replace=False)
        else:
            coords = range(n)
        a_flat = analytic[name].reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + epsilon
            f_plus = loss_fn().item()
            flat[i] = orig - epsilon
            f_minus = loss_fn().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            denom = max(abs(a_flat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(a_flat[i] - numeric) / denom)
    return worst
