import numpy as np


def numeric_grad(loss_fn, param, h=1e-3):
    """Central finite differences of ``loss_fn()`` w.r.t. every entry of ``param``."""
    out = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = float(loss_fn().data)
        flat[i] = orig - h
        down = float(loss_fn().data)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return out


def relative_error(analytic, numeric, floor=1e-8):
    """Max-norm error scaled by the larger max-norm of the two gradients.

    The scale never drops below ``floor``: a parameter whose true gradient is
    exactly zero (e.g. a key bias that cancels inside softmax) otherwise
    compares pure rounding noise against zero.
    """
    denom = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric)) / denom)


def grad_check(loss_fn, params, h=1e-3):
    """Compare autodiff gradients of ``loss_fn`` against finite differences.

    Returns ``(max_error, per_param)`` where ``per_param`` maps each
    parameter's index (or name, for a dict) to its relative error.
    """
    items = list(params.items()) if isinstance(params, dict) else list(enumerate(params))
    for _, p in items:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for k, p in items}
    errors = {}
    for k, p in items:
        errors[k] = relative_error(analytic[k], numeric_grad(loss_fn, p, h))
    return max(errors.values(), default=0.0), errors
