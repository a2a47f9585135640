import numpy as np
import pytest


def central_fd(f, x, eps=1e-6):
    """Central finite-difference gradient of scalar f at array x."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy(); xp[idx] += eps
        xm = x.copy(); xm[idx] -= eps
        g[idx] = (f(xp) - f(xm)) / (2 * eps)
    return g


def param_fd(loss, params, eps=1e-5):
    """Finite-difference gradients for every weight/bias entry of MlpParams.

    Mutates entries in place and restores them; returns a list of
    (d_weight, d_bias) arrays shaped like the parameters.
    """
    out = []
    for layer in params.layers:
        pair = []
        for arr in (layer.weight, layer.bias):
            g = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + eps
                lp = loss()
                arr[idx] = orig - eps
                lm = loss()
                arr[idx] = orig
                g[idx] = (lp - lm) / (2 * eps)
            pair.append(g)
        out.append(tuple(pair))
    return out


def _flatten(grads):
    for item in grads:
        if isinstance(item, (tuple, list)):
            yield from _flatten(item)
        else:
            yield np.ravel(item)


def fd_agreement(analytic, numeric, rel_tol, floor=1e-8):
    """Fraction of entries whose analytic/numeric gradients agree.

    Accepts arrays or nested tuples of arrays (per-layer gradient pairs).
    """
    a = np.concatenate(list(_flatten(analytic)))
    b = np.concatenate(list(_flatten(numeric)))
    denom = np.maximum(np.abs(b), floor)
    return float((np.abs(a - b) / denom <= rel_tol).mean())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
