"""Shared oracles for the test suite."""

import numpy as np

from opbench.deeponet import loss_and_gradients
from opbench.nn import gradients


def rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def fd_check(model, loss, x, y, h=1e-6, tol=1e-5, training=False, seed=None):
    """Fraction of parameter coordinates whose backprop gradient matches central differences."""

    def rng():
        return None if seed is None else np.random.default_rng(seed)

    def value():
        return loss(model.forward(x, training, rng())[0], y)[0]

    _, grads = gradients(model, loss, x, y, training, rng())
    ok = total = 0
    for p, g in zip(model.params(), grads):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = value()
            flat[i] = old - h
            down = value()
            flat[i] = old
            num = (up - down) / (2 * h)
            ok += rel_err(gflat[i], num) <= tol
            total += 1
    return ok / total


def fd_deeponet(p, u, pts, y, loss, h=1e-6, floor=1e-5):
    # central differences carry ~eps*|L|/h = 1e-10 round-off, so gradients
    # below ``floor`` are compared at that absolute level instead
    _, grads = loss_and_gradients(p, u, pts, y, loss)
    errs = []
    for arr, g in zip(p.params(), grads):
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss_and_gradients(p, u, pts, y, loss)[0]
            flat[i] = old - h
            down = loss_and_gradients(p, u, pts, y, loss)[0]
            flat[i] = old
            errs.append(rel_err(gflat[i], (up - down) / (2 * h), floor))
    return np.array(errs)
