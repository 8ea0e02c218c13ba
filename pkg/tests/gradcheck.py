"""Central finite-difference gradient oracle shared by the test suite.

The oracle differentiates the forward pass numerically (h=1e-5, double
precision) and never consults the autodiff machinery it is checking.
"""

import numpy as np

from qsift import tensor as T

H = 1e-5
REL_TOL = 1e-4
ABS_FLOOR = 1e-7  # below this both values count as zero


def fd_gradcheck(fn, leaves, h=H, rel_tol=REL_TOL):
    """Compare autodiff gradients of fn() against central differences.

    fn must rebuild the graph from the given leaf tensors on every call
    and return a scalar Tensor. Returns a list of failure tuples
    (leaf_index, element, analytic, numeric); empty means pass.
    """
    for t in leaves:
        t.grad = None
    T.backward(fn())
    failures = []
    for li, t in enumerate(leaves):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        ga = analytic.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = fn().item()
            flat[i] = orig - h
            fm = fn().item()
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            if abs(ga[i] - numeric) <= ABS_FLOOR:
                continue
            rel = abs(ga[i] - numeric) / max(abs(ga[i]), abs(numeric))
            if rel >= rel_tol:
                failures.append((li, i, float(ga[i]), float(numeric)))
    return failures


def assert_gradcheck(fn, leaves, h=H, rel_tol=REL_TOL):
    failures = fd_gradcheck(fn, leaves, h, rel_tol)
    assert not failures, f"gradient mismatches: {failures[:5]}"
