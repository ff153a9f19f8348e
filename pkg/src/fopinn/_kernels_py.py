"""Pure-numpy elementwise kernels (fallback for the compiled extension)."""

import numpy as np


def sigmoid(z):
    with np.errstate(over="ignore"):
        out = np.exp(-np.asarray(z, dtype=np.float64))
    out += 1.0
    return np.reciprocal(out, out=out)


def swish(z):
    out = sigmoid(z)
    out *= z
    return out


def swish_derivative(z):
    s = sigmoid(z)
    t = 1.0 - s
    t *= s
    t *= z
    t += s
    return t


def adam_update(params, grads, m, v, lr, beta1, beta2, eps, t):
    """In-place bias-corrected Adam step on flat float64 arrays."""
    m *= beta1
    m += (1.0 - beta1) * grads
    v *= beta2
    v += (1.0 - beta2) * grads * grads
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    params -= lr * mhat / (np.sqrt(vhat) + eps)
