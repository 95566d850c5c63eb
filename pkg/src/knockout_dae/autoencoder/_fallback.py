"""Pure-numpy training kernels; same signatures as the compiled ``_kernels`` module."""

from __future__ import annotations

import numpy as np

from .network import ACTIVATIONS, activate, activation_grad


def forward_batch(weights, biases, act_codes, x):
    a = np.asarray(x, dtype=float)
    for w, b, code in zip(weights, biases, act_codes):
        a = activate(a @ w.T + b, ACTIVATIONS[code])
    return a


def loss_and_grads(weights, biases, act_codes, x, y, grad_w, grad_b):
    """MSE of the batch; gradients are written into ``grad_w``/``grad_b`` in place."""
    acts = [np.asarray(x, dtype=float)]
    for w, b, code in zip(weights, biases, act_codes):
        acts.append(activate(acts[-1] @ w.T + b, ACTIVATIONS[code]))
    out = acts[-1]
    diff = out - y
    loss = float(np.mean(diff * diff))
    delta = 2.0 * diff / out.size
    for i in range(len(weights) - 1, -1, -1):
        delta = delta * activation_grad(acts[i + 1], ACTIVATIONS[act_codes[i]])
        np.matmul(delta.T, acts[i], out=grad_w[i])
        np.sum(delta, axis=0, out=grad_b[i])
        if i:
            delta = delta @ weights[i]
    return loss


def adam_update(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
    """In-place bias-corrected Adam on flat float64 arrays."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
