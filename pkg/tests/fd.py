"""Central finite-difference gradient oracle for the network tests.

Kept independent of autograd: it only ever evaluates the loss function at
perturbed parameter values.
"""

import numpy as np
import torch


def analytic_gradients(loss_fn, params):
    for p in params:
        if p.grad is not None:
            p.grad = None
    loss = loss_fn()
    loss.backward()
    return [p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p) for p in params]


def finite_difference_gradients(loss_fn, params, h=1e-6):
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat = p.view(-1)
            gflat = g.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                lp = float(loss_fn())
                flat[i] = orig - h
                lm = float(loss_fn())
                flat[i] = orig
                gflat[i] = (lp - lm) / (2 * h)
            grads.append(g)
    return grads


def relative_gradient_error(loss_fn, params, h=1e-6):
    """Norm-wise relative error between autograd and central differences."""
    ga = analytic_gradients(loss_fn, params)
    gf = finite_difference_gradients(loss_fn, params, h)
    num = np.sqrt(sum(float(((a - f) ** 2).sum()) for a, f in zip(ga, gf)))
    den = np.sqrt(sum(float((f**2).sum()) for f in gf))
    return num / max(den, 1e-30)


def input_gradient_error(loss_of_input, x0: torch.Tensor, h=1e-6):
    """Same check for gradients with respect to an input tensor."""
    x = x0.clone().requires_grad_(True)
    loss = loss_of_input(x)
    loss.backward()
    ga = x.grad.detach().clone()
    gf = torch.zeros_like(x0)
    flat = x0.view(-1)
    gflat = gf.view(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + h
            lp = float(loss_of_input(x0))
            flat[i] = orig - h
            lm = float(loss_of_input(x0))
            flat[i] = orig
            gflat[i] = (lp - lm) / (2 * h)
    num = float(((ga - gf) ** 2).sum()) ** 0.5
    den = float((gf**2).sum()) ** 0.5
    return num / max(den, 1e-30)
