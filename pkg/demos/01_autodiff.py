#!/usr/bin/env python3
"""Reverse-mode autodiff in a few lines.

Builds a tiny computation, back-propagates through it, and compares the
gradients with central finite differences using ``gradcheck``.
"""

import numpy as np

from eventface import autodiff as ad
from eventface.autodiff import Tensor, gradcheck

rng = np.random.default_rng(0)

# a 3x3 conv followed by layer-norm and a sigmoid, reduced to a scalar
x = Tensor(rng.normal(size=(1, 2, 5, 5)), requires_grad=True)
w = Tensor(rng.normal(size=(4, 2, 3, 3)), requires_grad=True)


def net(x, w):
    h = ad.conv2d(x, w, padding=1)  # [1, 4, 5, 5]
    h = ad.transpose(h, (0, 2, 3, 1))  # channels last for layer-norm
    h = ad.layer_norm(h, Tensor(np.ones(4)), Tensor(np.zeros(4)))
    return ad.tsum(ad.sigmoid(h))


loss = net(x, w)
loss.backward()
print("loss            :", loss.item())
print("dL/dw shape     :", w.grad.shape)
print("|dL/dx|_max     :", np.abs(x.grad).max())

# finite-difference check (central differences, fp64)
err = gradcheck(net, [x, w], eps=1e-6)
print("gradcheck error : %.2e  (normwise relative, tolerance 1e-4)" % err)

# no_grad() switches recording off, e.g. for evaluation
with ad.no_grad():
    y = net(x, w)
print("recorded a graph under no_grad():", y.requires_grad)
