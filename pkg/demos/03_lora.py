#!/usr/bin/env python3
"""Low-rank conv adapters and their exact merge.

An adapter adds ``B(A x)``: ``A`` is an r-channel conv with the layer's
kernel, ``B`` a 1x1 conv back to the output width. After training, the pair
folds into the frozen weight so inference costs nothing extra.
"""

import numpy as np

from eventface import autodiff as ad
from eventface.autodiff import Tensor
from eventface.backbone import LoraConvLayer, adapter_parameter_count, lora_forward, lora_merge

rng = np.random.default_rng(0)
layer = LoraConvLayer(Tensor(rng.normal(size=(32, 16, 3, 3))), padding=1)
layer.attach(rank=6, rng=rng)
print("frozen weight   :", layer.w0.shape, "=", layer.w0.data.size, "parameters")
print("adapter (r=6)   :", adapter_parameter_count(layer), "parameters")

# B starts at zero, so the adapted layer initially equals the frozen one
x = Tensor(rng.normal(size=(2, 16, 8, 8)))
base = ad.conv2d(x, layer.w0, padding=1).data
print("identical at init:", np.array_equal(lora_forward(x, layer, 1, 1).data, base))

# pretend training moved the adapters, then merge
layer.w_b.data[:] = rng.normal(scale=0.1, size=layer.w_b.shape)
adapted = lora_forward(x, layer, 1, 1).data
merged = ad.conv2d(x, Tensor(lora_merge(layer)), padding=1).data
print("max |merged - adapted| = %.2e" % np.abs(merged - adapted).max())

layer.merge()
print("adapters left after merge:", layer.has_adapters)
