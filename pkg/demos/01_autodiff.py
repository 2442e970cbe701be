"""
Reverse-mode gradients on numpy arrays
======================================

Every operation records its parents and a backward rule, so calling
``backward`` on a scalar walks the graph once in reverse.
"""

import numpy as np

from cpcfg import autodiff as ad

# A leaf created with ``parameter`` collects a gradient.
x = ad.parameter(3.0, "x")
y = x * x
ad.backward(y)
print("d(x^2)/dx at 3:", x.grad)

# Log-sum-exp is the workhorse of the parser.  Its gradient is a softmax,
# and -inf inputs are legal: they simply get zero weight.
v = ad.parameter(np.array([0.0, np.log(3.0), -np.inf]), "v")
ad.backward(ad.logsumexp(v, axis=0))
print("logsumexp gradient:", v.grad)

# Any scalar function of parameters can be checked against central
# finite differences.
w = ad.parameter(np.random.default_rng(0).normal(size=(3, 4)), "w")
b = ad.parameter(np.zeros(4), "b")
inputs = np.random.default_rng(1).normal(size=(5, 3))


def loss():
    h = ad.tanh(inputs @ w + b)
    return ad.mean(h * h)


report = ad.check_gradients(loss, {"w": w, "b": b}, tolerance=1e-6)
print("finite differences agree:", report["passed"], "max deviation", max(report["max_deviation"].values()))

# Inside ``no_grad`` nothing is recorded, which keeps decoding cheap.
with ad.no_grad():
    z = x * 2.0
print("graph recorded under no_grad:", z.requires_grad)
