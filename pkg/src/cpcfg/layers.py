"""Parameter initialisation and the few network blocks the model needs."""

import numpy as np

from . import autodiff as ad


def xavier(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Module:
    """Owns an ordered dict of named leaf tensors."""

    def __init__(self):
        self.params = {}

    def add_param(self, name, value):
        t = ad.parameter(value, name=name)
        self.params[name] = t
        return t

    def state(self):
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state(self, arrays, prefix=""):
        for k, v in self.params.items():
            src = arrays[prefix + k]
            if src.shape != v.data.shape:
                raise ValueError(f"shape mismatch for {prefix + k}: {src.shape} vs {v.data.shape}")
            v.data = np.array(src, dtype=np.float64)


def linear(x, w, b):
    return x @ w + b


class MLP:
    """Two ReLU hidden layers followed by an affine output layer."""

    def __init__(self, module, prefix, rng, in_dim, hidden, out_dim, zero_output=False):
        self.w1 = module.add_param(f"{prefix}.w1", xavier(rng, in_dim, hidden))
        self.b1 = module.add_param(f"{prefix}.b1", np.zeros(hidden))
        self.w2 = module.add_param(f"{prefix}.w2", xavier(rng, hidden, hidden))
        self.b2 = module.add_param(f"{prefix}.b2", np.zeros(hidden))
        w3 = np.zeros((hidden, out_dim)) if zero_output else xavier(rng, hidden, out_dim)
        self.w3 = module.add_param(f"{prefix}.w3", w3)
        self.b3 = module.add_param(f"{prefix}.b3", np.zeros(out_dim))

    def __call__(self, x):
        h = ad.relu(linear(x, self.w1, self.b1))
        h = ad.relu(linear(h, self.w2, self.b2))
        return linear(h, self.w3, self.b3)
