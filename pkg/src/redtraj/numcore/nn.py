"""Small module system on top of the tensor engine."""

import numpy as np

from ..errors import ContractViolation
from . import tensor as T
from .tensor import Parameter


def xavier_uniform(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Module:
    training = True

    def named_parameters(self, prefix=""):
        for key, val in vars(self).items():
            path = f"{prefix}{key}"
            if isinstance(val, Parameter):
                yield path, val
            elif isinstance(val, Module):
                yield from val.named_parameters(path + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{path}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for val in vars(self).values():
            if isinstance(val, Module):
                yield from val.modules()
            elif isinstance(val, (list, tuple)):
                for item in val:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {k: p.data.copy() for k, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise ContractViolation(f"state mismatch: missing={missing} unexpected={extra}")
        for k, p in own.items():
            arr = np.asarray(state[k])
            if arr.shape != p.shape:
                raise ContractViolation(f"shape mismatch for {k}: {arr.shape} vs {p.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)
            p.m = np.zeros_like(p.data)
            p.v = np.zeros_like(p.data)
            p.step = 0


class Linear(Module):
    def __init__(self, d_in, d_out, rng, bias=True):
        self.weight = Parameter(xavier_uniform(rng, d_in, d_out))
        self.bias = Parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x):
        y = T.matmul(x, self.weight)
        if self.bias is not None:
            y = y + self.bias
        return y


class LayerNorm(Module):
    def __init__(self, d, eps=1e-5):
        self.gain = Parameter(np.ones(d))
        self.bias = Parameter(np.zeros(d))
        self.eps = eps

    def __call__(self, x):
        return T.layer_norm(x, self.gain, self.bias, self.eps)


class Embedding(Module):
    def __init__(self, n, d, rng, std=0.02):
        self.weight = Parameter(rng.normal(0.0, std, size=(n, d)))

    def __call__(self, idx):
        return T.take(self.weight, idx)


class Dropout(Module):
    def __init__(self, p, rng):
        self.p = p
        self.rng = rng

    def __call__(self, x):
        return T.dropout(x, self.p, self.rng, self.training)
