import numpy as np

from ..errors import ValidationError


class AdamW:
    """Adam with decoupled weight decay and bias-corrected moments."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        if lr <= 0:
            raise ValidationError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        b1, b2 = self.betas
        for p in self.params:
            if p.grad is None:
                continue
            g = p.grad
            p.step += 1
            p.m = b1 * p.m + (1 - b1) * g
            p.v = b2 * p.v + (1 - b2) * g * g
            m_hat = p.m / (1 - b1**p.step)
            v_hat = p.v / (1 - b2**p.step)
            p.data = p.data - self.lr * (m_hat / (np.sqrt(v_hat) + self.eps)) - self.lr * self.weight_decay * p.data


def adamw_step(params, lr, betas=(0.9, 0.999), weight_decay=0.01, eps=1e-8):
    AdamW(params, lr=lr, betas=betas, eps=eps, weight_decay=weight_decay).step()
