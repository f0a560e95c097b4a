"""Gradient-descent optimizers.

Both optimizers expose their internal state as named arrays so a training
checkpoint can persist and restore them exactly (bit-identical resume).
`lr` is a plain attribute; schedules assign it between steps.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class Optimizer:
    def __init__(self, params, lr: float):
        if lr < 0:
            raise ValueError(f"lr must be nonnegative, got {lr}")
        self.params: list[Tensor] = list(params)
        if not self.params:
            raise ValueError("optimizer needs at least one parameter")
        self.lr = float(lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        raise NotImplementedError

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {}

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        expected = set(self.state_arrays())
        if set(state) != expected:
            raise ValueError(f"optimizer state keys {sorted(state)} != expected {sorted(expected)}")


class SGD(Optimizer):
    def __init__(self, params, lr: float, momentum: float = 0.0, weight_decay: float = 0.0):
        super().__init__(params, lr)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self.velocity = [np.zeros_like(p.data) for p in self.params] if momentum else None

    def step(self) -> None:
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            if self.velocity is not None:
                v = self.velocity[i]
                v *= self.momentum
                v += g
                g = v
            p.data -= self.lr * g

    def state_arrays(self) -> dict[str, np.ndarray]:
        if self.velocity is None:
            return {}
        return {f"velocity.{i}": v for i, v in enumerate(self.velocity)}

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        super().load_state_arrays(state)
        if self.velocity is not None:
            for i in range(len(self.velocity)):
                self.velocity[i][:] = state[f"velocity.{i}"]


class Adam(Optimizer):
    def __init__(
        self,
        params,
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        super().__init__(params, lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            m, v = self.m[i], self.v[i]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p.data -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"t": np.asarray(self.t)}
        out.update({f"m.{i}": m for i, m in enumerate(self.m)})
        out.update({f"v.{i}": v for i, v in enumerate(self.v)})
        return out

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        super().load_state_arrays(state)
        self.t = int(state["t"])
        for i in range(len(self.m)):
            self.m[i][:] = state[f"m.{i}"]
            self.v[i][:] = state[f"v.{i}"]
