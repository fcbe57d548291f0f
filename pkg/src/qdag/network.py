"""A small fully-connected Q-network with hand-written gradients.

The state is a flattened 0/1 adjacency (length p*p); the output head has one
value per flat action index (length 3*p*p). Hidden layers use rectified
linear activations. Gradients of the selected-action squared error are
computed analytically; tests cross-check them against central finite
differences.
"""

from __future__ import annotations

import numpy as np

__all__ = ["QNetwork", "AdamOptimizer", "polyak_update"]


class QNetwork:
    """Multilayer perceptron mapping flattened adjacencies to action values.

    Parameters are held as a flat list [W1, b1, W2, b2, ...]; hidden weights
    use He-normal initialization, the linear output layer a smaller scale.
    """

    def __init__(self, input_dim: int, hidden_widths, output_dim: int, rng: np.random.Generator):
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.hidden_widths = tuple(int(w) for w in hidden_widths)
        dims = [input_dim, *self.hidden_widths, output_dim]
        self.params: list[np.ndarray] = []
        for li, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            last = li == len(dims) - 2
            scale = (1.0 / np.sqrt(a)) if last else np.sqrt(2.0 / a)
            self.params.append(rng.standard_normal((a, b)) * scale)
            self.params.append(np.zeros(b))

    def copy(self) -> "QNetwork":
        dup = object.__new__(QNetwork)
        dup.input_dim = self.input_dim
        dup.output_dim = self.output_dim
        dup.hidden_widths = self.hidden_widths
        dup.params = [w.copy() for w in self.params]
        return dup

    def _forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        acts = [x]
        h = x
        n_layers = len(self.params) // 2
        for layer in range(n_layers):
            w, b = self.params[2 * layer], self.params[2 * layer + 1]
            z = h @ w + b
            h = z if layer == n_layers - 1 else np.maximum(z, 0.0)
            acts.append(h)
        return h, acts

    def forward(self, x) -> np.ndarray:
        """Q-values for a batch of flattened states, shape (b, output_dim)."""
        x = np.asarray(x, dtype=np.float64)
        q, _ = self._forward(x)
        return q

    def loss_and_grads(self, states, actions, targets):
        """Mean squared error on selected action values, with its gradient.

        loss = mean_i (Q(s_i)[a_i] - y_i)^2. Returns (loss, grads) with
        grads shaped like ``self.params``.
        """
        x = np.asarray(states, dtype=np.float64)
        a = np.asarray(actions, dtype=np.int64)
        y = np.asarray(targets, dtype=np.float64)
        b = x.shape[0]
        q, acts = self._forward(x)
        sel = q[np.arange(b), a]
        err = sel - y
        loss = float(err @ err) / b

        dq = np.zeros_like(q)
        dq[np.arange(b), a] = 2.0 * err / b
        grads: list[np.ndarray] = [np.empty(0)] * len(self.params)
        delta = dq
        n_layers = len(self.params) // 2
        for layer in range(n_layers - 1, -1, -1):
            h_in = acts[layer]
            grads[2 * layer] = h_in.T @ delta
            grads[2 * layer + 1] = delta.sum(axis=0)
            if layer > 0:
                delta = delta @ self.params[2 * layer].T
                delta = delta * (acts[layer] > 0.0)
        return loss, grads


class AdamOptimizer:
    """Adaptive moment gradient descent (decay 0.9 / 0.999, bias-corrected)."""

    def __init__(self, params: list[np.ndarray], learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(w) for w in params]
        self.v = [np.zeros_like(w) for w in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for w, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            w -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def polyak_update(target_params: list[np.ndarray], online_params: list[np.ndarray],
                  tau: float) -> list[np.ndarray]:
    """In-place target <- (1 - tau) * target + tau * online, elementwise."""
    for t, o in zip(target_params, online_params):
        t *= 1.0 - tau
        t += tau * o
    return target_params
