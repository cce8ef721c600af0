"""Mode-probability gates.

Two parameterizations share one training interface: a feed-forward tanh
network over the plain regressor x, and a linear map over the extended
regressor [x 1].  Both produce S logits whose last entry is pinned to 0
(null anchor) so the softmax parameterization is identifiable, and both are
trained on soft labels with mini-batch Adam.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Initial output-layer scale cap: keeps the untrained gate's mode prior
# informative but still overridable by the data term in the first E-steps.
# A fully saturated initial gate (log-odds of order +-30) makes the
# posterior echo the prior and freezes training.
OUTPUT_INIT_STD = 2.0

# Tolerated full-dataset loss increase before the safeguard kicks in.
LOSS_SLACK = 1e-6


class GateTrainingError(RuntimeError):
    """Gate training was handed a non-finite loss (corrupted inputs)."""


@dataclass(frozen=True)
class AdamConfig:
    """Adam settings for one M-step of gate training."""

    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs_per_m_step: int = 3
    batch_size: int = 100
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs_per_m_step < 0:
            raise ValueError("invalid epoch or batch configuration")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    logits = np.atleast_2d(logits)
    z = np.exp(logits - logits.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.atleast_2d(logits)
    m = logits.max(axis=1, keepdims=True)
    return logits - m - np.log(np.exp(logits - m).sum(axis=1, keepdims=True))


class GateNetwork:
    """Feed-forward gate: tanh hidden layers, linear output of S-1 logits.

    ``weights[l]`` has shape (sizes[l], sizes[l+1]); biases start at zero.
    The S-th logit is implicitly 0.
    """

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise ValueError("weights and biases must pair up")
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        for w, b in zip(self.weights, self.biases):
            if w.shape[1] != b.shape[0]:
                raise ValueError("bias length does not match layer width")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError("gate parameters must be finite")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_modes(self) -> int:
        return self.weights[-1].shape[1] + 1

    def copy(self) -> "GateNetwork":
        return GateNetwork(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases]
        )

    def parameters(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def _hidden(self, X: np.ndarray) -> list[np.ndarray]:
        acts = [X]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            acts.append(np.tanh(acts[-1] @ w + b))
        return acts

    def logits(self, x: np.ndarray) -> np.ndarray:
        """Logits for one regressor (r-1,) or a batch (N, r-1); the anchored
        zero logit is appended, so the result has S columns."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        if X.shape[1] != self.n_inputs:
            raise ValueError(
                f"gate expects {self.n_inputs} inputs, got {X.shape[1]}"
            )
        h = self._hidden(X)[-1]
        part = h @ self.weights[-1] + self.biases[-1]
        out = np.hstack([part, np.zeros((len(X), 1))])
        return out[0] if single else out

    def loss_and_grads(
        self, X: np.ndarray, resp: np.ndarray
    ) -> tuple[float, list[np.ndarray]]:
        """Mean soft-label cross-entropy over the batch and its gradients,
        ordered like :meth:`parameters`."""
        acts = self._hidden(X)
        part = acts[-1] @ self.weights[-1] + self.biases[-1]
        logits = np.hstack([part, np.zeros((len(X), 1))])
        logp = log_softmax(logits)
        loss = float(-(resp * logp).sum() / len(X))
        dlogit = (np.exp(logp) - resp)[:, :-1] / len(X)
        grads_w: list[np.ndarray] = [None] * len(self.weights)
        grads_b: list[np.ndarray] = [None] * len(self.biases)
        delta = dlogit
        for layer in range(len(self.weights) - 1, -1, -1):
            grads_w[layer] = acts[layer].T @ delta
            grads_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (1 - acts[layer] ** 2)
        return loss, grads_w + grads_b


class LinearGate:
    """Linear gate: logits are coef @ [x 1], one row per non-anchor mode."""

    def __init__(self, coef: np.ndarray):
        self.coef = np.asarray(coef, dtype=float)
        if self.coef.ndim != 2:
            raise ValueError("coef must be an (S-1) x r matrix")
        if not np.isfinite(self.coef).all():
            raise ValueError("gate parameters must be finite")

    @property
    def n_inputs(self) -> int:
        return self.coef.shape[1] - 1

    @property
    def n_modes(self) -> int:
        return self.coef.shape[0] + 1

    def copy(self) -> "LinearGate":
        return LinearGate(self.coef.copy())

    def parameters(self) -> list[np.ndarray]:
        return [self.coef]

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        if X.shape[1] != self.n_inputs:
            raise ValueError(
                f"gate expects {self.n_inputs} inputs, got {X.shape[1]}"
            )
        phi = np.hstack([X, np.ones((len(X), 1))])
        out = np.hstack([phi @ self.coef.T, np.zeros((len(X), 1))])
        return out[0] if single else out

    def loss_and_grads(
        self, X: np.ndarray, resp: np.ndarray
    ) -> tuple[float, list[np.ndarray]]:
        phi = np.hstack([X, np.ones((len(X), 1))])
        logits = np.hstack([phi @ self.coef.T, np.zeros((len(X), 1))])
        logp = log_softmax(logits)
        loss = float(-(resp * logp).sum() / len(X))
        dlogit = (np.exp(logp) - resp)[:, :-1] / len(X)
        return loss, [dlogit.T @ phi]


def probabilities(gate, x: np.ndarray) -> np.ndarray:
    """Mode probabilities: stable softmax over the anchored logits."""
    logits = gate.logits(x)
    out = softmax(logits)
    return out[0] if logits.ndim == 1 else out


def soft_label_loss(gate, X: np.ndarray, resp: np.ndarray) -> float:
    """Full-dataset soft-label cross-entropy -sum_k sum_s resp log g (a sum,
    not a mean, so values are comparable across calls)."""
    logp = log_softmax(gate.logits(X))
    return float(-(resp * logp).sum())


def init_gate(
    layer_sizes: list[int],
    init_std: float,
    rng_seed,
    output_std: float | None = None,
) -> GateNetwork:
    """Create a gate network with normal random weights and zero biases.

    ``layer_sizes`` is [n_inputs, hidden..., S-1].  Hidden weights are drawn
    from N(0, init_std^2); the output layer from N(0, output_std^2), which
    defaults to min(init_std, OUTPUT_INIT_STD).
    """
    if not init_std > 0:
        raise ValueError("init_std must be positive")
    if len(layer_sizes) < 2:
        raise ValueError("need at least input and output sizes")
    if output_std is None:
        output_std = min(init_std, OUTPUT_INIT_STD)
    rng = (
        rng_seed
        if isinstance(rng_seed, np.random.Generator)
        else np.random.default_rng(rng_seed)
    )
    weights, biases = [], []
    for layer in range(len(layer_sizes) - 1):
        std = output_std if layer == len(layer_sizes) - 2 else init_std
        weights.append(
            rng.normal(0.0, std, size=(layer_sizes[layer], layer_sizes[layer + 1]))
        )
        biases.append(np.zeros(layer_sizes[layer + 1]))
    return GateNetwork(weights, biases)


def init_linear_gate(
    n_modes: int, n_coefs: int, init_std: float, rng_seed
) -> LinearGate:
    """Random linear gate: (S-1) x r coefficients from N(0, std^2) with the
    same softened scale used for network output layers."""
    if not init_std > 0:
        raise ValueError("init_std must be positive")
    rng = (
        rng_seed
        if isinstance(rng_seed, np.random.Generator)
        else np.random.default_rng(rng_seed)
    )
    std = min(init_std, OUTPUT_INIT_STD)
    return LinearGate(rng.normal(0.0, std, size=(n_modes - 1, n_coefs)))


def _adam_epochs(gate, X, resp, adam: AdamConfig, lr: float, rng) -> None:
    params = gate.parameters()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    t = 0
    n = len(X)
    for _ in range(adam.epochs_per_m_step):
        order = rng.permutation(n)
        for start in range(0, n, adam.batch_size):
            idx = order[start : start + adam.batch_size]
            _, grads = gate.loss_and_grads(X[idx], resp[idx])
            t += 1
            for p, g, m_i, v_i in zip(params, grads, m, v):
                m_i *= adam.beta1
                m_i += (1 - adam.beta1) * g
                v_i *= adam.beta2
                v_i += (1 - adam.beta2) * g * g
                mhat = m_i / (1 - adam.beta1**t)
                vhat = v_i / (1 - adam.beta2**t)
                p -= lr * mhat / (np.sqrt(vhat) + adam.epsilon)


def train_soft_labels(
    gate, X: np.ndarray, resp: np.ndarray, adam: AdamConfig, rng=None
):
    """Train the gate in place on soft labels; returns (gate, final loss).

    Runs ``epochs_per_m_step`` epochs of mini-batch Adam on the soft-label
    cross-entropy (computed from logits via log-sum-exp).  If the
    full-dataset loss afterwards exceeds its starting value by more than
    LOSS_SLACK, the epochs are re-run once from the saved parameters at
    half the learning rate; if still worse, the starting parameters are
    restored.  This keeps every M-step non-increasing in gate loss, which
    the EM driver relies on for monotonicity.
    """
    X = np.asarray(X, dtype=float)
    resp = np.asarray(resp, dtype=float)
    if rng is None:
        rng = np.random.default_rng(adam.shuffle_seed)
    pre = soft_label_loss(gate, X, resp)
    if not np.isfinite(pre):
        raise GateTrainingError("gate loss is non-finite before training")
    if adam.epochs_per_m_step == 0:
        return gate, pre

    saved = [p.copy() for p in gate.parameters()]
    rng_state = rng.bit_generator.state

    def restore():
        for p, s in zip(gate.parameters(), saved):
            p[...] = s

    _adam_epochs(gate, X, resp, adam, adam.learning_rate, rng)
    post = soft_label_loss(gate, X, resp)
    if np.isfinite(post) and post <= pre + LOSS_SLACK:
        return gate, post

    restore()
    rng.bit_generator.state = rng_state
    _adam_epochs(gate, X, resp, adam, adam.learning_rate / 2.0, rng)
    post = soft_label_loss(gate, X, resp)
    if np.isfinite(post) and post <= pre + LOSS_SLACK:
        return gate, post

    restore()
    return gate, pre
