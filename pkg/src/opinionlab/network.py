"""Feedforward approximator of latent opinion trajectories.

The network maps ``[t, one-hot(user), profile-vector]`` to a scalar in
(-1, 1) through L hidden tanh layers plus a tanh output layer.  Besides the
plain forward pass it exposes an exact derivative of the output with
respect to the time input, computed by propagating a tangent through the
same graph so that the derivative itself stays differentiable with respect
to the weights.
"""

from __future__ import annotations

import json

import numpy as np

from .autodiff import Tensor, as_tensor, concat


class FnnParams:
    """Weights and biases of the tanh MLP, kept as autodiff leaves."""

    def __init__(self, weights, biases):
        if len(weights) != len(biases):
            raise ValueError("mismatched weight/bias lists")
        self.weights = [w if isinstance(w, Tensor) else Tensor(w, requires_grad=True) for w in weights]
        self.biases = [b if isinstance(b, Tensor) else Tensor(b, requires_grad=True) for b in biases]
        for w, b in zip(self.weights, self.biases):
            if w.shape[1] != b.shape[0]:
                raise ValueError(f"bias shape {b.shape} does not match weight {w.shape}")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    def parameters(self) -> list[Tensor]:
        return self.weights + self.biases

    def copy(self) -> "FnnParams":
        return FnnParams([w.data.copy() for w in self.weights], [b.data.copy() for b in self.biases])


def init_params(num_hidden_layers: int, width: int, input_dim: int, seed: int) -> FnnParams:
    """Glorot-uniform weights, zero biases, scalar output."""
    if num_hidden_layers < 1:
        raise ValueError("need at least one hidden layer")
    rng = np.random.default_rng(seed)
    dims = [input_dim] + [width] * num_hidden_layers + [1]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return FnnParams(weights, biases)


def build_inputs(t, user_onehot, profile_vec, time_scale: float = 1.0):
    """Assemble the (batch, D) input matrix [t * time_scale, e_u, h_u].

    `t` may be a scalar or a length-B vector; `user_onehot` and
    `profile_vec` may be 1-D (single example) or 2-D (batch).  Returns a
    Tensor when `profile_vec` is one (so encoder gradients flow), else an
    ndarray wrapped lazily by the forward pass.
    """
    onehot = np.atleast_2d(np.asarray(user_onehot, dtype=float))
    batch = onehot.shape[0]
    t_col = np.broadcast_to(np.asarray(t, dtype=float).reshape(-1, 1), (batch, 1)) * time_scale
    if isinstance(profile_vec, Tensor):
        prof = profile_vec.reshape(batch, -1)
        return concat([t_col, onehot, prof], axis=1)
    prof = np.atleast_2d(np.asarray(profile_vec, dtype=float))
    return np.concatenate([t_col, onehot, prof], axis=1)


def forward_inputs(params: FnnParams, inputs):
    """Run the MLP on a prebuilt (batch, D) input matrix; returns (batch,) Tensor."""
    a = as_tensor(inputs)
    if not np.all(np.isfinite(a.data)):
        raise ValueError("non-finite network input")
    for w, b in zip(params.weights, params.biases):
        a = (a @ w + b).tanh()
    return a.reshape(-1)


def forward(params: FnnParams, t, user_onehot, profile_vec, time_scale: float = 1.0):
    """Latent opinion for one (t, user, profile) triple or a batch of them."""
    return forward_inputs(params, build_inputs(t, user_onehot, profile_vec, time_scale))


def forward_with_time_derivative(params: FnnParams, inputs, time_scale: float = 1.0):
    """Network output and its exact partial derivative in the time input.

    The tangent of the input with respect to raw time is `time_scale` in
    column 0 and zero elsewhere; it is pushed through every layer alongside
    the value, so both returned Tensors are differentiable in the weights.
    """
    a = as_tensor(inputs)
    if not np.all(np.isfinite(a.data)):
        raise ValueError("non-finite network input")
    tang = np.zeros(a.shape)
    tang[:, 0] = time_scale
    da = Tensor(tang)
    for w, b in zip(params.weights, params.biases):
        a = (a @ w + b).tanh()
        da = (1.0 - a * a) * (da @ w)
    return a.reshape(-1), da.reshape(-1)


def value_and_time_derivative(params: FnnParams, t, user_onehot, profile_vec, time_scale: float = 1.0):
    """(x_hat, dx_hat/dt) for a single example or batch, as Tensors."""
    inputs = build_inputs(t, user_onehot, profile_vec, time_scale)
    return forward_with_time_derivative(params, inputs, time_scale)


# ----- checkpoint IO ---------------------------------------------------------


def params_to_dict(params: FnnParams) -> dict:
    return {
        "weights": [w.data.tolist() for w in params.weights],
        "biases": [b.data.tolist() for b in params.biases],
    }


def params_from_dict(doc: dict) -> FnnParams:
    return FnnParams([np.asarray(w) for w in doc["weights"]], [np.asarray(b) for b in doc["biases"]])


def save_params(params: FnnParams, path, config: dict | None = None):
    doc = params_to_dict(params)
    if config is not None:
        doc["config"] = config
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_params(path) -> FnnParams:
    with open(path, encoding="utf-8") as fh:
        return params_from_dict(json.load(fh))
