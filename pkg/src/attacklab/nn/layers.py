"""Feed-forward Q networks and the monotonic value mixer.

``MlpSpec`` describes a plain MLP (rectified-linear hidden layers, linear
output).  ``MixerSpec`` describes the monotone mixing network: per-sample
mixing weights are produced by hypernetworks of the global state and passed
through an absolute value, so the mixed team value is non-decreasing in every
per-agent utility; the final bias comes from a two-layer hypernet of the
state.  Each forward exists twice: a taped version for training and a plain
numpy version (``*_infer``) for rollouts and target computation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, absolute, bmm, elu, matmul, relu

ParamDict = dict[str, Tensor]


@dataclass(frozen=True)
class MlpSpec:
    """Layer sizes from input to output, e.g. (15, 64, 64, 5)."""

    sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        if any(s < 1 for s in self.sizes):
            raise ValueError("layer sizes must be positive")

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1


def mlp_init(spec: MlpSpec, rng: np.random.Generator, prefix: str = "") -> ParamDict:
    """Scaled-uniform fan-in init: U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    params: ParamDict = {}
    for layer in range(spec.n_layers):
        fan_in, fan_out = spec.sizes[layer], spec.sizes[layer + 1]
        bound = 1.0 / np.sqrt(fan_in)
        params[f"{prefix}w{layer}"] = Tensor(
            rng.uniform(-bound, bound, (fan_in, fan_out)), requires_grad=True)
        params[f"{prefix}b{layer}"] = Tensor(
            rng.uniform(-bound, bound, fan_out), requires_grad=True)
    return params


def mlp_forward(spec: MlpSpec, params: ParamDict, x: Tensor, prefix: str = "") -> Tensor:
    h = x
    for layer in range(spec.n_layers):
        h = matmul(h, params[f"{prefix}w{layer}"]) + params[f"{prefix}b{layer}"]
        if layer < spec.n_layers - 1:
            h = relu(h)
    return h


def mlp_infer(spec: MlpSpec, data: dict[str, np.ndarray], x: np.ndarray,
              prefix: str = "") -> np.ndarray:
    h = x
    for layer in range(spec.n_layers):
        h = h @ data[f"{prefix}w{layer}"] + data[f"{prefix}b{layer}"]
        if layer < spec.n_layers - 1:
            h = np.maximum(h, 0.0)
    return h


@dataclass(frozen=True)
class MixerSpec:
    """Monotone mixer: n_inputs per-agent utilities + global state -> one value."""

    n_inputs: int
    state_dim: int
    embed_dim: int = 32
    hyper_hidden: int = 64

    def __post_init__(self) -> None:
        if min(self.n_inputs, self.state_dim, self.embed_dim, self.hyper_hidden) < 1:
            raise ValueError("mixer dimensions must be positive")

    def hypernets(self) -> dict[str, MlpSpec]:
        s = self
        return {
            "hw1.": MlpSpec((s.state_dim, s.hyper_hidden, s.n_inputs * s.embed_dim)),
            "hb1.": MlpSpec((s.state_dim, s.embed_dim)),
            "hw2.": MlpSpec((s.state_dim, s.hyper_hidden, s.embed_dim)),
            "hv.": MlpSpec((s.state_dim, s.embed_dim, 1)),
        }


def mixer_init(spec: MixerSpec, rng: np.random.Generator, prefix: str = "") -> ParamDict:
    params: ParamDict = {}
    for sub, net in spec.hypernets().items():
        params.update(mlp_init(net, rng, prefix + sub))
    return params


def mixer_forward(spec: MixerSpec, params: ParamDict, qs: Tensor,
                  state: np.ndarray, prefix: str = "") -> Tensor:
    """Mix per-agent utilities ``qs`` (B, n_inputs) into team values (B,)."""
    batch = qs.data.shape[0]
    nets = spec.hypernets()
    s = Tensor(state)
    w1 = absolute(mlp_forward(nets["hw1."], params, s, prefix + "hw1.")) \
        .reshape(batch, spec.n_inputs, spec.embed_dim)
    b1 = mlp_forward(nets["hb1."], params, s, prefix + "hb1.") \
        .reshape(batch, 1, spec.embed_dim)
    hidden = elu(bmm(qs.reshape(batch, 1, spec.n_inputs), w1) + b1)
    w2 = absolute(mlp_forward(nets["hw2."], params, s, prefix + "hw2.")) \
        .reshape(batch, spec.embed_dim, 1)
    v = mlp_forward(nets["hv."], params, s, prefix + "hv.").reshape(batch, 1, 1)
    return (bmm(hidden, w2) + v).reshape(batch)


def mixer_infer(spec: MixerSpec, data: dict[str, np.ndarray], qs: np.ndarray,
                state: np.ndarray, prefix: str = "") -> np.ndarray:
    batch = qs.shape[0]
    nets = spec.hypernets()
    w1 = np.abs(mlp_infer(nets["hw1."], data, state, prefix + "hw1.")) \
        .reshape(batch, spec.n_inputs, spec.embed_dim)
    b1 = mlp_infer(nets["hb1."], data, state, prefix + "hb1.").reshape(batch, 1, spec.embed_dim)
    pre = qs.reshape(batch, 1, spec.n_inputs) @ w1 + b1
    hidden = np.where(pre > 0, pre, np.exp(np.minimum(pre, 0.0)) - 1.0)
    w2 = np.abs(mlp_infer(nets["hw2."], data, state, prefix + "hw2.")) \
        .reshape(batch, spec.embed_dim, 1)
    v = mlp_infer(nets["hv."], data, state, prefix + "hv.").reshape(batch, 1, 1)
    return (hidden @ w2 + v).reshape(batch)


def sum_mixer(qs: Tensor) -> Tensor:
    """The degenerate identity mixer: team value is the plain sum."""
    return qs.sum(axis=1)


def sum_mixer_infer(qs: np.ndarray) -> np.ndarray:
    return qs.sum(axis=1)
