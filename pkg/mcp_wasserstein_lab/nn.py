"""
Feed-Forward Network Engine

A small multilayer perceptron with hand-written reverse-mode differentiation:

- forward / forward_with_cache: affine + activation layers, final layer affine
- backward: parameter and input gradients for any per-row output cotangent
- grad_params / grad_input: the two gradients the GAN losses need
- penalty_param_grad: parameter gradient of sum_b w_b (||grad_x D(x_b)|| - 1)^2,
  computed by pushing a forward tangent along v_b = d(penalty)/d(grad_x D) and
  differentiating that directional derivative in reverse (second-order terms included)
- AdamState / adam_step: bias-corrected Adam, ascend or descend
- WeightClip / RowNormalize: discriminator weight constraints

Parameters live in one flat float64 vector; layer by layer, the weight matrix
(out x in, row-major) is followed by its bias.
"""

from typing import Annotated, Literal, NamedTuple, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import expit

from mcp.server.fastmcp.utilities.logging import get_logger

from .errors import InvalidInputError, NumericError

logger = get_logger(__name__)

DEGENERATE_GRAD_NORM = 1e-12

Activation = Literal["tanh", "softplus", "leaky_relu"]
Direction = Literal["ascend", "descend"]

# --- Architecture ---


class MlpSpec(BaseModel):
    """Layer widths from input to output; every layer but the last is followed by the activation."""

    model_config = ConfigDict(frozen=True)

    layer_widths: list[int]
    activation: Activation = "tanh"
    leaky_slope: float = Field(default=0.2, ge=0.0)

    @model_validator(mode="after")
    def _check_widths(self) -> "MlpSpec":
        if len(self.layer_widths) < 3:
            raise ValueError("an MLP needs an input width, at least one hidden width and an output width")
        if any(w < 1 for w in self.layer_widths):
            raise ValueError(f"layer widths must be positive, got {self.layer_widths}")
        return self

    @classmethod
    def mlp(cls, input_dim: int, hidden: list[int], output_dim: int, activation: Activation = "tanh") -> "MlpSpec":
        return cls(layer_widths=[input_dim, *hidden, output_dim], activation=activation)

    @classmethod
    def affine(cls, input_dim: int) -> "MlpSpec":
        """
        Linear critic w.x + b written as an MLP: one identity hidden layer (leaky slope 1).
        Use `affine_params` to build parameters for a given (w, b).
        """
        return cls(layer_widths=[input_dim, input_dim, 1], activation="leaky_relu", leaky_slope=1.0)

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def output_dim(self) -> int:
        return self.layer_widths[-1]

    @property
    def num_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def num_params(self) -> int:
        return sum(o * i + o for i, o in zip(self.layer_widths[:-1], self.layer_widths[1:]))

    def layout(self) -> list[tuple[slice, tuple[int, int], slice]]:
        """(weight slice, weight shape, bias slice) per layer within the flat vector."""
        entries = []
        offset = 0
        for fan_in, fan_out in zip(self.layer_widths[:-1], self.layer_widths[1:]):
            w_end = offset + fan_out * fan_in
            entries.append((slice(offset, w_end), (fan_out, fan_in), slice(w_end, w_end + fan_out)))
            offset = w_end + fan_out
        return entries


def unpack(spec: MlpSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """(W, b) views into `params` for each layer."""
    params = np.asarray(params)
    if params.shape != (spec.num_params,):
        raise InvalidInputError(f"expected {spec.num_params} parameters, got shape {params.shape}")
    return [(params[w].reshape(shape), params[b]) for w, shape, b in spec.layout()]


def pack(spec: MlpSpec, layers: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    params = np.zeros(spec.num_params)
    for (w_slice, shape, b_slice), (W, b) in zip(spec.layout(), layers):
        params[w_slice] = np.asarray(W, dtype=np.float64).reshape(-1)
        params[b_slice] = b
    return params


def affine_params(w: np.ndarray, b: float) -> np.ndarray:
    """Parameters of `MlpSpec.affine(len(w))` computing w.x + b."""
    w = np.asarray(w, dtype=np.float64)
    d = w.shape[0]
    spec = MlpSpec.affine(d)
    return pack(spec, [(np.eye(d), np.zeros(d)), (w[None, :], np.array([b], dtype=np.float64))])


def init_params(spec: MlpSpec, generator: np.random.Generator) -> np.ndarray:
    """Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero."""
    layers = []
    for fan_in, fan_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append((generator.uniform(-bound, bound, size=(fan_out, fan_in)), np.zeros(fan_out)))
    return pack(spec, layers)


# --- Activations ---


def _activate(spec: MlpSpec, z: np.ndarray) -> np.ndarray:
    if spec.activation == "tanh":
        return np.tanh(z)
    if spec.activation == "softplus":
        return np.logaddexp(0.0, z)
    return np.where(z > 0, z, spec.leaky_slope * z)


def _activation_d1(spec: MlpSpec, z: np.ndarray) -> np.ndarray:
    if spec.activation == "tanh":
        return 1.0 - np.tanh(z) ** 2
    if spec.activation == "softplus":
        return expit(z)
    return np.where(z > 0, 1.0, spec.leaky_slope)


def _activation_d2(spec: MlpSpec, z: np.ndarray) -> np.ndarray:
    if spec.activation == "tanh":
        t = np.tanh(z)
        return -2.0 * t * (1.0 - t * t)
    if spec.activation == "softplus":
        s = expit(z)
        return s * (1.0 - s)
    # piecewise linear: zero almost everywhere
    return np.zeros_like(z)


def activation_lipschitz(spec: MlpSpec) -> float:
    """Upper bound on |sigma'| for the spec's activation."""
    if spec.activation == "leaky_relu":
        return max(1.0, spec.leaky_slope)
    return 1.0


# --- Forward and reverse passes ---


class ForwardCache(NamedTuple):
    inputs: list[np.ndarray]
    pre_activations: list[np.ndarray]
    output: np.ndarray


def _as_batch(spec: MlpSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise InvalidInputError(f"expected inputs of width {spec.input_dim}, got shape {x.shape}")
    return x


def forward_with_cache(spec: MlpSpec, params: np.ndarray, x: np.ndarray) -> ForwardCache:
    h = _as_batch(spec, x)
    inputs, pre = [], []
    layers = unpack(spec, params)
    for index, (W, b) in enumerate(layers):
        z = h @ W.T + b
        inputs.append(h)
        pre.append(z)
        h = _activate(spec, z) if index < len(layers) - 1 else z
    return ForwardCache(inputs=inputs, pre_activations=pre, output=h)


def forward(spec: MlpSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Network output: (out,) for a single point, B x out for a batch."""
    output = forward_with_cache(spec, params, x).output
    return output[0] if np.asarray(x).ndim == 1 else output


def backward(spec: MlpSpec, params: np.ndarray, cache: ForwardCache, out_grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Pull `out_grad` (B x out, the derivative of a scalar loss with respect to each
    output row) back to the flat parameters and to the inputs.
    """
    layers = unpack(spec, params)
    delta = np.asarray(out_grad, dtype=np.float64).reshape(cache.output.shape)
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(layers)
    for index in range(len(layers) - 1, -1, -1):
        W, _ = layers[index]
        grads[index] = (delta.T @ cache.inputs[index], delta.sum(axis=0))
        delta = delta @ W
        if index > 0:
            delta = delta * _activation_d1(spec, cache.pre_activations[index - 1])
    return pack(spec, grads), delta


def _check_finite(name: str, values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericError(f"{name} contains NaN or Inf")


def grad_params(spec: MlpSpec, params: np.ndarray, x: np.ndarray, out_grad: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Parameter gradient of sum_b out_grad_b * D(x_b); the default weights 1/B give the
    gradient of the batch mean of D.
    """
    cache = forward_with_cache(spec, params, x)
    _check_finite("network output", cache.output)
    if out_grad is None:
        out_grad = np.full(cache.output.shape, 1.0 / cache.output.shape[0])
    grad, _ = backward(spec, params, cache, out_grad)
    _check_finite("parameter gradient", grad)
    return grad


def grad_input(spec: MlpSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """grad_x D(x) for a scalar-output network: (d,) for one point, B x d for a batch."""
    if spec.output_dim != 1:
        raise InvalidInputError("input gradients are defined for scalar-output networks")
    cache = forward_with_cache(spec, params, x)
    _, g = backward(spec, params, cache, np.ones_like(cache.output))
    return g[0] if np.asarray(x).ndim == 1 else g


# --- Gradient penalty ---


class PenaltyGradient(NamedTuple):
    value: float
    grad: np.ndarray
    degenerate: bool


def penalty_value(spec: MlpSpec, params: np.ndarray, x: np.ndarray, weights: Optional[np.ndarray] = None) -> float:
    """sum_b w_b (||grad_x D(x_b)|| - 1)^2, default w_b = 1/B."""
    g = np.atleast_2d(grad_input(spec, params, x))
    w = np.full(g.shape[0], 1.0 / g.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    return float(w @ (np.linalg.norm(g, axis=1) - 1.0) ** 2)


def penalty_param_grad(
    spec: MlpSpec, params: np.ndarray, x: np.ndarray, weights: Optional[np.ndarray] = None
) -> PenaltyGradient:
    """
    Value and parameter gradient of the gradient penalty at the rows of `x`.

    Rows whose input gradient is shorter than 1e-12 contribute the zero subgradient of
    the norm; `degenerate` reports whether any row did.
    """
    if spec.output_dim != 1:
        raise InvalidInputError("the gradient penalty is defined for scalar-output networks")
    layers = unpack(spec, params)
    cache = forward_with_cache(spec, params, x)
    batch = cache.output.shape[0]
    _, g = backward(spec, params, cache, np.ones_like(cache.output))
    w = np.full(batch, 1.0 / batch) if weights is None else np.asarray(weights, dtype=np.float64)

    norms = np.linalg.norm(g, axis=1)
    value = float(w @ (norms - 1.0) ** 2)
    degenerate = bool(np.any(norms < DEGENERATE_GRAD_NORM))
    if degenerate:
        logger.debug(f"{int(np.sum(norms < DEGENERATE_GRAD_NORM))} penalty rows have a vanishing input gradient")
    safe = np.where(norms < DEGENERATE_GRAD_NORM, 1.0, norms)
    coef = np.where(norms < DEGENERATE_GRAD_NORM, 0.0, 2.0 * w * (norms - 1.0) / safe)
    tangent_in = coef[:, None] * g

    # forward tangent of D along tangent_in
    tangents = [tangent_in]
    dot_z = []
    for index, (W, _) in enumerate(layers):
        dz = tangents[-1] @ W.T
        dot_z.append(dz)
        if index < len(layers) - 1:
            tangents.append(_activation_d1(spec, cache.pre_activations[index]) * dz)

    # reverse pass of sum_b (tangent output)_b through primal and tangent paths
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(layers)
    bar_z = np.zeros_like(cache.output)
    bar_dz = np.ones_like(cache.output)
    for index in range(len(layers) - 1, -1, -1):
        W, _ = layers[index]
        grads[index] = (bar_z.T @ cache.inputs[index] + bar_dz.T @ tangents[index], bar_z.sum(axis=0))
        if index == 0:
            break
        bar_h = bar_z @ W
        bar_dh = bar_dz @ W
        z_prev = cache.pre_activations[index - 1]
        d1 = _activation_d1(spec, z_prev)
        bar_dz = bar_dh * d1
        bar_z = bar_h * d1 + bar_dh * _activation_d2(spec, z_prev) * dot_z[index - 1]

    grad = pack(spec, grads)
    _check_finite("penalty gradient", grad)
    return PenaltyGradient(value=value, grad=grad, degenerate=degenerate)


# --- Optimizer ---


class AdamState(BaseModel):
    """Adam hyper-parameters with first/second moment estimates and the step counter."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lr: float = Field(default=1e-4, gt=0)
    beta1: float = Field(default=0.5, ge=0, lt=1)
    beta2: float = Field(default=0.9, ge=0, lt=1)
    eps_num: float = Field(default=1e-8, gt=0)
    first_moment: np.ndarray
    second_moment: np.ndarray
    step: int = 0

    @classmethod
    def fresh(cls, num_params: int, lr: float = 1e-4, beta1: float = 0.5, beta2: float = 0.9, eps_num: float = 1e-8) -> "AdamState":
        return cls(
            lr=lr, beta1=beta1, beta2=beta2, eps_num=eps_num,
            first_moment=np.zeros(num_params), second_moment=np.zeros(num_params),
        )


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray, direction: Direction = "descend") -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new params and state, inputs are not modified."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.first_moment.shape:
        raise InvalidInputError(f"gradient shape {grad.shape} does not match optimizer state {state.first_moment.shape}")
    _check_finite("gradient", grad)
    t = state.step + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * (grad * grad)
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    update = state.lr * m_hat / (np.sqrt(v_hat) + state.eps_num)
    sign = 1.0 if direction == "ascend" else -1.0
    new_state = state.model_copy(update={"first_moment": m, "second_moment": v, "step": t})
    return params + sign * update, new_state


# --- Constraints ---


class Unconstrained(BaseModel):
    kind: Literal["none"] = "none"


class WeightClip(BaseModel):
    kind: Literal["weight_clip"] = "weight_clip"
    c: float = Field(default=0.01, gt=0)


class RowNormalize(BaseModel):
    kind: Literal["row_normalize"] = "row_normalize"


ConstraintMode = Annotated[Union[Unconstrained, WeightClip, RowNormalize], Field(discriminator="kind")]


def apply_constraint(mode: Optional[ConstraintMode], spec: MlpSpec, params: np.ndarray) -> np.ndarray:
    """Clip every entry to [-c, c], or rescale each weight row to L2 norm <= 1 (biases untouched)."""
    if mode is None or isinstance(mode, Unconstrained):
        return np.array(params, dtype=np.float64)
    if isinstance(mode, WeightClip):
        return np.clip(params, -mode.c, mode.c)
    layers = []
    for W, b in unpack(spec, params):
        row_norms = np.linalg.norm(W, axis=1, keepdims=True)
        layers.append((W / np.maximum(row_norms, 1.0), b.copy()))
    return pack(spec, layers)


def lipschitz_upper_bound(spec: MlpSpec, params: np.ndarray) -> float:
    """Product of layer spectral norms times the activation's Lipschitz constant per hidden layer."""
    bound = activation_lipschitz(spec) ** (spec.num_layers - 1)
    for W, _ in unpack(spec, params):
        bound *= float(np.linalg.norm(W, 2))
    return bound


# --- Network handle ---


class Mlp(BaseModel):
    """A spec paired with its flat parameter vector."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    spec: MlpSpec
    params: np.ndarray

    @model_validator(mode="after")
    def _check_params(self) -> "Mlp":
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (self.spec.num_params,):
            raise ValueError(f"expected {self.spec.num_params} parameters, got shape {self.params.shape}")
        return self

    @classmethod
    def initialise(cls, spec: MlpSpec, generator: np.random.Generator) -> "Mlp":
        return cls(spec=spec, params=init_params(spec, generator))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self.spec, self.params, x)

    def scale_output_layer(self, factor: float) -> "Mlp":
        """Copy with the final affine layer (weights and bias) multiplied by `factor`."""
        params = self.params.copy()
        w_slice, _, b_slice = self.spec.layout()[-1]
        params[w_slice] *= factor
        params[b_slice] *= factor
        return Mlp(spec=self.spec, params=params)
