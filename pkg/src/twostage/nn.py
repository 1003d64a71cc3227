"""Dense tanh networks with hand-written backprop, a diagonal Gaussian head,
and an Adam optimizer. Everything is float64 numpy.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

CHECKPOINT_MAGIC = b"TWOSTAGE-CKPT\n"
CHECKPOINT_VERSION = 1


class ContractViolation(ValueError):
    """An operation was called with arguments that break its contract."""


class NumericError(FloatingPointError):
    """A non-finite value reached a place where it must not."""


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple[int, ...]
    hidden_activation: str = "tanh"
    output_activation: str = "linear"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ContractViolation(f"invalid layer sizes {sizes}")
        if self.hidden_activation != "tanh" or self.output_activation != "linear":
            raise ContractViolation("only tanh hidden / linear output supported")


@dataclass
class MlpParams:
    spec: MlpSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    @classmethod
    def from_arrays(cls, spec: MlpSpec, arrays: Sequence[np.ndarray]) -> "MlpParams":
        arrays = list(arrays)
        return cls(spec, arrays[0::2], arrays[1::2])


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def mlp_init(spec: MlpSpec, seed: int | np.random.Generator,
             hidden_gain: float = math.sqrt(2.0), output_gain: float = 0.01) -> MlpParams:
    """Orthogonal weights (gain sqrt(2) hidden, 0.01 output) and zero biases."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    sizes = spec.layer_sizes
    n_layers = len(sizes) - 1
    weights, biases = [], []
    for i in range(n_layers):
        gain = output_gain if i == n_layers - 1 else hidden_gain
        weights.append(_orthogonal(rng, sizes[i + 1], sizes[i], gain))
        biases.append(np.zeros(sizes[i + 1]))
    return MlpParams(spec, weights, biases)


def _check_input(params: MlpParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != params.spec.layer_sizes[0]:
        raise ContractViolation(
            f"input shape {x.shape} does not match input size {params.spec.layer_sizes[0]}")
    return x


def _forward_trace(params: MlpParams, x: np.ndarray) -> list[np.ndarray]:
    # activations[i] is the input to layer i; the last entry is the output
    activations = [x]
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        h = z if i == last else np.tanh(z)
        activations.append(h)
    return activations


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    """Evaluate the network on one input vector or a batch of row vectors."""
    return _forward_trace(params, _check_input(params, x))[-1]


def mlp_backward(params: MlpParams, x, output_gradient, return_input_grad: bool = False):
    """Gradient of ``sum(output * output_gradient)`` w.r.t. every parameter.

    For a batch input the per-sample gradients are summed. Returns a
    ``MlpParams`` holding the gradients (and the input gradient when asked).
    """
    x = _check_input(params, x)
    g = np.asarray(output_gradient, dtype=np.float64)
    return _backward(params, x, g, None, return_input_grad)


def _backward(params: MlpParams, x: np.ndarray, g: np.ndarray, acts, return_input_grad=False):
    """Backprop core; ``acts`` may carry a forward trace to skip recomputation."""
    out_size = params.spec.layer_sizes[-1]
    if g.shape[-1] != out_size or g.ndim != x.ndim or (x.ndim == 2 and g.shape[0] != x.shape[0]):
        raise ContractViolation(f"output gradient shape {g.shape} does not match output")
    batched = x.ndim == 2
    if acts is None:
        acts = _forward_trace(params, x)
    n = len(params.weights)
    gw: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    delta = g
    for i in range(n - 1, -1, -1):
        if i != n - 1:
            delta = delta * (1.0 - acts[i + 1] ** 2)
        h_in = acts[i]
        if batched:
            gw[i] = delta.T @ h_in
            gb[i] = delta.sum(axis=0)
        else:
            gw[i] = np.outer(delta, h_in)
            gb[i] = delta.copy()
        delta = delta @ params.weights[i]
    grads = MlpParams(params.spec, gw, gb)
    if return_input_grad:
        return grads, delta
    return grads


@dataclass
class GaussianPolicy:
    mean_net: MlpParams
    log_std: np.ndarray

    def __post_init__(self):
        self.log_std = np.clip(np.asarray(self.log_std, dtype=np.float64), LOG_STD_MIN, LOG_STD_MAX)
        if self.log_std.shape != (self.mean_net.spec.layer_sizes[-1],):
            raise ContractViolation("log_std length must equal the action dimension")

    @property
    def action_dim(self) -> int:
        return self.log_std.shape[0]

    def clamp_log_std(self) -> None:
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)

    def copy(self) -> "GaussianPolicy":
        return GaussianPolicy(self.mean_net.copy(), self.log_std.copy())


def diag_gaussian_log_prob(mean: np.ndarray, log_std: np.ndarray, action: np.ndarray) -> np.ndarray:
    """Log density of a diagonal Gaussian, summed over the last axis."""
    z = (action - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - HALF_LOG_2PI, axis=-1)


def gaussian_log_prob(policy: GaussianPolicy, observation, action) -> float | np.ndarray:
    action = np.asarray(action, dtype=np.float64)
    if action.shape[-1] != policy.action_dim:
        raise ContractViolation("action dimension does not match log_std")
    mean = mlp_forward(policy.mean_net, observation)
    return diag_gaussian_log_prob(mean, policy.log_std, action)


def gaussian_sample(policy: GaussianPolicy, observation, rng: np.random.Generator,
                    deterministic: bool = False) -> np.ndarray:
    """Draw ``mean + std * z``; ``deterministic`` returns the mean exactly."""
    mean = mlp_forward(policy.mean_net, observation)
    if deterministic:
        return mean
    return mean + np.exp(policy.log_std) * rng.standard_normal(mean.shape)


def gaussian_entropy(log_std: np.ndarray) -> float:
    return float(np.sum(log_std + 0.5 + HALF_LOG_2PI))


@dataclass
class OptimizerState:
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **hyper) -> "OptimizerState":
        return cls(first_moment=[np.zeros_like(p) for p in params],
                   second_moment=[np.zeros_like(p) for p in params], **hyper)


def optimizer_step(params: Sequence[np.ndarray], gradients: Sequence[np.ndarray],
                   state: OptimizerState) -> tuple[list[np.ndarray], OptimizerState]:
    """Bias-corrected Adam update. Returns new parameter arrays and a new state.

    Raises NumericError, leaving everything untouched, if any gradient entry
    is not finite.
    """
    if len(params) != len(gradients) or len(params) != len(state.first_moment):
        raise ContractViolation("parameter, gradient and moment lists differ in length")
    for p, g, m in zip(params, gradients, state.first_moment):
        if p.shape != g.shape or p.shape != m.shape:
            raise ContractViolation(f"shape mismatch {p.shape} / {g.shape} / {m.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, gradients, state.first_moment, state.second_moment):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        step = state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
        new_params.append(p - step)
        new_m.append(m)
        new_v.append(v)
    new_state = OptimizerState(state.learning_rate, b1, b2, state.epsilon, t, new_m, new_v)
    return new_params, new_state


# --- checkpoint files -------------------------------------------------------
#
# Layout: magic line, 8-byte little-endian header length, UTF-8 JSON header,
# then every array as raw little-endian float64 in header order. The header
# lists each array's name and shape plus arbitrary metadata. No timestamps,
# so identical parameters always produce identical bytes.

def save_arrays(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries = [{"name": k, "shape": list(np.shape(v))} for k, v in arrays.items()]
    header = json.dumps({"version": CHECKPOINT_VERSION, "arrays": entries, "meta": meta or {}},
                        sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for v in arrays.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: not a checkpoint file")
    off = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack_from("<Q", data, off)
    off += 8
    header = json.loads(data[off:off + hlen])
    off += hlen
    if header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape)
        arrays[entry["name"]] = arr.astype(np.float64)
        off += 8 * count
    if off != len(data):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return arrays, header["meta"]


def mlp_to_arrays(prefix: str, params: MlpParams) -> dict[str, np.ndarray]:
    out = {}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        out[f"{prefix}.W{i}"] = w
        out[f"{prefix}.b{i}"] = b
    return out


def mlp_from_arrays(prefix: str, spec: MlpSpec, arrays: dict[str, np.ndarray]) -> MlpParams:
    n = len(spec.layer_sizes) - 1
    return MlpParams(spec, [arrays[f"{prefix}.W{i}"] for i in range(n)],
                     [arrays[f"{prefix}.b{i}"] for i in range(n)])


def save_params(path, params: MlpParams) -> None:
    save_arrays(path, mlp_to_arrays("net", params), {"layer_sizes": list(params.spec.layer_sizes)})


def load_params(path) -> MlpParams:
    arrays, meta = load_arrays(path)
    return mlp_from_arrays("net", MlpSpec(tuple(meta["layer_sizes"])), arrays)
