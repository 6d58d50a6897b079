"""Sharp-image recovery by fitting a sine-activated coordinate MLP through a
frozen, differentiable blur operator.

Everything here is plain float64 numpy with hand-written backpropagation:
the blur operators expose their exact adjoints, so the whole gradient can
be checked against finite differences. Optimization is full-batch Adam
with cosine-annealed learning rate and global-norm gradient clipping.
"""
from __future__ import annotations

from dataclasses import dataclass
import json
import struct

import numpy as np

from .blur import Image, icb_apply, icb_adjoint
from .geometry import CameraIntrinsics, Trajectory
from .layering import DepthMap

__all__ = [
    "SirenNetwork",
    "FitConfig",
    "FitDivergenceError",
    "init_network",
    "siren_forward",
    "render",
    "render_array",
    "grid_coords",
    "CompositeBlurOperator",
    "PixelwiseBlurOperator",
    "IdentityOperator",
    "fit_loss",
    "loss_and_grads",
    "fit",
    "fit_operator",
    "cosine_lr",
    "save_network",
    "load_network",
]

OMEGA0_DEFAULT = 30.0


class FitDivergenceError(RuntimeError):
    """Raised when the optimization loss turns non-finite."""


@dataclass
class SirenNetwork:
    """Coordinate MLP with sine activations and a linear output layer.

    ``weights[i]`` has shape (fan_out, fan_in); hidden layers apply
    ``sin(omega0 * (W z + b))``, the last layer is affine.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    omega0: float
    seed: int

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def parameters(self) -> list[np.ndarray]:
        return list(self.weights) + list(self.biases)

    def copy(self) -> "SirenNetwork":
        return SirenNetwork([w.copy() for w in self.weights],
                            [b.copy() for b in self.biases], self.omega0, self.seed)


def init_network(out_features: int, hidden_features: int = 192,
                 hidden_layers: int = 4, omega0: float = OMEGA0_DEFAULT,
                 seed: int = 0, in_features: int = 2) -> SirenNetwork:
    """Standard sine-network initialization.

    First layer uniform in [-1/fan_in, 1/fan_in]; later layers uniform in
    [-sqrt(6/fan_in)/omega0, +sqrt(6/fan_in)/omega0]; biases uniform in
    [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    """
    rng = np.random.default_rng(seed)
    sizes = [in_features] + [hidden_features] * hidden_layers + [out_features]
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        if i == 0:
            bound = 1.0 / fan_in
        else:
            bound = np.sqrt(6.0 / fan_in) / omega0
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-1.0 / np.sqrt(fan_in), 1.0 / np.sqrt(fan_in),
                                  size=fan_out))
    return SirenNetwork(weights, biases, omega0, seed)


def _forward_trace(net: SirenNetwork, coords: np.ndarray):
    """Forward pass keeping the per-layer activations needed for backprop."""
    z = np.asarray(coords, dtype=np.float64)
    activations = [z]
    pre = []
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = z @ w.T + b
        pre.append(a)
        z = a if i == last else np.sin(net.omega0 * a)
        activations.append(z)
    return z, activations, pre


def siren_forward(net: SirenNetwork, coords) -> np.ndarray:
    """Evaluate the network at (N, 2) coordinates in [-1, 1]^2; returns (N, C)."""
    out, _, _ = _forward_trace(net, coords)
    return out


def grid_coords(width: int, height: int) -> np.ndarray:
    """Pixel-center coordinates mapped affinely so the longest axis spans [-1, 1]."""
    half = max(width, height) / 2.0
    xs = (np.arange(width, dtype=np.float64) + 0.5 - width / 2.0) / half
    ys = (np.arange(height, dtype=np.float64) + 0.5 - height / 2.0) / half
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def render_array(net: SirenNetwork, width: int, height: int) -> np.ndarray:
    """Evaluate on the pixel grid; float64 (H, W, C), unclamped."""
    out = siren_forward(net, grid_coords(width, height))
    return out.reshape(height, width, -1)


def render(net: SirenNetwork, width: int, height: int) -> Image:
    if width < 1 or height < 1:
        raise ValueError("render size must be at least 1x1")
    return Image(render_array(net, width, height).astype(np.float32))


# ---------------------------------------------------------------------------
# Frozen linear blur operators (forward + exact adjoint)
# ---------------------------------------------------------------------------

class CompositeBlurOperator:
    """Layer-compositing blur as a frozen linear operator on (H, W, C) arrays."""

    def __init__(self, kernels, mattes, padding: str = "replicate"):
        self.kernels = list(kernels)
        self.mattes = [np.asarray(m, dtype=np.float64) for m in mattes]
        self.padding = padding

    def apply(self, values: np.ndarray) -> np.ndarray:
        return icb_apply(values, self.kernels, self.mattes, self.padding)

    def adjoint(self, values: np.ndarray) -> np.ndarray:
        return icb_adjoint(values, self.kernels, self.mattes, self.padding)


class PixelwiseBlurOperator:
    """Pixel-wise blur as a frozen linear operator (per-sample gather/scatter)."""

    def __init__(self, traj: Trajectory, intr: CameraIntrinsics, depth: DepthMap):
        from .blur import _gather_indices

        self._indices = list(_gather_indices(traj, intr, depth.values))
        self._shape = depth.values.shape

    def apply(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        acc = np.zeros_like(values)
        for rows, cols in self._indices:
            acc += values[rows, cols, :]
        return acc / len(self._indices)

    def adjoint(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64) / len(self._indices)
        out = np.zeros_like(values)
        for rows, cols in self._indices:
            np.add.at(out, (rows, cols), values)
        return out


class IdentityOperator:
    """No-op blur; turns the fit into pure representation fitting."""

    def apply(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64)

    adjoint = apply


# ---------------------------------------------------------------------------
# Loss, gradients, optimization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitConfig:
    """Optimization recipe: Adam, cosine-annealed lr, clipped gradients."""

    iterations: int = 400
    learning_rate: float = 5e-4
    lr_min: float = 5e-6
    tv_weight: float = 8e-6
    grad_clip_norm: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    hidden_features: int = 192
    hidden_layers: int = 4
    omega0: float = OMEGA0_DEFAULT

    def __post_init__(self):
        positive = {"iterations": self.iterations, "learning_rate": self.learning_rate,
                    "lr_min": self.lr_min, "grad_clip_norm": self.grad_clip_norm,
                    "hidden_features": self.hidden_features,
                    "hidden_layers": self.hidden_layers, "omega0": self.omega0}
        for name, value in positive.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.tv_weight < 0:
            raise ValueError("tv_weight must be nonnegative")


def cosine_lr(step: int, total: int, lr0: float, lr_min: float) -> float:
    """Cosine annealing with lr(0) = lr0 and lr(total) = lr_min exactly."""
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + np.cos(np.pi * step / total))


def _tv_value_and_grad(rendered: np.ndarray):
    """Forward-difference total variation (anisotropic L1) and its subgradient."""
    dx = rendered[:, 1:, :] - rendered[:, :-1, :]
    dy = rendered[1:, :, :] - rendered[:-1, :, :]
    value = float(np.abs(dx).sum() + np.abs(dy).sum())
    grad = np.zeros_like(rendered)
    sx = np.sign(dx)
    sy = np.sign(dy)
    grad[:, 1:, :] += sx
    grad[:, :-1, :] -= sx
    grad[1:, :, :] += sy
    grad[:-1, :, :] -= sy
    return value, grad


def _loss_terms(net: SirenNetwork, coords, observed: np.ndarray, operator, tv_weight: float):
    h, w, c = observed.shape
    out, activations, pre = _forward_trace(net, coords)
    rendered = out.reshape(h, w, c)
    residual = operator.apply(rendered) - observed
    data = float(np.sum(residual ** 2))
    tv, tv_grad = _tv_value_and_grad(rendered)
    return data + tv_weight * tv, residual, tv_grad, activations, pre


def fit_loss(net: SirenNetwork, observed: Image, operator, tv_weight: float) -> float:
    """Blur-consistency loss: squared residual plus weighted gradient sparsity."""
    obs = observed.values.astype(np.float64)
    coords = grid_coords(observed.width, observed.height)
    loss, *_ = _loss_terms(net, coords, obs, operator, tv_weight)
    return loss


def loss_and_grads(net: SirenNetwork, coords, observed: np.ndarray, operator,
                   tv_weight: float):
    """Loss plus gradients for every weight matrix and bias vector."""
    loss, residual, tv_grad, activations, pre = _loss_terms(
        net, coords, observed, operator, tv_weight)
    g_rendered = operator.adjoint(2.0 * residual) + tv_weight * tv_grad
    g = g_rendered.reshape(-1, observed.shape[2])
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.biases)
    last = len(net.weights) - 1
    for i in range(last, -1, -1):
        if i != last:
            g = g * (net.omega0 * np.cos(net.omega0 * pre[i]))
        grads_w[i] = g.T @ activations[i]
        grads_b[i] = g.sum(axis=0)
        if i:
            g = g @ net.weights[i]
    return loss, grads_w, grads_b


def fit_operator(observed: Image, operator, config: FitConfig = FitConfig()):
    """Fit a sine network so that blur(render(net)) matches the observation.

    Returns the fitted network and the per-iteration loss trace. Raises
    :class:`FitDivergenceError` on non-finite loss.
    """
    obs = observed.values.astype(np.float64)
    net = init_network(observed.channels, config.hidden_features,
                       config.hidden_layers, config.omega0, config.seed)
    coords = grid_coords(observed.width, observed.height)
    params = net.parameters()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    trace = []
    n_w = len(net.weights)
    for step in range(config.iterations):
        loss, grads_w, grads_b = loss_and_grads(net, coords, obs, operator,
                                                config.tv_weight)
        if not np.isfinite(loss):
            raise FitDivergenceError(
                f"non-finite loss at iteration {step}: {loss}; "
                "lower the learning rate or check the operator")
        trace.append(loss)
        grads = grads_w + grads_b
        norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
        if norm > config.grad_clip_norm:
            scale = config.grad_clip_norm / norm
            grads = [g * scale for g in grads]
        lr = cosine_lr(step, config.iterations, config.learning_rate, config.lr_min)
        t = step + 1
        for k, (p, g) in enumerate(zip(params, grads)):
            m[k] = config.beta1 * m[k] + (1 - config.beta1) * g
            v[k] = config.beta2 * v[k] + (1 - config.beta2) * g * g
            m_hat = m[k] / (1 - config.beta1 ** t)
            v_hat = v[k] / (1 - config.beta2 ** t)
            p -= lr * m_hat / (np.sqrt(v_hat) + config.eps)
    return net, trace


def fit(observed: Image, decomposition, kernels, config: FitConfig = FitConfig()):
    """Deblur through the frozen compositing operator built from the scene."""
    operator = CompositeBlurOperator(kernels, decomposition.mattes)
    return fit_operator(observed, operator, config)


# ---------------------------------------------------------------------------
# Checkpoints: JSON header + flat float32 payload
# ---------------------------------------------------------------------------

_CHECKPOINT_MAGIC = b"DBNF"


def save_network(net: SirenNetwork, path_or_file) -> None:
    header = {
        "schema_version": 1,
        "layer_sizes": net.layer_sizes,
        "omega0": net.omega0,
        "seed": net.seed,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = np.concatenate(
        [p.ravel() for p in net.weights + net.biases]).astype("<f4").tobytes()

    def _write(fh):
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "wb") as fh:
            _write(fh)


def load_network(path) -> SirenNetwork:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CHECKPOINT_MAGIC:
            raise ValueError(f"not a network checkpoint: bad magic {magic!r}")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        flat = np.frombuffer(fh.read(), dtype="<f4").astype(np.float64)
    sizes = header["layer_sizes"]
    weights, biases = [], []
    offset = 0
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        weights.append(flat[offset:offset + fan_in * fan_out].reshape(fan_out, fan_in))
        offset += fan_in * fan_out
    for fan_out in sizes[1:]:
        biases.append(flat[offset:offset + fan_out].copy())
        offset += fan_out
    if offset != flat.size:
        raise ValueError("checkpoint payload size does not match header shapes")
    return SirenNetwork(weights, biases, float(header["omega0"]), int(header["seed"]))
