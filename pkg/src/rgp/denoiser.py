"""Untrained-prior denoising of node embeddings.

For each input signal a fresh overparameterized graph-convolutional
generator is fitted to the observed embeddings by full-batch gradient
descent on 0.5 * ||x - f(z)||^2, and the generator output at the stopped
weights is returned as the denoised signal. Early stopping (iteration
budget plus relative-improvement plateau) is what makes the fit capture
the smooth signal before the noise.

The fixed input z stays frozen at its Gaussian init; only the generator
weights move. The returned signal is a plain constant tensor: gradients
of any downstream computation never flow back into the observed signal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numcore import Tensor, backward, gd_state, gd_step, matmul, relu, scale, sub, sum_all, mul, zero_grad


@dataclass
class DenoiserConfig:
    hidden_width: int = 256
    n_layers: int = 2
    max_iters: int = 200
    learning_rate: float = 0.01
    stop_rel_tol: float = 1e-4
    stop_patience: int = 10
    z_std: float = 0.1
    seed: int = 0


@dataclass
class DenoiseResult:
    x_denoised: Tensor
    iterations_run: int
    loss_history: list[float] = field(default_factory=list)
    stop_reason: str = "budget"  # "budget" or "plateau"


def generator_forward(z: Tensor, a_norm: Tensor, theta: list[Tensor]) -> Tensor:
    """Graph-conv generator: ReLU between layers, linear final layer."""
    h = z
    last = len(theta) - 1
    for i, w in enumerate(theta):
        h = matmul(matmul(a_norm, h), w)
        if i < last:
            h = relu(h)
    return h


def init_generator(
    rng: np.random.Generator, n_nodes: int, signal_width: int, config: DenoiserConfig
) -> tuple[Tensor, list[Tensor]]:
    """Gaussian z (fixed) and Gaussian weights (std 1/sqrt(fan_in))."""
    z = Tensor(rng.normal(0.0, config.z_std, size=(n_nodes, config.hidden_width)))
    widths = [config.hidden_width] * config.n_layers + [signal_width]
    theta = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
        theta.append(Tensor(w, requires_grad=True))
    return z, theta


def fit_denoise(x: Tensor | np.ndarray, a_norm: np.ndarray, config: DenoiserConfig) -> DenoiseResult:
    """Fit a fresh generator to one signal and return its output.

    loss_history[i] is the objective at the weights entering iteration i,
    so max_iters=1 records exactly one value. Stops early when the
    relative improvement stays below stop_rel_tol for stop_patience
    consecutive iterations.
    """
    x_data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x_data)):
        raise ValueError("denoiser input contains non-finite values")
    if config.max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {config.max_iters}")
    n, d = x_data.shape
    if config.hidden_width < d:
        raise ValueError(
            f"hidden_width {config.hidden_width} below signal width {d}; "
            "the generator must be overparameterized"
        )

    rng = np.random.default_rng(config.seed)
    z, theta = init_generator(rng, n, d, config)
    a_t = Tensor(np.asarray(a_norm, dtype=np.float64))
    x_t = Tensor(x_data)
    params = {f"w{i}": w for i, w in enumerate(theta)}
    state = gd_state(config.learning_rate)

    history: list[float] = []
    stop_reason = "budget"
    flat_streak = 0
    for _ in range(config.max_iters):
        zero_grad(theta)
        residual = sub(x_t, generator_forward(z, a_t, theta))
        loss = scale(sum_all(mul(residual, residual)), 0.5)
        history.append(loss.item())
        backward(loss)
        gd_step(params, state)
        if len(history) >= 2:
            prev, cur = history[-2], history[-1]
            rel = (prev - cur) / max(abs(prev), 1e-300)
            flat_streak = flat_streak + 1 if rel < config.stop_rel_tol else 0
            if flat_streak >= config.stop_patience:
                stop_reason = "plateau"
                break

    denoised = generator_forward(z, a_t, theta)
    return DenoiseResult(
        x_denoised=denoised.detach(),
        iterations_run=len(history),
        loss_history=history,
        stop_reason=stop_reason,
    )
