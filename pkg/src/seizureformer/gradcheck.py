"""Finite-difference verification of every differentiable operation and of the
full forward-plus-loss composition at small dimensions.

Each check wraps an operation into a scalar-valued function of one tensor and
compares the analytic gradient against central differences.  The model check
runs one closure per parameter so a failure names the offending weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .model import ModelConfig, SeizureFormer, weighted_bce
from .tensor import Tensor, grad_check

DEFAULT_THRESHOLD = 1e-4
DEFAULT_EPSILON = 1e-5


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.threshold


def _op_checks(rng: np.random.Generator) -> list[tuple[str, object, Tensor]]:
    a53 = Tensor(rng.standard_normal((5, 3)))
    b34 = Tensor(rng.standard_normal((3, 4)))
    vec = Tensor(rng.standard_normal(9))
    grid = Tensor(rng.standard_normal((2, 7, 4)))
    w1d = Tensor(rng.standard_normal((3, 5)))
    bias = Tensor(rng.standard_normal(3))
    k2d = Tensor(rng.standard_normal((3, 3)))
    rows = Tensor(rng.standard_normal((4, 6)))
    pieces = Tensor(rng.standard_normal((2, 3)))
    positive = Tensor(rng.random(7) + 0.5)
    gather_idx = np.array([[0, 1, 2], [3, 4, 5], [2, 3, 4]])
    mix = Tensor(rng.standard_normal((5, 3)))

    return [
        ("add_broadcast", lambda t: T.tsum((t + Tensor(np.ones((1, 3)))) * 2.0), a53),
        ("sub", lambda t: T.tsum(t - Tensor(np.full((5, 3), 0.25))), a53),
        ("mul_broadcast", lambda t: T.tsum(T.mul(t, Tensor(np.arange(1.0, 4.0)))), a53),
        ("neg", lambda t: T.tsum(-t), a53),
        ("matmul_left", lambda t: T.tsum(T.matmul(t, b34)), a53),
        ("matmul_right", lambda t: T.tsum(T.matmul(a53, t)), b34),
        ("transpose_last2", lambda t: T.tsum(T.matmul(T.transpose_last2(t), t)), a53),
        ("reshape", lambda t: T.tsum(T.power(T.reshape(t, (3, 3)), 2.0)), vec),
        ("concat", lambda t: T.tsum(T.concat([t, T.mul(t, t)], axis=1)), pieces),
        ("take_last", lambda t: T.tsum(T.power(T.take_last(t, gather_idx), 2.0)), rows),
        ("sum_axis", lambda t: T.tsum(T.power(T.tsum(t, axes=0), 2.0)), a53),
        ("mean_axes", lambda t: T.tsum(T.power(T.mean(t, axes=(0, 1), keepdims=True), 2.0)), a53),
        ("softmax", lambda t: T.tsum(T.mul(T.softmax(t), mix)), a53),
        ("sigmoid", lambda t: T.tsum(T.sigmoid(t)), vec),
        ("relu", lambda t: T.tsum(T.relu(t)), vec),
        ("log", lambda t: T.tsum(T.log(t)), positive),
        ("exp", lambda t: T.tsum(T.exp(t)), vec),
        ("power", lambda t: T.tsum(T.power(t, 3.0)), positive),
        ("clip_interior", lambda t: T.tsum(T.clip(t, -50.0, 50.0)), vec),
        ("dropout_eval", lambda t: T.tsum(T.dropout(t, 0.5, training=False)), vec),
        ("conv1d_valid", lambda t: T.tsum(T.conv1d(t, w1d, bias, padding="valid")), rows),
        ("conv1d_same", lambda t: T.tsum(T.conv1d(t, w1d, bias, padding="same")), rows),
        ("conv1d_weight", lambda t: T.tsum(T.conv1d(rows, t, bias, padding="same")), w1d),
        ("conv2d_input", lambda t: T.tsum(T.conv2d(t, k2d)), grid),
        ("conv2d_kernel", lambda t: T.tsum(T.conv2d(grid, t)), k2d),
    ]


def small_model_config() -> ModelConfig:
    return ModelConfig(
        lookback=16,
        channels=2,
        patch_length=4,
        stride=2,
        kernel_sizes=(3, 5),
        embed_features=3,
        embed_dim=8,
        heads=2,
        encoder_layers=1,
        ffn_dim=16,
        dropout_rate=0.2,
    )


def _model_checks(rng: np.random.Generator) -> list[tuple[str, object, Tensor]]:
    cfg = small_model_config()
    model = SeizureFormer(cfg, rng)
    x = rng.standard_normal((2, cfg.channels, cfg.lookback))
    y = np.array([0.0, 1.0])
    pos_weight = 2.0

    checks = []
    for name in model.params:
        def loss_of(t: Tensor, _name: str = name) -> Tensor:
            original = model.params[_name]
            model.params[_name] = t
            try:
                return weighted_bce(model.forward(x, training=False), y, pos_weight)
            finally:
                model.params[_name] = original

        checks.append((f"model.{name}", loss_of, model.params[name]))
    return checks


def run_all(
    epsilon: float = DEFAULT_EPSILON,
    threshold: float = DEFAULT_THRESHOLD,
    extra_checks: list[tuple[str, object, Tensor]] | None = None,
    seed: int = 7,
) -> list[CheckResult]:
    """Gradient-check every op and every model parameter; returns one result
    per check, in a fixed order."""
    rng = np.random.default_rng(seed)
    checks = _op_checks(rng) + _model_checks(rng)
    if extra_checks:
        checks = checks + list(extra_checks)
    results = []
    for name, fn, x in checks:
        err = grad_check(fn, x, epsilon)
        results.append(CheckResult(name, err, threshold))
    return results
