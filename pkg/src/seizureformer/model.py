"""The SeizureFormer network.

Per channel: slice the lookback series into strided patches, embed each patch
with a bank of parallel 1D convolutions (multiple kernel widths, mean-pooled
per patch, concatenated), project to the working width and add a learnable
positional table.  The stacked (channel, patch) grid then passes through a
shared 2D cross-variable/temporal convolution, a pre-norm multi-head
self-attention encoder applied independently per channel, a
squeeze-and-excitation gate over channels, and finally a flatten + linear +
sigmoid head.  Each of the three enrichment blocks can be ablated: the CNN
embedding falls back to a single linear map per patch, the 2D convolution and
the SE gate fall back to identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor import (
    Tensor,
    clip,
    concat,
    conv1d,
    conv2d,
    dropout,
    log,
    matmul,
    mean,
    mul,
    power,
    relu,
    reshape,
    sigmoid,
    softmax,
    take_last,
    transpose_last2,
)

LOSS_EPS = 1e-7       # probability clamp so log never sees 0
LAYERNORM_EPS = 1e-5

VARIANT_FULL = "Full Model"
VARIANT_NO_CNN = "w/o CNN Patch Embedding"
VARIANT_NO_SE = "w/o SE Block"
VARIANT_NO_CVT = "w/o Cross-Variable Temporal convolution"
VARIANT_NO_ALL = "w/o All Modules"


@dataclass
class ModelConfig:
    lookback: int = 30
    channels: int = 2
    patch_length: int = 4
    stride: int = 2
    kernel_sizes: tuple[int, ...] = (3, 5, 7)
    embed_features: int = 16   # per-kernel feature count; all kernels equal
    embed_dim: int = 32
    heads: int = 2
    encoder_layers: int = 2
    ffn_dim: int = 128
    dropout_rate: float = 0.2
    cvt_kernel: tuple[int, int] = (3, 3)
    se_reduction: int | None = None  # None -> max(2, channels)
    use_cnn_embed: bool = True
    use_cvt: bool = True
    use_se: bool = True

    def __post_init__(self):
        if self.se_reduction is None:
            self.se_reduction = max(2, self.channels)
        self.kernel_sizes = tuple(int(k) for k in self.kernel_sizes)
        self.cvt_kernel = tuple(int(k) for k in self.cvt_kernel)

    @classmethod
    def reference_preset(cls, **overrides) -> "ModelConfig":
        """Full-scale reference configuration (the plain defaults are laptop-sized)."""
        base = dict(embed_dim=128, encoder_layers=3, heads=2, ffn_dim=1024, dropout_rate=0.2)
        base.update(overrides)
        return cls(**base)

    @property
    def patch_count(self) -> int:
        return (self.lookback - self.patch_length) // self.stride + 1

    @property
    def embed_width(self) -> int:
        """d' = total feature width after the multi-kernel embedding."""
        return len(self.kernel_sizes) * self.embed_features

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    @property
    def flat_dim(self) -> int:
        return self.channels * self.patch_count * self.embed_dim

    def validate(self) -> None:
        if self.patch_length > self.lookback:
            raise ValueError(f"patch_length {self.patch_length} exceeds lookback {self.lookback}")
        if self.patch_length < 1 or self.stride < 1:
            raise ValueError("patch_length and stride must be >= 1")
        if self.patch_count < 1:
            raise ValueError("configuration yields no patches")
        if self.channels < 1:
            raise ValueError("need at least one channel")
        if self.embed_dim % self.heads != 0:
            raise ValueError(f"embed_dim {self.embed_dim} must divide evenly into {self.heads} heads")
        if not self.kernel_sizes or any(k < 1 for k in self.kernel_sizes):
            raise ValueError("kernel_sizes must be positive")
        if self.embed_features < 1 or self.ffn_dim < 1 or self.encoder_layers < 1:
            raise ValueError("embed_features, ffn_dim, encoder_layers must be >= 1")
        if len(self.cvt_kernel) != 2 or any(k < 1 or k % 2 == 0 for k in self.cvt_kernel):
            raise ValueError(f"cvt_kernel extents must be odd and positive, got {self.cvt_kernel}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.se_reduction < 1:
            raise ValueError("se_reduction must be >= 1")

    @property
    def variant(self) -> str:
        if self.use_cnn_embed and self.use_cvt and self.use_se:
            return VARIANT_FULL
        if not (self.use_cnn_embed or self.use_cvt or self.use_se):
            return VARIANT_NO_ALL
        if not self.use_cnn_embed:
            return VARIANT_NO_CNN
        if not self.use_se:
            return VARIANT_NO_SE
        return VARIANT_NO_CVT


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    """Draw all learnable weights in a fixed order so seeds reproduce runs.

    Weight matrices and kernels start uniform(-1/sqrt(fan_in), +1/sqrt(fan_in));
    the positional table and every bias start at zero.
    """
    cfg.validate()
    p: dict[str, Tensor] = {}

    def param(name: str, values: np.ndarray) -> None:
        p[name] = Tensor(values, requires_grad=True)

    if cfg.use_cnn_embed:
        for i, k in enumerate(cfg.kernel_sizes):
            param(f"embed.conv{i}.weight", _uniform(rng, (cfg.embed_features, k), k))
            param(f"embed.conv{i}.bias", np.zeros(cfg.embed_features))
    else:
        param("embed.linear.weight", _uniform(rng, (cfg.patch_length, cfg.embed_width), cfg.patch_length))

    param("proj.weight", _uniform(rng, (cfg.embed_width, cfg.embed_dim), cfg.embed_width))
    param("proj.pos", np.zeros((cfg.patch_count, cfg.embed_dim)))

    if cfg.use_cvt:
        kd, kp = cfg.cvt_kernel
        param("cvt.kernel", _uniform(rng, (kd, kp), kd * kp))

    d, dk = cfg.embed_dim, cfg.head_dim
    for layer in range(cfg.encoder_layers):
        base = f"encoder{layer}"
        param(f"{base}.ln1.gamma", np.ones(d))
        param(f"{base}.ln1.beta", np.zeros(d))
        for j in range(cfg.heads):
            param(f"{base}.attn.head{j}.wq", _uniform(rng, (d, dk), d))
            param(f"{base}.attn.head{j}.wk", _uniform(rng, (d, dk), d))
            param(f"{base}.attn.head{j}.wv", _uniform(rng, (d, dk), d))
        param(f"{base}.attn.wo", _uniform(rng, (cfg.heads * dk, d), cfg.heads * dk))
        param(f"{base}.ln2.gamma", np.ones(d))
        param(f"{base}.ln2.beta", np.zeros(d))
        param(f"{base}.ffn.w1", _uniform(rng, (d, cfg.ffn_dim), d))
        param(f"{base}.ffn.b1", np.zeros(cfg.ffn_dim))
        param(f"{base}.ffn.w2", _uniform(rng, (cfg.ffn_dim, d), cfg.ffn_dim))
        param(f"{base}.ffn.b2", np.zeros(d))

    if cfg.use_se:
        param("se.w1", _uniform(rng, (cfg.channels, cfg.se_reduction), cfg.channels))
        param("se.w2", _uniform(rng, (cfg.se_reduction, cfg.channels), cfg.se_reduction))

    param("head.weight", _uniform(rng, (cfg.flat_dim, 1), cfg.flat_dim))
    param("head.bias", np.zeros(1))
    return p


# -- stages -----------------------------------------------------------------


def patchify(x: Tensor, patch_length: int, stride: int) -> Tensor:
    """Slice the last axis into overlapping patches: (..., N) -> (..., p, P)."""
    n = x.shape[-1]
    if patch_length > n:
        raise ValueError(f"patch_length {patch_length} exceeds series length {n}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    count = (n - patch_length) // stride + 1
    idx = stride * np.arange(count)[:, None] + np.arange(patch_length)[None, :]
    return take_last(x, idx)


def embed_patches(patches: Tensor, kernels: list[tuple[Tensor, Tensor]]) -> Tensor:
    """Multi-kernel conv features per patch: (..., p, P) -> (..., p, d').

    Each kernel runs same-padded over the patch positions and is mean-pooled
    back to one feature vector per patch; the banks concatenate on the last
    axis.
    """
    widths = {w.shape[0] for w, _ in kernels}
    if len(widths) != 1:
        raise ValueError("all kernels must emit the same feature count")
    feats = []
    for weight, bias in kernels:
        conv = conv1d(patches, weight, bias, padding="same")  # (..., p, P, F)
        feats.append(mean(conv, axes=-2))
    return concat(feats, axis=-1)


def project_position(embedded: Tensor, w_proj: Tensor, w_pos: Tensor) -> Tensor:
    """Linear map to the working width plus the learnable positional table."""
    return matmul(embedded, w_proj) + w_pos


def cvt_conv(x: Tensor, kernel: Tensor) -> Tensor:
    """Shared 2D convolution over the (channel, patch) grid, shape-preserving."""
    return conv2d(x, kernel)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    mu = mean(x, axes=-1, keepdims=True)
    centered = x - mu
    var = mean(mul(centered, centered), axes=-1, keepdims=True)
    return mul(centered, power(var + LAYERNORM_EPS, -0.5)) * gamma + beta


def mhsa_encoder(
    x: Tensor,
    cfg: ModelConfig,
    params: dict[str, Tensor],
    training: bool = False,
    rng: np.random.Generator | None = None,
    attn_sink: list[Tensor] | None = None,
) -> Tensor:
    """Pre-norm transformer encoder over the patch axis: (..., p, D) -> same.

    Leading axes are independent sequences (one per sample-channel).  When
    ``attn_sink`` is given, every layer/head's softmax matrix is appended to it.
    """
    scale = 1.0 / math.sqrt(cfg.head_dim)
    for layer in range(cfg.encoder_layers):
        base = f"encoder{layer}"
        normed = layer_norm(x, params[f"{base}.ln1.gamma"], params[f"{base}.ln1.beta"])
        head_outs = []
        for j in range(cfg.heads):
            q = matmul(normed, params[f"{base}.attn.head{j}.wq"])
            k = matmul(normed, params[f"{base}.attn.head{j}.wk"])
            v = matmul(normed, params[f"{base}.attn.head{j}.wv"])
            attn = softmax(matmul(q, transpose_last2(k)) * scale)
            if attn_sink is not None:
                attn_sink.append(attn)
            head_outs.append(matmul(attn, v))
        attended = matmul(concat(head_outs, axis=-1), params[f"{base}.attn.wo"])
        x = x + dropout(attended, cfg.dropout_rate, training, rng)

        normed = layer_norm(x, params[f"{base}.ln2.gamma"], params[f"{base}.ln2.beta"])
        hidden = relu(matmul(normed, params[f"{base}.ffn.w1"]) + params[f"{base}.ffn.b1"])
        ff = matmul(hidden, params[f"{base}.ffn.w2"]) + params[f"{base}.ffn.b2"]
        x = x + dropout(ff, cfg.dropout_rate, training, rng)
    return x


def se_recalibrate(x: Tensor, w1: Tensor, w2: Tensor) -> tuple[Tensor, Tensor]:
    """Pool each channel over (patch, feature), gate it, rescale: returns
    the recalibrated tensor and the (batch, channel) gates."""
    pooled = mean(x, axes=(-2, -1))  # (..., channels)
    gates = sigmoid(matmul(relu(matmul(pooled, w1)), w2))
    scaled = mul(x, reshape(gates, gates.shape + (1, 1)))
    return scaled, gates


def predict_head(
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    dropout_rate: float,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Flatten (batch, channel, patch, feature) row-major and squash to (0,1)."""
    batch = x.shape[0]
    flat = reshape(x, (batch, int(np.prod(x.shape[1:]))))
    flat = dropout(flat, dropout_rate, training, rng)
    return sigmoid(matmul(flat, weight) + bias)


def forward(
    x: np.ndarray,
    cfg: ModelConfig,
    params: dict[str, Tensor],
    training: bool = False,
    rng: np.random.Generator | None = None,
    attn_sink: list[Tensor] | None = None,
) -> Tensor:
    """Full network over a (batch, channels, lookback) array -> (batch, 1)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] != cfg.channels or x.shape[2] != cfg.lookback:
        raise ValueError(f"expected batch of shape (B, {cfg.channels}, {cfg.lookback}), got {x.shape}")
    batch = x.shape[0]

    patches = patchify(Tensor(x), cfg.patch_length, cfg.stride)  # (B, d, p, P)
    if cfg.use_cnn_embed:
        kernels = [
            (params[f"embed.conv{i}.weight"], params[f"embed.conv{i}.bias"])
            for i in range(len(cfg.kernel_sizes))
        ]
        embedded = embed_patches(patches, kernels)
    else:
        embedded = matmul(patches, params["embed.linear.weight"])

    grid = project_position(embedded, params["proj.weight"], params["proj.pos"])  # (B, d, p, D)
    if cfg.use_cvt:
        grid = cvt_conv(grid, params["cvt.kernel"])

    stacked = reshape(grid, (batch * cfg.channels, cfg.patch_count, cfg.embed_dim))
    encoded = mhsa_encoder(stacked, cfg, params, training, rng, attn_sink)
    grid = reshape(encoded, (batch, cfg.channels, cfg.patch_count, cfg.embed_dim))

    if cfg.use_se:
        grid, _ = se_recalibrate(grid, params["se.w1"], params["se.w2"])

    return predict_head(grid, params["head.weight"], params["head.bias"], cfg.dropout_rate, training, rng)


def weighted_bce(y_hat: Tensor, y: np.ndarray, pos_weight: float = 1.0) -> Tensor:
    """Mean binary cross-entropy with the positive terms scaled by pos_weight.

    Probabilities are clamped to [1e-7, 1-1e-7] before the logs; pos_weight=1
    recovers the plain mean BCE.
    """
    if pos_weight <= 0:
        raise ValueError(f"pos_weight must be positive, got {pos_weight}")
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    p = clip(reshape(y_hat, (y.size,)), LOSS_EPS, 1.0 - LOSS_EPS)
    y_t = Tensor(y)
    pos_term = mul(y_t, log(p)) * pos_weight
    neg_term = mul(Tensor(1.0 - y), log(1.0 - p))
    return -mean(pos_term + neg_term)


class SeizureFormer:
    """Config + parameters bundle with the forward pass bound in."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        config.validate()
        self.config = config
        self.params = init_params(config, rng)

    def forward(
        self,
        x: np.ndarray,
        training: bool = False,
        rng: np.random.Generator | None = None,
        attn_sink: list[Tensor] | None = None,
    ) -> Tensor:
        return forward(x, self.config, self.params, training, rng, attn_sink)

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params.items()}

    def restore(self, snapshot: dict[str, np.ndarray]) -> None:
        for name, values in snapshot.items():
            self.params[name].data = values.copy()


# -- checkpoint I/O -----------------------------------------------------------

_CHECKPOINT_MAGIC = "risk-model-checkpoint-v1"


def _format_config_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _parse_config_value(name: str, raw: str):
    kind = ModelConfig.__dataclass_fields__[name].type
    if name in ("kernel_sizes", "cvt_kernel"):
        return tuple(int(v) for v in raw.split(","))
    if "bool" in kind:
        return raw == "true"
    if "float" in kind:
        return float(raw)
    return int(raw)


def save_checkpoint(path: str | Path, cfg: ModelConfig, params: dict[str, Tensor]) -> None:
    """Self-describing flat text: config lines, then name/shape/values triples.

    Values are written with repr so the round trip is bit-exact.
    """
    lines = [f"format={_CHECKPOINT_MAGIC}"]
    for name in ModelConfig.__dataclass_fields__:
        lines.append(f"config.{name}={_format_config_value(getattr(cfg, name))}")
    for name, t in params.items():
        shape = ",".join(str(s) for s in t.data.shape)
        lines.append(f"param={name} shape={shape}")
        lines.append(" ".join(repr(float(v)) for v in t.data.reshape(-1)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_checkpoint(path: str | Path) -> tuple[ModelConfig, dict[str, Tensor]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != f"format={_CHECKPOINT_MAGIC}":
        raise ValueError(f"{path} is not a recognized checkpoint")
    cfg_kwargs = {}
    params: dict[str, Tensor] = {}
    i = 1
    while i < len(lines) and lines[i].startswith("config."):
        key, _, raw = lines[i].partition("=")
        name = key[len("config."):]
        cfg_kwargs[name] = _parse_config_value(name, raw)
        i += 1
    cfg = ModelConfig(**cfg_kwargs)
    while i < len(lines):
        line = lines[i]
        if not line.startswith("param="):
            raise ValueError(f"{path}: unexpected line {i + 1}")
        head, shape_part = line.split(" shape=")
        name = head[len("param="):]
        shape = tuple(int(s) for s in shape_part.split(","))
        values = np.array([float(v) for v in lines[i + 1].split()], dtype=np.float64)
        params[name] = Tensor(values.reshape(shape), requires_grad=True)
        i += 2
    cfg.validate()
    return cfg, params


def model_from_checkpoint(path: str | Path) -> SeizureFormer:
    cfg, params = load_checkpoint(path)
    model = SeizureFormer.__new__(SeizureFormer)
    model.config = cfg
    model.params = params
    return model
