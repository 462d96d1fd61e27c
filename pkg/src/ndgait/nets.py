"""Model architectures: EEG encoder, motor encoder, motor decoder, plus the
Stage II session heads and domain scorer.

Parameters live in a flat dict name -> ndarray (float32 for training), with
batchnorm running statistics in a parallel state dict. Forward functions take
the dict wrapped as tape leaves, so the same code serves training, gradient
checking (float64) and inference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .errors import ConfigError, ShapeError

GROWTH = (25, 50, 100, 200)  # filter growth pattern, scaled to desk size


@dataclass
class ModelConfig:
    n_channels: int = 16
    n_joints: int = 6
    latent_dim: int = 128
    window: int = 400
    channel_scale: float = 0.32
    eeg_kernel: int = 7
    eeg_strides: tuple = (2, 2, 2, 2)
    motor_channels: tuple = (16, 32)
    motor_kernel: int = 5
    motor_strides: tuple = (2, 2)
    tf_layers: int = 2
    tf_heads: int = 4
    ff_mult: int = 2
    dec_kernel: int = 3
    dec_strides: tuple = (2, 2, 2, 2)
    token_count: int = 8
    distance_variant: str = "cross_attention"  # or "cosine"
    max_norm: float = 2.0
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def eeg_channels(self) -> tuple:
        chans = tuple(math.ceil(self.channel_scale * g) for g in GROWTH)
        if len(chans) != len(self.eeg_strides):
            raise ConfigError("eeg_strides must have one entry per conv block")
        return chans

    def eeg_time_path(self) -> list[int]:
        t = self.window
        k = self.eeg_kernel
        out = [t]
        for s in self.eeg_strides:
            t = (t + 2 * (k // 2) - k) // s + 1
            out.append(t)
        return out

    def motor_tokens(self) -> int:
        t = self.window
        k = self.motor_kernel
        for s in self.motor_strides:
            t = (t + 2 * (k // 2) - k) // s + 1
        return t

    def decoder_t0(self) -> int:
        down = 1
        for s in self.dec_strides:
            down *= s
        return max(1, self.window // down)

    def validate(self):
        if self.latent_dim % self.token_count != 0:
            raise ConfigError(
                f"latent_dim {self.latent_dim} not divisible by token_count {self.token_count}"
            )
        if self.latent_dim % self.tf_heads != 0:
            raise ConfigError("latent_dim must divide evenly into transformer heads")
        if self.distance_variant not in ("cross_attention", "cosine"):
            raise ConfigError(f"unknown distance variant {self.distance_variant!r}")
        if self.eeg_time_path()[-1] < 1:
            raise ConfigError("eeg encoder strides collapse time below 1 sample")

    def to_dict(self):
        d = dict(self.__dict__)
        for key in ("eeg_strides", "motor_channels", "motor_strides", "dec_strides"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("eeg_strides", "motor_channels", "motor_strides", "dec_strides"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def _glorot(rng, shape, fan_in, fan_out, dtype):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _conv_init(rng, cout, cin, k, dtype):
    return _glorot(rng, (cout, cin, k), cin * k, cout * k, dtype)


def init_model_params(cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32):
    """All Stage I parameters (encoders, decoder, distance) and BN state."""
    cfg.validate()
    p: dict[str, np.ndarray] = {}
    state: dict[str, dict] = {}
    d = cfg.latent_dim

    def bn(name, c):
        p[f"{name}.g"] = np.ones(c, dtype=dtype)
        p[f"{name}.b"] = np.zeros(c, dtype=dtype)
        state[name] = {"mean": np.zeros(c, dtype=dtype), "var": np.ones(c, dtype=dtype)}

    # EEG encoder: conv blocks with scaled filter growth, then a constrained
    # full-width projection onto the latent space
    chans = cfg.eeg_channels()
    cin = cfg.n_channels
    for i, cout in enumerate(chans):
        p[f"eeg.b{i}.w"] = _conv_init(rng, cout, cin, cfg.eeg_kernel, dtype)
        bn(f"eeg.b{i}.bn", cout)
        cin = cout
    t_rem = cfg.eeg_time_path()[-1]
    p["eeg.proj.w"] = _conv_init(rng, d, chans[-1], t_rem, dtype)
    p["eeg.proj.b"] = np.zeros(d, dtype=dtype)

    # motor encoder: strided conv blocks + transformer over the token sequence
    cin = cfg.n_joints
    for i, cout in enumerate(cfg.motor_channels):
        p[f"motor.c{i}.w"] = _conv_init(rng, cout, cin, cfg.motor_kernel, dtype)
        bn(f"motor.c{i}.bn", cout)
        cin = cout
    p["motor.proj.w"] = _conv_init(rng, d, cin, 1, dtype)
    p["motor.proj.b"] = np.zeros(d, dtype=dtype)
    for layer in range(cfg.tf_layers):
        base = f"motor.t{layer}"
        for nm in ("wq", "wk", "wv", "wo"):
            p[f"{base}.{nm}"] = _glorot(rng, (d, d), d, d, dtype)
            p[f"{base}.b{nm[1]}"] = np.zeros(d, dtype=dtype)
        ff = cfg.ff_mult * d
        p[f"{base}.ff1.w"] = _glorot(rng, (d, ff), d, ff, dtype)
        p[f"{base}.ff1.b"] = np.zeros(ff, dtype=dtype)
        p[f"{base}.ff2.w"] = _glorot(rng, (ff, d), ff, d, dtype)
        p[f"{base}.ff2.b"] = np.zeros(d, dtype=dtype)
        for ln in ("ln1", "ln2"):
            p[f"{base}.{ln}.g"] = np.ones(d, dtype=dtype)
            p[f"{base}.{ln}.b"] = np.zeros(d, dtype=dtype)

    # motor decoder: latent -> tensor, transposed-conv stack, dynamic pad to window
    dec_chans = tuple(reversed(chans))
    t0 = cfg.decoder_t0()
    p["dec.proj.w"] = _glorot(rng, (d, dec_chans[0] * t0), d, dec_chans[0] * t0, dtype)
    p["dec.proj.b"] = np.zeros(dec_chans[0] * t0, dtype=dtype)
    cin = dec_chans[0]
    for i, cout in enumerate(dec_chans[1:]):
        p[f"dec.t{i}.w"] = _glorot(
            rng, (cin, cout, cfg.dec_kernel), cin * cfg.dec_kernel, cout * cfg.dec_kernel, dtype
        )
        bn(f"dec.t{i}.bn", cout)
        cin = cout
    p["dec.out.w"] = _glorot(
        rng, (cin, cfg.n_joints, cfg.dec_kernel), cin * cfg.dec_kernel,
        cfg.n_joints * cfg.dec_kernel, dtype,
    )
    p["dec.out.b"] = np.zeros(cfg.n_joints, dtype=dtype)

    # learnable cross-modal distance
    for nm in ("wq", "wk", "wv", "wo"):
        p[f"dist.{nm}"] = _glorot(rng, (d, d), d, d, dtype)
    p["dist.tau"] = np.array([1.0], dtype=dtype)
    p["dist.b"] = np.array([0.0], dtype=dtype)
    return p, state


def init_stage2_params(cfg: ModelConfig, n_src: int, rng: np.random.Generator, dtype=np.float32):
    """One affine head per source session plus the domain scorer."""
    d, j = cfg.latent_dim, cfg.n_joints
    p = {
        "heads.w": np.stack([_glorot(rng, (d, j), d, j, dtype) for _ in range(n_src)]),
        "heads.b": np.zeros((n_src, j), dtype=dtype),
        "scorer.wa": _glorot(rng, (n_src, d), d, n_src, dtype),
        "scorer.ba": np.zeros(n_src, dtype=dtype),
    }
    return p


def wrap_params(tape: dc.Tape, params: dict) -> dict:
    return {k: tape.leaf(v) for k, v in params.items()}


def sinusoidal_encoding(length: int, dim: int, dtype=np.float32) -> np.ndarray:
    pos = np.arange(length)[:, None].astype(np.float64)
    idx = np.arange(0, dim, 2).astype(np.float64)
    div = np.exp(-idx / dim * math.log(10000.0))
    pe = np.zeros((length, dim))
    pe[:, 0::2] = np.sin(pos * div)
    pe[:, 1::2] = np.cos(pos * div[: pe[:, 1::2].shape[1]])
    return pe.astype(dtype)


def _bn_state(state, name):
    return None if state is None else state[name]


def eeg_encode(P: dict, x: dc.Value, cfg: ModelConfig, train: bool = False, state=None) -> dc.Value:
    """(N, C, 400) -> (N, d) embedding."""
    if x.ndim != 3 or x.shape[1] != cfg.n_channels:
        raise ShapeError(f"eeg_encode expects (N, {cfg.n_channels}, T), got {x.shape}")
    h = x
    k = cfg.eeg_kernel
    for i, s in enumerate(cfg.eeg_strides):
        h = dc.conv1d(h, P[f"eeg.b{i}.w"], stride=s, pad=k // 2)
        h = dc.batchnorm1d(h, P[f"eeg.b{i}.bn.g"], P[f"eeg.b{i}.bn.b"], eps=cfg.bn_eps,
                           train=train, running=_bn_state(state, f"eeg.b{i}.bn"),
                           momentum=cfg.bn_momentum)
        h = dc.relu(h)
    h = dc.conv1d(h, P["eeg.proj.w"], stride=1, pad=0)  # (N, d, 1)
    h = dc.reshape(h, (h.shape[0], cfg.latent_dim))
    return dc.add(h, P["eeg.proj.b"])


def motor_encode(P: dict, y: dc.Value, cfg: ModelConfig, train: bool = False, state=None) -> dc.Value:
    """(N, J, 400) -> (N, d) embedding via conv blocks + transformer + mean pool."""
    if y.ndim != 3 or y.shape[1] != cfg.n_joints:
        raise ShapeError(f"motor_encode expects (N, {cfg.n_joints}, T), got {y.shape}")
    h = y
    k = cfg.motor_kernel
    for i, s in enumerate(cfg.motor_strides):
        h = dc.conv1d(h, P[f"motor.c{i}.w"], stride=s, pad=k // 2)
        h = dc.batchnorm1d(h, P[f"motor.c{i}.bn.g"], P[f"motor.c{i}.bn.b"], eps=cfg.bn_eps,
                           train=train, running=_bn_state(state, f"motor.c{i}.bn"),
                           momentum=cfg.bn_momentum)
        h = dc.relu(h)
    h = dc.conv1d(h, P["motor.proj.w"], stride=1, pad=0)  # (N, d, L)
    tokens = dc.permute(h, (0, 2, 1))  # (N, L, d)
    bias = dc.reshape(P["motor.proj.b"], (1, 1, cfg.latent_dim))
    tokens = dc.add(tokens, bias)
    pe = tokens.tape.constant(sinusoidal_encoding(tokens.shape[1], cfg.latent_dim)[None])
    tokens = dc.add(tokens, pe)
    for layer in range(cfg.tf_layers):
        tokens = _transformer_layer(P, tokens, f"motor.t{layer}", cfg)
    return dc.mean_(tokens, axis=1)


def _layernorm(x: dc.Value, g: dc.Value, b: dc.Value, eps: float = 1e-5) -> dc.Value:
    mu = dc.mean_(x, axis=-1, keepdims=True)
    xc = dc.sub(x, mu)
    var = dc.mean_(dc.mul(xc, xc), axis=-1, keepdims=True)
    inv = dc.div(x.tape.constant(1.0), dc.sqrt(dc.add(var, x.tape.constant(eps))))
    return dc.add(dc.mul(dc.mul(xc, inv), g), b)


def _transformer_layer(P: dict, x: dc.Value, base: str, cfg: ModelConfig) -> dc.Value:
    n, length, d = x.shape
    heads = cfg.tf_heads
    dh = d // heads

    def split(v):
        return dc.permute(dc.reshape(v, (n, length, heads, dh)), (0, 2, 1, 3))

    q = split(dc.add(dc.matmul(x, P[f"{base}.wq"]), P[f"{base}.bq"]))
    key = split(dc.add(dc.matmul(x, P[f"{base}.wk"]), P[f"{base}.bk"]))
    v = split(dc.add(dc.matmul(x, P[f"{base}.wv"]), P[f"{base}.bv"]))
    att = dc.scaled_dot_attention(q, key, v)  # (N, h, L, dh)
    att = dc.reshape(dc.permute(att, (0, 2, 1, 3)), (n, length, d))
    att = dc.add(dc.matmul(att, P[f"{base}.wo"]), P[f"{base}.bo"])
    x = _layernorm(dc.add(x, att), P[f"{base}.ln1.g"], P[f"{base}.ln1.b"])
    ff = dc.add(dc.matmul(x, P[f"{base}.ff1.w"]), P[f"{base}.ff1.b"])
    ff = dc.relu(ff)
    ff = dc.add(dc.matmul(ff, P[f"{base}.ff2.w"]), P[f"{base}.ff2.b"])
    return _layernorm(dc.add(x, ff), P[f"{base}.ln2.g"], P[f"{base}.ln2.b"])


def motor_decode(P: dict, z: dc.Value, cfg: ModelConfig, train: bool = False, state=None) -> dc.Value:
    """(N, d) -> (N, J, 400); trailing length fixed by dynamic crop/pad."""
    if z.ndim != 2 or z.shape[1] != cfg.latent_dim:
        raise ShapeError(f"motor_decode expects (N, {cfg.latent_dim}), got {z.shape}")
    n = z.shape[0]
    dec_chans = tuple(reversed(cfg.eeg_channels()))
    t0 = cfg.decoder_t0()
    h = dc.add(dc.matmul(z, P["dec.proj.w"]), P["dec.proj.b"])
    h = dc.relu(dc.reshape(h, (n, dec_chans[0], t0)))
    for i in range(len(dec_chans) - 1):
        h = dc.conv1d_transpose(h, P[f"dec.t{i}.w"], stride=cfg.dec_strides[i])
        h = dc.batchnorm1d(h, P[f"dec.t{i}.bn.g"], P[f"dec.t{i}.bn.b"], eps=cfg.bn_eps,
                           train=train, running=_bn_state(state, f"dec.t{i}.bn"),
                           momentum=cfg.bn_momentum)
        h = dc.relu(h)
    h = dc.conv1d_transpose(h, P["dec.out.w"], stride=cfg.dec_strides[-1])
    h = dc.crop_pad_last(h, cfg.window)
    bias = dc.reshape(P["dec.out.b"], (1, cfg.n_joints, 1))
    return dc.add(h, bias)


def apply_max_norm(params: dict, cap: float) -> dict:
    """Rescale any EEG-encoder kernel whose L2 norm exceeds cap (in place)."""
    if cap <= 0:
        raise ConfigError("max-norm cap must be positive")
    for name, w in params.items():
        if not name.startswith("eeg.") or not name.endswith(".w") or w.ndim != 3:
            continue
        norms = np.sqrt((w.reshape(w.shape[0], -1) ** 2).sum(axis=1))
        over = norms > cap
        if over.any():
            scales = np.ones_like(norms)
            scales[over] = cap / norms[over]
            w *= scales[:, None, None].astype(w.dtype)
    return params


def kernel_norms(params: dict) -> dict:
    out = {}
    for name, w in params.items():
        if name.startswith("eeg.") and name.endswith(".w") and w.ndim == 3:
            out[name] = np.sqrt((w.reshape(w.shape[0], -1) ** 2).sum(axis=1))
    return out
