"""The forecasting network.

Forward pass: speed-wave fusion of the speed and work-zone maps,
modulated by a learned weekly time factor and lifted to C channels;
two attention-gated spatio-temporal blocks (spatial multi-head
attention, temporal multi-head attention, hypergraph convolution,
temporal convolution, residual); 1x1 reduction back to one channel; a
bidirectional gated recurrent pass over the history axis per segment;
and a linear map onto the forecast steps.

All shapes are batched: inputs (B, N, H) produce predictions (B, N, P)
in normalized speed units.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .errors import ConfigError, NumericError

#: Selectable fusion formulas (ablation grid rows).
SPEED_WAVE_FORMULAS = {
    "fused_time": "(Ws . Xs + Wc . Xc) . TE",
    "fused": "Ws . Xs + Wc . Xc",
    "raw_speed": "Xs + Wc . Xc",
    "squared_speed": "Xs . Xs + Wc",
}


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters."""

    history: int = 12
    horizon: int = 12
    blocks: int = 2
    heads: int = 4
    head_dim: int = 8
    channels: int = 32
    kernel_width: int = 3
    recurrent_dim: int = 32
    time_dim: int = 4
    k_neighbors: "int | str" = 5
    speed_wave: str = "fused_time"

    def __post_init__(self):
        for name in ("history", "horizon", "blocks", "heads", "head_dim",
                     "channels", "kernel_width", "recurrent_dim", "time_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.kernel_width > self.history:
            raise ConfigError(f"kernel_width {self.kernel_width} exceeds history {self.history}")
        if self.speed_wave not in SPEED_WAVE_FORMULAS:
            raise ConfigError(f"unknown speed_wave '{self.speed_wave}'; "
                              f"options: {sorted(SPEED_WAVE_FORMULAS)}")

    def with_overrides(self, **kwargs) -> "ModelConfig":
        return replace(self, **kwargs)


def _xavier(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def init_params(config: ModelConfig, n_segments: int, num_slots: int,
                seed: int = 0) -> dict[str, np.ndarray]:
    """Initial parameter tensors.

    Fusion starts as a pure-speed model: the speed weights are 1, the
    work-zone weights 0, and the time factor is exactly 1 (zero
    projection through the bounded sigmoid).
    """
    rng = np.random.default_rng(seed)
    n, h = n_segments, config.history
    c, hd = config.channels, config.heads * config.head_dim
    dr, dt, kw = config.recurrent_dim, config.time_dim, config.kernel_width

    params: dict[str, np.ndarray] = {
        "fusion.w_speed": np.ones((n, h)),
        "fusion.w_constr": np.zeros((n, h)),
        "time.embedding": _xavier(rng, (num_slots, dt), num_slots, dt),
        "time.proj": np.zeros((dt, 1)),
        "lift.weight": _xavier(rng, (c,), 1, c),
        "lift.bias": np.zeros(c),
    }
    for i in range(config.blocks):
        pre = f"block{i}."
        for mode in ("spatial", "temporal"):
            for w in ("wq", "wk", "wv"):
                params[f"{pre}{mode}.{w}"] = _xavier(rng, (c, hd), c, hd)
            params[f"{pre}{mode}.wo"] = _xavier(rng, (hd, c), hd, c)
        params[f"{pre}theta"] = _xavier(rng, (c, c), c, c)
        params[f"{pre}phi"] = _xavier(rng, (kw, c, c), kw * c, kw * c)
        params[f"{pre}res"] = _xavier(rng, (c, c), c, c)
    params["reduce.weight"] = _xavier(rng, (c, 1), c, 1)
    params["reduce.bias"] = np.zeros(1)
    for direction in ("fwd", "bwd"):
        for gate in ("z", "r", "h"):
            params[f"gru.{direction}.w_{gate}"] = _xavier(rng, (1, dr), 1, dr)
            params[f"gru.{direction}.u_{gate}"] = _xavier(rng, (dr, dr), dr, dr)
            params[f"gru.{direction}.b_{gate}"] = np.zeros(dr)
    params["out.weight"] = _xavier(rng, (2 * dr, config.horizon), 2 * dr, config.horizon)
    params["out.bias"] = np.zeros(config.horizon)
    return params


def param_shapes(config: ModelConfig, n_segments: int, num_slots: int) -> dict[str, tuple]:
    return {k: v.shape for k, v in init_params(config, n_segments, num_slots).items()}


def _as_vars(params: Mapping[str, "np.ndarray | Var"]) -> dict[str, Var]:
    return {k: v if isinstance(v, Var) else ad.constant(v) for k, v in params.items()}


@contextmanager
def _stage(name: str):
    try:
        yield
    except NumericError as exc:
        raise NumericError(f"{name}: {exc}") from exc


# -- fusion -----------------------------------------------------------------


def time_factor(params: Mapping[str, Var], slots: np.ndarray) -> Var:
    """Multiplicative weekly factor in (0, 2), one scalar per time step.

    Looks up the slot embedding, projects to a logit, and bounds with
    2·sigmoid. A zero projection gives a factor of exactly 1.
    """
    emb = ad.take(params["time.embedding"], np.asarray(slots, dtype=np.intp))  # (B, H, dt)
    logits = ad.matmul(emb, params["time.proj"])                               # (B, H, 1)
    b, h = slots.shape
    return ad.reshape(ad.mul(ad.sigmoid(logits), 2.0), (b, 1, h))


def speed_wave(params: Mapping[str, "np.ndarray | Var"], x_speed, x_constr,
               slots: np.ndarray, config: ModelConfig) -> Var:
    """Fuse speed and work-zone maps, then lift 1 -> C channels.

    The active formula comes from ``config.speed_wave``; see
    :data:`SPEED_WAVE_FORMULAS` for the four variants.
    """
    p = _as_vars(params)
    xs = x_speed if isinstance(x_speed, Var) else ad.constant(x_speed)
    xc = x_constr if isinstance(x_constr, Var) else ad.constant(x_constr)
    if xs.shape != xc.shape:
        raise ConfigError(f"speed and construction windows differ: {xs.shape} vs {xc.shape}")

    kind = config.speed_wave
    if kind == "fused_time":
        base = ad.mul(ad.add(ad.mul(p["fusion.w_speed"], xs), ad.mul(p["fusion.w_constr"], xc)),
                      time_factor(p, slots))
    elif kind == "fused":
        base = ad.add(ad.mul(p["fusion.w_speed"], xs), ad.mul(p["fusion.w_constr"], xc))
    elif kind == "raw_speed":
        base = ad.add(xs, ad.mul(p["fusion.w_constr"], xc))
    else:  # squared_speed
        base = ad.add(ad.mul(xs, xs), p["fusion.w_constr"])

    b, n, h = base.shape
    c = config.channels
    lifted = ad.mul(ad.reshape(base, (b, 1, n, h)), ad.reshape(p["lift.weight"], (c, 1, 1)))
    return ad.add(lifted, ad.reshape(p["lift.bias"], (c, 1, 1)))


# -- attention ---------------------------------------------------------------


def st_attention(x: Var, params: Mapping[str, Var], prefix: str, mode: str,
                 config: ModelConfig, return_weights: bool = False):
    """Multi-head scaled dot-product attention over segments or steps.

    `mode` is "spatial" (tokens are the N segments, per time step) or
    "temporal" (tokens are the H steps, per segment). The attended
    output is added back to the input.
    """
    if mode == "spatial":
        arranged = ad.transpose(x, (0, 3, 2, 1))  # (B, H, N, C)
    elif mode == "temporal":
        arranged = ad.transpose(x, (0, 2, 3, 1))  # (B, N, H, C)
    else:
        raise ConfigError(f"attention mode must be spatial or temporal, got '{mode}'")

    b, outer, tokens, c = arranged.shape
    heads, dk = config.heads, config.head_dim

    def project(w: Var) -> Var:
        y = ad.matmul(arranged, w)                                  # (B, outer, T, heads*dk)
        y = ad.reshape(y, (b, outer, tokens, heads, dk))
        return ad.transpose(y, (0, 1, 3, 2, 4))                     # (B, outer, heads, T, dk)

    q = project(params[f"{prefix}{mode}.wq"])
    k = project(params[f"{prefix}{mode}.wk"])
    v = project(params[f"{prefix}{mode}.wv"])
    scores = ad.mul(ad.matmul(q, ad.transpose(k, (0, 1, 2, 4, 3))), 1.0 / np.sqrt(dk))
    attn = ad.softmax(scores, axis=-1)                              # rows sum to 1
    ctx = ad.matmul(attn, v)                                        # (B, outer, heads, T, dk)
    ctx = ad.reshape(ad.transpose(ctx, (0, 1, 3, 2, 4)), (b, outer, tokens, heads * dk))
    out = ad.matmul(ctx, params[f"{prefix}{mode}.wo"])              # (B, outer, T, C)

    if mode == "spatial":
        out = ad.transpose(out, (0, 3, 2, 1))
    else:
        out = ad.transpose(out, (0, 3, 1, 2))
    result = ad.add(x, out)
    if return_weights:
        return result, attn.data
    return result


# -- spatio-temporal block ----------------------------------------------------


def _mix_channels(x: Var, w: Var) -> Var:
    """Apply a (C_in, C_out) map across the channel axis of (B, C, N, H)."""
    mixed = ad.matmul(ad.transpose(x, (0, 2, 3, 1)), w)
    return ad.transpose(mixed, (0, 3, 1, 2))


def graph_convolve(x: Var, g_op: Var, theta: Var) -> Var:
    """ReLU(theta applied channelwise to G_op · x)."""
    return ad.relu(_mix_channels(ad.matmul(g_op, x), theta))


def temporal_convolve(x: Var, phi: Var, width: int) -> Var:
    """ReLU of a 1-D convolution along the history axis, zero-padded to
    preserve length. `phi` has shape (width, C_in, C_out)."""
    arranged = ad.transpose(x, (0, 2, 3, 1))                 # (B, N, H, C)
    h = arranged.shape[2]
    before = width // 2
    padded = ad.pad_axis(arranged, axis=2, before=before, after=width - 1 - before)
    total = None
    for offset in range(width):
        window = ad.take(padded, (slice(None), slice(None), slice(offset, offset + h), slice(None)))
        term = ad.matmul(window, ad.take(phi, offset))
        total = term if total is None else ad.add(total, term)
    return ad.transpose(ad.relu(total), (0, 3, 1, 2))


def st_block(x: Var, g_op: Var, params: Mapping[str, Var], prefix: str,
             config: ModelConfig) -> Var:
    """One attention-gated spatio-temporal unit with a residual path."""
    attended = st_attention(x, params, prefix, "spatial", config)
    attended = st_attention(attended, params, prefix, "temporal", config)
    spatial = graph_convolve(attended, g_op, params[f"{prefix}theta"])
    out = temporal_convolve(spatial, params[f"{prefix}phi"], config.kernel_width)
    return ad.add(out, _mix_channels(x, params[f"{prefix}res"]))


# -- recurrent head ------------------------------------------------------------


def recurrent_head(params: Mapping[str, Var], seq: Var, config: ModelConfig) -> Var:
    """Bidirectional gated recurrent pass over the history axis.

    `seq` is (B, N, H) with a scalar per step; the result concatenates
    the forward and backward final states into (B, N, 2 * recurrent_dim).
    """
    b, n, h = seq.shape
    dr = config.recurrent_dim
    flat = ad.reshape(seq, (b * n, h))

    def run(direction: str, order) -> Var:
        w_z, u_z, b_z = (params[f"gru.{direction}.{k}"] for k in ("w_z", "u_z", "b_z"))
        w_r, u_r, b_r = (params[f"gru.{direction}.{k}"] for k in ("w_r", "u_r", "b_r"))
        w_h, u_h, b_h = (params[f"gru.{direction}.{k}"] for k in ("w_h", "u_h", "b_h"))
        state = ad.constant(np.zeros((b * n, dr)))
        for t in order:
            x_t = ad.take(flat, (slice(None), slice(t, t + 1)))      # (B*N, 1)
            update = ad.sigmoid(ad.add(ad.add(ad.matmul(x_t, w_z), ad.matmul(state, u_z)), b_z))
            reset = ad.sigmoid(ad.add(ad.add(ad.matmul(x_t, w_r), ad.matmul(state, u_r)), b_r))
            cand = ad.tanh(ad.add(ad.add(ad.matmul(x_t, w_h),
                                         ad.matmul(ad.mul(reset, state), u_h)), b_h))
            state = ad.add(state, ad.mul(update, ad.add(cand, ad.mul(state, -1.0))))
        return state

    forward_state = run("fwd", range(h))
    backward_state = run("bwd", range(h - 1, -1, -1))
    states = ad.concat([forward_state, backward_state], axis=1)
    return ad.reshape(states, (b, n, 2 * dr))


# -- full forward ---------------------------------------------------------------


def forward_batch(params: Mapping[str, "np.ndarray | Var"], x_speed, x_constr,
                  slots: np.ndarray, g_op: np.ndarray, config: ModelConfig) -> Var:
    """Predict (B, N, P) normalized speeds from batched history windows."""
    p = _as_vars(params)
    gop = g_op if isinstance(g_op, Var) else ad.constant(g_op)

    with _stage("speed_wave"):
        h = speed_wave(p, x_speed, x_constr, slots, config)
    for i in range(config.blocks):
        with _stage(f"block{i}"):
            h = st_block(h, gop, p, f"block{i}.", config)
    with _stage("channel_reduce"):
        reduced = ad.matmul(ad.transpose(h, (0, 2, 3, 1)), p["reduce.weight"])
        reduced = ad.add(reduced, p["reduce.bias"])
        b, n, steps, _ = reduced.shape
        reduced = ad.reshape(reduced, (b, n, steps))
    with _stage("recurrent_head"):
        states = recurrent_head(p, reduced, config)
    with _stage("output_map"):
        flat = ad.reshape(states, (b * n, 2 * config.recurrent_dim))
        out = ad.add(ad.matmul(flat, p["out.weight"]), p["out.bias"])
        return ad.reshape(out, (b, n, config.horizon))


def forward(params: Mapping[str, np.ndarray], sample, g_op: np.ndarray,
            config: ModelConfig) -> np.ndarray:
    """Single-sample convenience wrapper: returns an (N, P) array."""
    pred = forward_batch(params, sample.x_speed[None], sample.x_constr[None],
                         sample.slots[None], g_op, config)
    return pred.data[0]


def predict_batch(params: Mapping[str, np.ndarray], x_speed: np.ndarray,
                  x_constr: np.ndarray, slots: np.ndarray, g_op: np.ndarray,
                  config: ModelConfig) -> np.ndarray:
    """Inference on stacked arrays without keeping gradient structure."""
    return forward_batch(params, x_speed, x_constr, slots, g_op, config).data
