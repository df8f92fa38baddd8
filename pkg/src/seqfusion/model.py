"""Deterministic forward pass of the sequence fusion network.

Stacked LSTM layers feed a multi-head self-attention block; the
attention output is added back to the LSTM hidden sequence through a
residual connection, layer-normalized, optionally dropped out (train
mode), flattened and classified.  Every intermediate value is recorded
in a :class:`ForwardTrace` so the exact backward pass in
:mod:`seqfusion.training` never recomputes activations.

All math runs in float64.  Eval-mode forward is a pure function of
(batch, params); train mode adds one seeded dropout mask.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from seqfusion.embio import FormatError, _rng
from seqfusion.pipeline import PaddedBatch

MODEL_MAGIC = b"SQFM"
MODEL_VERSION = 1
LAYERNORM_EPS = 1e-5

_FLAG_MASK_PADDING = 1
_FLAG_ATTENTION_OFF = 2


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the last axis with max subtraction."""
    shifted = scores - np.max(scores, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------

@dataclass
class LstmLayerParams:
    """One LSTM layer: per-gate input/recurrent weights and biases.

    Gate order is input (i), forget (f), cell candidate (g), output (o).
    Input weights are (d_in, d_hidden), recurrent (d_hidden, d_hidden).
    """

    w_xi: np.ndarray
    w_xf: np.ndarray
    w_xg: np.ndarray
    w_xo: np.ndarray
    w_hi: np.ndarray
    w_hf: np.ndarray
    w_hg: np.ndarray
    w_ho: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_g: np.ndarray
    b_o: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.w_xi.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w_xi.shape[1]


@dataclass
class MhaParams:
    """Per-head Q/K/V projections (h, d, d_k) plus the output projection (d, d)."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray

    @property
    def head_count(self) -> int:
        return self.w_q.shape[0]

    @property
    def model_dim(self) -> int:
        return self.w_q.shape[1]

    @property
    def head_dim(self) -> int:
        return self.w_q.shape[2]


@dataclass
class ModelParams:
    """All trainable weights plus the architecture switches they imply."""

    lstm_layers: list[LstmLayerParams]
    mha: MhaParams
    norm_gain: np.ndarray
    norm_bias: np.ndarray
    head_w: np.ndarray
    head_b: np.ndarray
    input_dim: int
    l_max: int
    n_classes: int
    dropout_rate: float = 0.0
    mask_padding: bool = False
    attention_enabled: bool = True

    @property
    def model_dim(self) -> int:
        return self.lstm_layers[-1].hidden_dim

    @property
    def hidden_dims(self) -> tuple[int, ...]:
        return tuple(layer.hidden_dim for layer in self.lstm_layers)

    def validate(self) -> None:
        if self.lstm_layers[0].input_dim != self.input_dim:
            raise ValueError("first LSTM layer does not accept input_dim features")
        for below, above in zip(self.lstm_layers, self.lstm_layers[1:]):
            if above.input_dim != below.hidden_dim:
                raise ValueError("stacked LSTM dims are not chained")
        d = self.model_dim
        if self.attention_enabled:
            if self.mha.model_dim != d:
                raise ValueError("attention dim must equal the top LSTM hidden dim")
            if d % self.mha.head_count != 0:
                raise ValueError(
                    f"model dim {d} not divisible by {self.mha.head_count} heads"
                )
        out_dim = 1 if self.n_classes == 2 else self.n_classes
        if self.head_w.shape != (self.l_max * d, out_dim):
            raise ValueError(
                f"classifier weights {self.head_w.shape} != "
                f"({self.l_max * d}, {out_dim})"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")


def init_model(
    input_dim: int,
    l_max: int = 7,
    n_classes: int = 2,
    hidden_dims: tuple[int, ...] = (256, 256),
    heads: int = 8,
    dropout_rate: float = 0.3,
    seed: int = 0,
    mask_padding: bool = False,
    attention: bool = True,
    forget_bias: float = 1.0,
) -> ModelParams:
    """Seeded initialization: uniform +-1/sqrt(fan_in) weights, zero biases.

    The forget-gate bias starts at ``forget_bias`` (1.0 keeps early cell
    memory open; pass 0.0 for a fully neutral start).
    """
    if n_classes < 2:
        raise ValueError("need at least two classes")
    d = hidden_dims[-1]
    if attention and d % heads != 0:
        raise ValueError(f"hidden dim {d} must be divisible by {heads} heads")
    rng = _rng(seed)

    def uniform(fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
        limit = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-limit, limit, size=shape)

    layers = []
    d_in = input_dim
    for d_hidden in hidden_dims:
        gates_x = [uniform(d_in, (d_in, d_hidden)) for _ in range(4)]
        gates_h = [uniform(d_hidden, (d_hidden, d_hidden)) for _ in range(4)]
        biases = [np.zeros(d_hidden) for _ in range(4)]
        biases[1][:] = forget_bias
        layers.append(LstmLayerParams(*gates_x, *gates_h, *biases))
        d_in = d_hidden

    d_k = d // heads
    mha = MhaParams(
        w_q=uniform(d, (heads, d, d_k)),
        w_k=uniform(d, (heads, d, d_k)),
        w_v=uniform(d, (heads, d, d_k)),
        w_o=uniform(d, (d, d)),
    )
    out_dim = 1 if n_classes == 2 else n_classes
    model = ModelParams(
        lstm_layers=layers,
        mha=mha,
        norm_gain=np.ones(d),
        norm_bias=np.zeros(d),
        head_w=uniform(l_max * d, (l_max * d, out_dim)),
        head_b=np.zeros(out_dim),
        input_dim=input_dim,
        l_max=l_max,
        n_classes=n_classes,
        dropout_rate=dropout_rate,
        mask_padding=mask_padding,
        attention_enabled=attention,
    )
    model.validate()
    return model


def named_parameters(model: ModelParams) -> list[tuple[str, np.ndarray]]:
    """Stable (name, array) listing; arrays are live views, not copies."""
    out: list[tuple[str, np.ndarray]] = []
    for i, layer in enumerate(model.lstm_layers):
        for gate in ("i", "f", "g", "o"):
            out.append((f"lstm{i}.w_x{gate}", getattr(layer, f"w_x{gate}")))
        for gate in ("i", "f", "g", "o"):
            out.append((f"lstm{i}.w_h{gate}", getattr(layer, f"w_h{gate}")))
        for gate in ("i", "f", "g", "o"):
            out.append((f"lstm{i}.b_{gate}", getattr(layer, f"b_{gate}")))
    for j in range(model.mha.head_count):
        out.append((f"mha.h{j}.w_q", model.mha.w_q[j]))
        out.append((f"mha.h{j}.w_k", model.mha.w_k[j]))
        out.append((f"mha.h{j}.w_v", model.mha.w_v[j]))
    out.append(("mha.w_o", model.mha.w_o))
    out.append(("norm.gain", model.norm_gain))
    out.append(("norm.bias", model.norm_bias))
    out.append(("head.w", model.head_w))
    out.append(("head.b", model.head_b))
    return out


def clone_model(model: ModelParams) -> ModelParams:
    layers = [
        LstmLayerParams(
            *(getattr(l, f"w_x{g}").copy() for g in "ifgo"),
            *(getattr(l, f"w_h{g}").copy() for g in "ifgo"),
            *(getattr(l, f"b_{g}").copy() for g in "ifgo"),
        )
        for l in model.lstm_layers
    ]
    mha = MhaParams(
        model.mha.w_q.copy(), model.mha.w_k.copy(),
        model.mha.w_v.copy(), model.mha.w_o.copy(),
    )
    return ModelParams(
        layers, mha,
        model.norm_gain.copy(), model.norm_bias.copy(),
        model.head_w.copy(), model.head_b.copy(),
        model.input_dim, model.l_max, model.n_classes,
        model.dropout_rate, model.mask_padding, model.attention_enabled,
    )


# ---------------------------------------------------------------------------
# forward building blocks
# ---------------------------------------------------------------------------

def lstm_cell_step(
    x: np.ndarray,
    state: tuple[np.ndarray, np.ndarray],
    params: LstmLayerParams,
) -> tuple[np.ndarray, np.ndarray]:
    """One LSTM step: returns (h', c') for input x and state (h, c).

    Standard cell: i, f, o are logistic gates, g the tanh candidate,
    c' = f*c + i*g and h' = o*tanh(c').  Works on a single vector or on
    a batch of row vectors.
    """
    h, c = state
    i = sigmoid(x @ params.w_xi + h @ params.w_hi + params.b_i)
    f = sigmoid(x @ params.w_xf + h @ params.w_hf + params.b_f)
    g = np.tanh(x @ params.w_xg + h @ params.w_hg + params.b_g)
    o = sigmoid(x @ params.w_xo + h @ params.w_ho + params.b_o)
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new


@dataclass
class LstmLayerTrace:
    """Per-layer activation record used by backpropagation through time."""

    inputs: np.ndarray      # (N, T, d_in)
    i: np.ndarray           # gate activations, each (N, T, H)
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray           # cell states
    tanh_c: np.ndarray
    h: np.ndarray           # hidden states


def _lstm_layer_forward(
    x_seq: np.ndarray, params: LstmLayerParams
) -> LstmLayerTrace:
    n, t_len, _ = x_seq.shape
    hd = params.hidden_dim
    # input projections for the whole sequence in four matmuls
    ax_i = x_seq @ params.w_xi + params.b_i
    ax_f = x_seq @ params.w_xf + params.b_f
    ax_g = x_seq @ params.w_xg + params.b_g
    ax_o = x_seq @ params.w_xo + params.b_o
    gi = np.empty((n, t_len, hd))
    gf = np.empty((n, t_len, hd))
    gg = np.empty((n, t_len, hd))
    go = np.empty((n, t_len, hd))
    cs = np.empty((n, t_len, hd))
    tc = np.empty((n, t_len, hd))
    hs = np.empty((n, t_len, hd))
    h = np.zeros((n, hd))
    c = np.zeros((n, hd))
    for t in range(t_len):
        i = sigmoid(ax_i[:, t] + h @ params.w_hi)
        f = sigmoid(ax_f[:, t] + h @ params.w_hf)
        g = np.tanh(ax_g[:, t] + h @ params.w_hg)
        o = sigmoid(ax_o[:, t] + h @ params.w_ho)
        c = f * c + i * g
        tanh_c = np.tanh(c)
        h = o * tanh_c
        gi[:, t], gf[:, t], gg[:, t], go[:, t] = i, f, g, o
        cs[:, t], tc[:, t], hs[:, t] = c, tanh_c, h
    return LstmLayerTrace(x_seq, gi, gf, gg, go, cs, tc, hs)


def stacked_lstm_forward(
    x_seq: np.ndarray, layers: list[LstmLayerParams]
) -> tuple[np.ndarray, list[LstmLayerTrace]]:
    """Run the LSTM stack from zero initial states.

    Accepts (T, D) for a single sequence or (N, T, D) for a batch;
    returns the top layer's hidden sequence in the matching shape plus
    the per-layer traces.
    """
    squeeze = x_seq.ndim == 2
    x = np.asarray(x_seq, dtype=np.float64)
    if squeeze:
        x = x[None]
    traces = []
    for params in layers:
        trace = _lstm_layer_forward(x, params)
        traces.append(trace)
        x = trace.h
    top = x[0] if squeeze else x
    return top, traces


def project_qkv(
    hidden: np.ndarray, params: MhaParams, head: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Q, K, V for one head: plain matrix products with its projections."""
    if not 0 <= head < params.head_count:
        raise ValueError(f"head {head} out of range [0, {params.head_count})")
    return (
        hidden @ params.w_q[head],
        hidden @ params.w_k[head],
        hidden @ params.w_v[head],
    )


def attention_probs(
    q: np.ndarray, k: np.ndarray, key_mask: np.ndarray | None = None
) -> np.ndarray:
    """Row-stochastic attention weights softmax(Q K^T / sqrt(d_k))."""
    d_k = q.shape[-1]
    scores = (q @ np.swapaxes(k, -1, -2)) / np.sqrt(d_k)
    if key_mask is not None:
        scores = np.where(key_mask, scores, -np.inf)
    return softmax_rows(scores)


def scaled_dot_attention(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    key_mask: np.ndarray | None = None,
) -> np.ndarray:
    """softmax(Q K^T / sqrt(d_k)) V over the trailing two axes."""
    return attention_probs(q, k, key_mask) @ v


def multi_head_attention(
    hidden: np.ndarray,
    params: MhaParams,
    key_mask: np.ndarray | None = None,
) -> tuple[np.ndarray, dict]:
    """All heads in parallel; returns the projected output and a cache.

    ``hidden`` is (N, T, d); ``key_mask`` an optional boolean (N, T)
    marking which key positions may be attended to.  The cache holds q,
    k, v (N, h, T, d_k), the per-head weights (N, h, T, T) and the
    concatenated head outputs, all needed by the backward pass.
    """
    q = np.einsum("ntd,hdk->nhtk", hidden, params.w_q)
    k = np.einsum("ntd,hdk->nhtk", hidden, params.w_k)
    v = np.einsum("ntd,hdk->nhtk", hidden, params.w_v)
    mask = None
    if key_mask is not None:
        mask = key_mask[:, None, None, :]  # broadcast over heads and queries
    probs = attention_probs(q, k, mask)
    per_head = probs @ v  # (N, h, T, d_k)
    n, h, t_len, d_k = per_head.shape
    concat = per_head.transpose(0, 2, 1, 3).reshape(n, t_len, h * d_k)
    out = concat @ params.w_o
    cache = {"q": q, "k": k, "v": v, "probs": probs, "concat": concat}
    return out, cache


def _layer_norm(
    z: np.ndarray, gain: np.ndarray, bias: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = z.mean(axis=-1, keepdims=True)
    var = z.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LAYERNORM_EPS)
    x_hat = (z - mean) * inv_std
    return gain * x_hat + bias, x_hat, inv_std


def fuse_and_normalize(
    hidden: np.ndarray,
    attended: np.ndarray,
    gain: np.ndarray,
    bias: np.ndarray,
) -> np.ndarray:
    """Residual add then row-wise layer normalization with learned gain/bias."""
    if hidden.shape != attended.shape:
        raise ValueError(f"shape mismatch {hidden.shape} vs {attended.shape}")
    out, _, _ = _layer_norm(hidden + attended, gain, bias)
    return out


def classify(
    z: np.ndarray, head_w: np.ndarray, head_b: np.ndarray, n_classes: int
) -> np.ndarray:
    """Flatten (T, d) or (N, T, d) row-major and apply the linear head.

    Binary models use a single logistic output: the return value is the
    probability of class 1.  For K > 2 a softmax probability vector per
    row is returned.
    """
    z = np.asarray(z, dtype=np.float64)
    squeeze = z.ndim == 2
    if squeeze:
        z = z[None]
    n, t_len, d = z.shape
    if t_len * d != head_w.shape[0]:
        raise ValueError(
            f"sequence length {t_len} x dim {d} does not match the "
            f"classifier input size {head_w.shape[0]} (padded length fixed "
            f"at training time)"
        )
    logits = z.reshape(n, t_len * d) @ head_w + head_b
    if n_classes == 2:
        probs = sigmoid(logits[:, 0])
    else:
        probs = softmax_rows(logits)
    return probs[0] if squeeze else probs


# ---------------------------------------------------------------------------
# full forward
# ---------------------------------------------------------------------------

@dataclass
class ForwardTrace:
    """Every intermediate of one forward call.

    ``attn_probs`` rows are row-stochastic (each sums to 1); ``lstm``
    holds one :class:`LstmLayerTrace` per layer, top layer last.
    """

    lstm: list[LstmLayerTrace]
    attn_cache: dict | None
    fused_prenorm: np.ndarray | None
    ln_x_hat: np.ndarray | None
    ln_inv_std: np.ndarray | None
    normalized: np.ndarray | None
    dropout_mask: np.ndarray | None
    classifier_input: np.ndarray
    logits: np.ndarray
    probs: np.ndarray
    mode: str
    seed: int
    key_mask: np.ndarray | None = None

    @property
    def hidden_sequences(self) -> list[np.ndarray]:
        return [layer.h for layer in self.lstm]

    @property
    def attn_probs(self) -> np.ndarray | None:
        return None if self.attn_cache is None else self.attn_cache["probs"]


def forward(
    batch: PaddedBatch,
    model: ModelParams,
    mode: str = "eval",
    seed: int = 0,
) -> tuple[np.ndarray, ForwardTrace]:
    """Full composition: LSTM stack, attention, fuse+norm, dropout, head.

    ``mode`` is "eval" (deterministic, no dropout) or "train" (inverted
    dropout with a mask drawn from ``seed``).  Returns class-1
    probabilities for binary models, (N, K) probabilities otherwise.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if batch.feature_dim != model.input_dim:
        raise ValueError(
            f"batch feature dim {batch.feature_dim} != model input dim "
            f"{model.input_dim}"
        )
    if batch.l_max != model.l_max:
        raise ValueError(f"batch L_max {batch.l_max} != model L_max {model.l_max}")

    x = np.asarray(batch.data, dtype=np.float64)
    hidden, lstm_traces = stacked_lstm_forward(x, model.lstm_layers)

    attn_cache = None
    fused = None
    x_hat = None
    inv_std = None
    normalized = None
    key_mask = None
    if model.attention_enabled:
        if model.mask_padding:
            positions = np.arange(model.l_max)
            key_mask = positions[None, :] < batch.valid_lengths[:, None]
        attended, attn_cache = multi_head_attention(hidden, model.mha, key_mask)
        fused = hidden + attended
        normalized, x_hat, inv_std = _layer_norm(
            fused, model.norm_gain, model.norm_bias
        )
        pre_head = normalized
    else:
        pre_head = hidden

    dropout_mask = None
    if mode == "train" and model.dropout_rate > 0.0:
        rng = _rng(seed)
        keep = 1.0 - model.dropout_rate
        dropout_mask = (rng.random(pre_head.shape) < keep) / keep
        pre_head = pre_head * dropout_mask

    n = batch.size
    flat = pre_head.reshape(n, model.l_max * model.model_dim)
    logits = flat @ model.head_w + model.head_b
    if model.n_classes == 2:
        probs = sigmoid(logits[:, 0])
    else:
        probs = softmax_rows(logits)

    trace = ForwardTrace(
        lstm=lstm_traces,
        attn_cache=attn_cache,
        fused_prenorm=fused,
        ln_x_hat=x_hat,
        ln_inv_std=inv_std,
        normalized=normalized,
        dropout_mask=dropout_mask,
        classifier_input=flat,
        logits=logits,
        probs=probs,
        mode=mode,
        seed=seed,
        key_mask=key_mask,
    )
    return probs, trace


def attention_summary(
    trace: ForwardTrace, valid_length: int, item: int = 0
) -> np.ndarray:
    """Per-position importance: mean attention received by each key.

    Averages the recorded weights over heads and over the ``valid_length``
    real query rows of one batch item, then renormalizes to sum to 1.
    """
    if trace.attn_probs is None:
        raise ValueError("trace holds no attention weights (attention disabled)")
    probs = trace.attn_probs[item]  # (h, T, T)
    if not 1 <= valid_length <= probs.shape[-1]:
        raise ValueError(f"valid_length {valid_length} outside [1, {probs.shape[-1]}]")
    importance = probs[:, :valid_length, :].mean(axis=(0, 1))
    return importance / importance.sum()


# ---------------------------------------------------------------------------
# model files
# magic "SQFM", version u8=1, little-endian; header D, L_max, layer count +
# dims, heads, K (all u32), dropout f32, flags u8; then named f64 blobs.
# ---------------------------------------------------------------------------

def save_model(model: ModelParams, path: str | Path) -> None:
    params = named_parameters(model)
    flags = 0
    if model.mask_padding:
        flags |= _FLAG_MASK_PADDING
    if not model.attention_enabled:
        flags |= _FLAG_ATTENTION_OFF
    dims = model.hidden_dims
    parts = [
        struct.pack(
            f"<4sBIII{len(dims)}IIIfBI",
            MODEL_MAGIC,
            MODEL_VERSION,
            model.input_dim,
            model.l_max,
            len(dims),
            *dims,
            model.mha.head_count,
            model.n_classes,
            model.dropout_rate,
            flags,
            len(params),
        )
    ]
    for name, arr in params:
        name_b = name.encode("utf-8")
        mat = np.atleast_2d(np.asarray(arr, dtype="<f8"))
        parts.append(struct.pack("<H", len(name_b)))
        parts.append(name_b)
        parts.append(struct.pack("<II", mat.shape[0], mat.shape[1]))
        parts.append(mat.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_model(path: str | Path) -> ModelParams:
    blob = Path(path).read_bytes()
    if len(blob) < 5 or blob[:4] != MODEL_MAGIC:
        raise FormatError(f"{path}: not a model file (bad magic)")
    if blob[4] != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model version {blob[4]}")
    off = 5

    def take(fmt: str):
        nonlocal off
        size = struct.calcsize(fmt)
        if len(blob) < off + size:
            raise FormatError(f"{path}: truncated header")
        vals = struct.unpack_from(fmt, blob, off)
        off += size
        return vals

    input_dim, l_max, n_layers = take("<III")
    dims = take(f"<{n_layers}I")
    heads, n_classes = take("<II")
    (dropout,) = take("<f")
    (flags,) = take("<B")
    (n_params,) = take("<I")

    blobs: dict[str, np.ndarray] = {}
    for _ in range(n_params):
        (name_len,) = take("<H")
        if len(blob) < off + name_len:
            raise FormatError(f"{path}: truncated parameter name")
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        rows, cols = take("<II")
        count = rows * cols
        if len(blob) < off + count * 8:
            raise FormatError(f"{path}: truncated data for {name}")
        blobs[name] = (
            np.frombuffer(blob, dtype="<f8", count=count, offset=off)
            .reshape(rows, cols)
            .copy()
        )
        off += count * 8
    if off != len(blob):
        raise FormatError(f"{path}: {len(blob) - off} trailing bytes")

    model = init_model(
        input_dim=input_dim,
        l_max=l_max,
        n_classes=n_classes,
        hidden_dims=tuple(dims),
        heads=heads,
        dropout_rate=float(np.float32(dropout)),
        seed=0,
        mask_padding=bool(flags & _FLAG_MASK_PADDING),
        attention=not flags & _FLAG_ATTENTION_OFF,
    )
    expected = dict(named_parameters(model))
    missing = set(expected) - set(blobs)
    unknown = set(blobs) - set(expected)
    if missing or unknown:
        raise FormatError(
            f"{path}: parameter names do not match architecture "
            f"(missing {sorted(missing)}, unknown {sorted(unknown)})"
        )
    for name, arr in expected.items():
        stored = blobs[name].reshape(arr.shape)
        arr[...] = stored
    return model
