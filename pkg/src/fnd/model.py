"""Transformer encoder classifier with forward and backward passes in numpy.

Architecture: token + learned position embeddings, n_layers of post-LN
encoder blocks (masked multi-head self-attention, then a ReLU feed-forward,
each wrapped in residual + layer norm), first-position pooling, and a
classification head of Linear->Dropout->ReLU, Linear->Dropout->ReLU,
Linear->Dropout->Softmax (3 linear, 3 dropout, 2 ReLU, 1 softmax).

All gradients are computed analytically; there is no autograd anywhere.
Dropout is inverted (activations scaled by 1/(1-p) at train time) and is
a pure function of dropout_seed and the batch shape, so finite-difference
checks stay valid in train mode.
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .tokenizer import Encoding

MODEL_MAGIC = b"FNDM"
MODEL_VERSION = 1
ATTENTION_MASK_BIAS = -1e9  # exp() underflows to exactly 0, so pads get zero weight


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    max_len: int = 128
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    head_hidden: tuple[int, int] = (64, 32)
    head_dropout: float = 0.0
    encoder_dropout: float = 0.0
    n_classes: int = 2
    layer_norm_eps: float = 1e-12

    def __post_init__(self) -> None:
        if self.vocab_size < 1 or self.max_len < 1 or self.d_model < 1:
            raise ValidationError("vocab_size, max_len and d_model must be positive")
        if self.d_model % self.n_heads != 0:
            raise ValidationError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})"
            )
        for name in ("head_dropout", "encoder_dropout"):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0:
                raise ValidationError(f"{name} must lie in [0, 1), got {p}")
        if self.n_classes != 2:
            raise ValidationError("this classifier is strictly binary (n_classes must be 2)")
        if len(self.head_hidden) != 2:
            raise ValidationError("head_hidden must give the widths of the two hidden head layers")
        if self.layer_norm_eps <= 0:
            raise ValidationError("layer_norm_eps must be positive")
        object.__setattr__(self, "head_hidden", tuple(self.head_hidden))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["head_hidden"] = list(self.head_hidden)
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        raw = dict(raw)
        if "head_hidden" in raw:
            raw["head_hidden"] = tuple(raw["head_hidden"])
        unknown = set(raw) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValidationError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**raw)


class ParameterSet:
    """Ordered name -> ndarray map.

    The enumeration order is fixed by parameter_shapes() and is the
    contract for serialization, optimizer state and gradient checks.
    """

    def __init__(self, arrays: "OrderedDict[str, np.ndarray]"):
        self.arrays = arrays

    def names(self) -> list[str]:
        return list(self.arrays)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        self.arrays[name] = value

    def __iter__(self):
        return iter(self.arrays)

    def __len__(self) -> int:
        return len(self.arrays)

    def items(self):
        return self.arrays.items()

    def copy(self) -> "ParameterSet":
        return ParameterSet(OrderedDict((k, v.copy()) for k, v in self.arrays.items()))

    def zeros_like(self) -> "ParameterSet":
        return ParameterSet(OrderedDict((k, np.zeros_like(v)) for k, v in self.arrays.items()))

    def assert_finite(self, context: str = "parameters") -> None:
        for name, arr in self.arrays.items():
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"non-finite values in {context}: {name}")


def parameter_shapes(cfg: ModelConfig) -> "OrderedDict[str, tuple[int, ...]]":
    """The flat enumeration order of every trainable tensor."""
    shapes: "OrderedDict[str, tuple[int, ...]]" = OrderedDict()
    d, ff = cfg.d_model, cfg.d_ff
    shapes["tok_emb"] = (cfg.vocab_size, d)
    shapes["pos_emb"] = (cfg.max_len, d)
    for i in range(cfg.n_layers):
        p = f"layer{i}."
        for proj in ("q", "k", "v", "o"):
            shapes[p + f"attn.w{proj}"] = (d, d)
            shapes[p + f"attn.b{proj}"] = (d,)
        shapes[p + "ln1.g"] = (d,)
        shapes[p + "ln1.b"] = (d,)
        shapes[p + "ffn.w1"] = (d, ff)
        shapes[p + "ffn.b1"] = (ff,)
        shapes[p + "ffn.w2"] = (ff, d)
        shapes[p + "ffn.b2"] = (d,)
        shapes[p + "ln2.g"] = (d,)
        shapes[p + "ln2.b"] = (d,)
    h1, h2 = cfg.head_hidden
    shapes["head.lin1.w"] = (d, h1)
    shapes["head.lin1.b"] = (h1,)
    shapes["head.lin2.w"] = (h1, h2)
    shapes["head.lin2.b"] = (h2,)
    shapes["head.lin3.w"] = (h2, cfg.n_classes)
    shapes["head.lin3.b"] = (cfg.n_classes,)
    return shapes


def _trunc_normal(rng: np.random.Generator, shape, std: float, dtype) -> np.ndarray:
    """Normal(0, std) with draws outside +/-2 std resampled."""
    x = rng.normal(0.0, std, size=shape)
    bound = 2.0 * std
    bad = np.abs(x) > bound
    while bad.any():
        x[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(x) > bound
    return x.astype(dtype)


def init_params(cfg: ModelConfig, seed: int, dtype=np.float32) -> ParameterSet:
    """Truncated-normal weights (std 0.02), zero biases, unit layer-norm gains."""
    rng = np.random.default_rng(seed)
    arrays: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, shape in parameter_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "g":
            arrays[name] = np.ones(shape, dtype=dtype)
        elif leaf.startswith("b"):
            arrays[name] = np.zeros(shape, dtype=dtype)
        else:
            arrays[name] = _trunc_normal(rng, shape, 0.02, dtype)
    params = ParameterSet(arrays)
    params.assert_finite("initialized parameters")
    return params


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max subtraction makes it shift-invariant)."""
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


@dataclass
class ForwardTrace:
    logits: np.ndarray
    probabilities: np.ndarray
    cache: dict = field(repr=False)
    head_relu_count: int = 0
    train_mode: bool = False
    dropout_seed: int = 0


def _ln_forward(x, g, b, eps):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    return g * xhat + b, xhat, inv_std


def _ln_backward(dy, xhat, inv_std, g):
    dxhat = dy * g
    dg = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))
    mean1 = dxhat.mean(axis=-1, keepdims=True)
    mean2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv_std * (dxhat - mean1 - xhat * mean2)
    return dx, dg, db


def _dropout_mask(rng, shape, p, dtype):
    # inverted dropout: scale kept units by 1/(1-p) so inference needs no rescaling
    return (rng.random(shape) >= p).astype(dtype) / (1.0 - p)


def _split_heads(x, n_heads):
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def _validate_batch(cfg: ModelConfig, batch: Sequence[Encoding]) -> tuple[np.ndarray, np.ndarray]:
    if not batch:
        raise ValidationError("forward needs a non-empty batch")
    lengths = {len(e.ids) for e in batch}
    if len(lengths) != 1:
        raise ValidationError(f"encodings in a batch must share one length, got {sorted(lengths)}")
    t = lengths.pop()
    if t > cfg.max_len:
        raise ValidationError(f"sequence length {t} exceeds max_len {cfg.max_len}")
    ids = np.array([e.ids for e in batch], dtype=np.int64)
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise ValidationError(
            f"token id out of range: ids must lie in [0, {cfg.vocab_size}), got "
            f"[{ids.min()}, {ids.max()}]"
        )
    mask = np.array([e.attention_mask for e in batch], dtype=np.int64)
    return ids, mask


def forward(
    params: ParameterSet,
    cfg: ModelConfig,
    batch: Sequence[Encoding],
    train_mode: bool = False,
    dropout_seed: int = 0,
) -> ForwardTrace:
    """Run the classifier, caching what the backward pass needs.

    Padding positions are excluded from attention via a large negative
    score bias; the pooled representation is the first-position ([CLS])
    hidden state.  Dropout fires only in train_mode and is deterministic
    per dropout_seed.
    """
    ids, int_mask = _validate_batch(cfg, batch)
    dtype = params["tok_emb"].dtype
    b, t = ids.shape
    rng = np.random.default_rng(dropout_seed)
    enc_p, head_p = cfg.encoder_dropout, cfg.head_dropout

    x = params["tok_emb"][ids] + params["pos_emb"][:t]
    x = x.astype(dtype)
    key_bias = ((1 - int_mask) * ATTENTION_MASK_BIAS).astype(dtype)[:, None, None, :]

    layer_caches = []
    scale = 1.0 / np.sqrt(cfg.d_model // cfg.n_heads)
    for i in range(cfg.n_layers):
        p = f"layer{i}."
        x_in = x
        q = x_in @ params[p + "attn.wq"] + params[p + "attn.bq"]
        k = x_in @ params[p + "attn.wk"] + params[p + "attn.bk"]
        v = x_in @ params[p + "attn.wv"] + params[p + "attn.bv"]
        qh, kh, vh = (_split_heads(a, cfg.n_heads) for a in (q, k, v))
        scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale + key_bias
        attn = softmax(scores, axis=-1)
        ctx = _merge_heads(attn @ vh)
        attn_out = ctx @ params[p + "attn.wo"] + params[p + "attn.bo"]
        attn_drop = None
        if train_mode and enc_p > 0:
            attn_drop = _dropout_mask(rng, attn_out.shape, enc_p, dtype)
            attn_out = attn_out * attn_drop
        x1, xhat1, inv1 = _ln_forward(
            x_in + attn_out, params[p + "ln1.g"], params[p + "ln1.b"], cfg.layer_norm_eps
        )
        z_ff = x1 @ params[p + "ffn.w1"] + params[p + "ffn.b1"]
        h_ff = np.maximum(z_ff, 0)
        f = h_ff @ params[p + "ffn.w2"] + params[p + "ffn.b2"]
        ffn_drop = None
        if train_mode and enc_p > 0:
            ffn_drop = _dropout_mask(rng, f.shape, enc_p, dtype)
            f = f * ffn_drop
        x2, xhat2, inv2 = _ln_forward(
            x1 + f, params[p + "ln2.g"], params[p + "ln2.b"], cfg.layer_norm_eps
        )
        layer_caches.append(
            dict(
                x_in=x_in, qh=qh, kh=kh, vh=vh, attn=attn, ctx=ctx,
                attn_drop=attn_drop, xhat1=xhat1, inv1=inv1, x1=x1,
                z_ff=z_ff, h_ff=h_ff, ffn_drop=ffn_drop, xhat2=xhat2, inv2=inv2,
            )
        )
        x = x2

    pooled = x[:, 0, :]

    head_relu_count = 0
    z1 = pooled @ params["head.lin1.w"] + params["head.lin1.b"]
    drop1 = _dropout_mask(rng, z1.shape, head_p, dtype) if train_mode and head_p > 0 else None
    d1 = z1 * drop1 if drop1 is not None else z1
    r1 = np.maximum(d1, 0)
    head_relu_count += 1
    z2 = r1 @ params["head.lin2.w"] + params["head.lin2.b"]
    drop2 = _dropout_mask(rng, z2.shape, head_p, dtype) if train_mode and head_p > 0 else None
    d2 = z2 * drop2 if drop2 is not None else z2
    r2 = np.maximum(d2, 0)
    head_relu_count += 1
    z3 = r2 @ params["head.lin3.w"] + params["head.lin3.b"]
    drop3 = _dropout_mask(rng, z3.shape, head_p, dtype) if train_mode and head_p > 0 else None
    logits = z3 * drop3 if drop3 is not None else z3
    probabilities = softmax(logits, axis=-1)

    cache = dict(
        ids=ids, layers=layer_caches, pooled=pooled,
        d1=d1, r1=r1, d2=d2, r2=r2,
        drop1=drop1, drop2=drop2, drop3=drop3,
        seq_len=t, batch_size=b,
    )
    return ForwardTrace(
        logits=logits,
        probabilities=probabilities,
        cache=cache,
        head_relu_count=head_relu_count,
        train_mode=train_mode,
        dropout_seed=dropout_seed,
    )


def backward(
    trace: ForwardTrace, params: ParameterSet, cfg: ModelConfig, labels: Sequence[int]
) -> ParameterSet:
    """Analytic gradients of the mean cross-entropy loss for every parameter.

    Returns a gradient set with the exact shape and enumeration of the
    ParameterSet.  The combined softmax + cross-entropy derivative
    (probabilities - one_hot) / batch seeds the chain.
    """
    cache = trace.cache
    b, t = cache["batch_size"], cache["seq_len"]
    if len(labels) != b:
        raise ValidationError(f"got {len(labels)} labels for a batch of {b}")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() > 1:
        raise ValidationError("labels must be 0 or 1")

    grads = ParameterSet(
        OrderedDict((k, np.zeros_like(v)) for k, v in params.items())
    )
    one_hot = np.eye(cfg.n_classes, dtype=trace.probabilities.dtype)[labels]
    dlogits = (trace.probabilities - one_hot) / b

    # head, reversed
    dz3 = dlogits * cache["drop3"] if cache["drop3"] is not None else dlogits
    grads["head.lin3.w"] += cache["r2"].T @ dz3
    grads["head.lin3.b"] += dz3.sum(axis=0)
    dr2 = dz3 @ params["head.lin3.w"].T
    dd2 = dr2 * (cache["d2"] > 0)
    dz2 = dd2 * cache["drop2"] if cache["drop2"] is not None else dd2
    grads["head.lin2.w"] += cache["r1"].T @ dz2
    grads["head.lin2.b"] += dz2.sum(axis=0)
    dr1 = dz2 @ params["head.lin2.w"].T
    dd1 = dr1 * (cache["d1"] > 0)
    dz1 = dd1 * cache["drop1"] if cache["drop1"] is not None else dd1
    grads["head.lin1.w"] += cache["pooled"].T @ dz1
    grads["head.lin1.b"] += dz1.sum(axis=0)
    dpooled = dz1 @ params["head.lin1.w"].T

    dx = np.zeros((b, t, cfg.d_model), dtype=trace.probabilities.dtype)
    dx[:, 0, :] = dpooled

    scale = 1.0 / np.sqrt(cfg.d_model // cfg.n_heads)
    for i in reversed(range(cfg.n_layers)):
        p = f"layer{i}."
        lc = cache["layers"][i]

        ds2, dg2, db2 = _ln_backward(dx, lc["xhat2"], lc["inv2"], params[p + "ln2.g"])
        grads[p + "ln2.g"] += dg2
        grads[p + "ln2.b"] += db2
        df = ds2 * lc["ffn_drop"] if lc["ffn_drop"] is not None else ds2
        grads[p + "ffn.w2"] += np.einsum("btf,btd->fd", lc["h_ff"], df)
        grads[p + "ffn.b2"] += df.sum(axis=(0, 1))
        dh = df @ params[p + "ffn.w2"].T
        dz_ff = dh * (lc["z_ff"] > 0)
        grads[p + "ffn.w1"] += np.einsum("btd,btf->df", lc["x1"], dz_ff)
        grads[p + "ffn.b1"] += dz_ff.sum(axis=(0, 1))
        dx1 = ds2 + dz_ff @ params[p + "ffn.w1"].T

        ds1, dg1, db1 = _ln_backward(dx1, lc["xhat1"], lc["inv1"], params[p + "ln1.g"])
        grads[p + "ln1.g"] += dg1
        grads[p + "ln1.b"] += db1
        dattn_out = ds1 * lc["attn_drop"] if lc["attn_drop"] is not None else ds1
        grads[p + "attn.wo"] += np.einsum("btd,bte->de", lc["ctx"], dattn_out)
        grads[p + "attn.bo"] += dattn_out.sum(axis=(0, 1))
        dctx = _split_heads(dattn_out @ params[p + "attn.wo"].T, cfg.n_heads)

        dattn = dctx @ lc["vh"].transpose(0, 1, 3, 2)
        dvh = lc["attn"].transpose(0, 1, 3, 2) @ dctx
        # softmax jacobian, rowwise over the key axis
        dscores = lc["attn"] * (dattn - (dattn * lc["attn"]).sum(axis=-1, keepdims=True))
        dqh = (dscores @ lc["kh"]) * scale
        dkh = (dscores.transpose(0, 1, 3, 2) @ lc["qh"]) * scale

        dq, dk, dv = (_merge_heads(a) for a in (dqh, dkh, dvh))
        x_in = lc["x_in"]
        dx = ds1.copy()
        for name, dproj in (("q", dq), ("k", dk), ("v", dv)):
            grads[p + f"attn.w{name}"] += np.einsum("btd,bte->de", x_in, dproj)
            grads[p + f"attn.b{name}"] += dproj.sum(axis=(0, 1))
            dx += dproj @ params[p + f"attn.w{name}"].T

    ids = cache["ids"]
    np.add.at(grads["tok_emb"], ids.reshape(-1), dx.reshape(-1, cfg.d_model))
    grads["pos_emb"][:t] += dx.sum(axis=0)
    return grads


def predict(
    params: ParameterSet, cfg: ModelConfig, batch: Sequence[Encoding]
) -> list[tuple[int, float]]:
    """(label, confidence) per document; ties resolve to label 0, dropout off."""
    trace = forward(params, cfg, batch, train_mode=False)
    out = []
    for row in trace.probabilities:
        label = 1 if row[1] > row[0] else 0
        out.append((label, float(row[label])))
    return out


# --- serialization ----------------------------------------------------------


def write_model(f, cfg: ModelConfig, params: ParameterSet) -> None:
    header = {
        "config": cfg.to_dict(),
        "tensors": [[name, list(arr.shape)] for name, arr in params.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    f.write(MODEL_MAGIC)
    f.write(struct.pack("<B", MODEL_VERSION))
    f.write(struct.pack("<I", len(blob)))
    f.write(blob)
    for _, arr in params.items():
        f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_model(f) -> tuple[ModelConfig, ParameterSet]:
    magic = f.read(4)
    if magic != MODEL_MAGIC:
        raise ValidationError(f"not a model file (magic {magic!r})")
    (version,) = struct.unpack("<B", f.read(1))
    if version != MODEL_VERSION:
        raise ValidationError(f"unsupported model file version {version}")
    (hlen,) = struct.unpack("<I", f.read(4))
    header = json.loads(f.read(hlen).decode("utf-8"))
    cfg = ModelConfig.from_dict(header["config"])
    expected = parameter_shapes(cfg)
    arrays: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, shape in header["tensors"]:
        shape = tuple(shape)
        if name not in expected or expected[name] != shape:
            raise ValidationError(f"unexpected tensor {name} {shape} in model file")
        count = int(np.prod(shape)) if shape else 1
        raw = f.read(count * 4)
        if len(raw) != count * 4:
            raise ValidationError(f"truncated model file while reading {name}")
        arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
    if list(arrays) != list(expected):
        raise ValidationError("model file tensor enumeration does not match the config")
    return cfg, ParameterSet(arrays)


def save_model(path: str | Path, cfg: ModelConfig, params: ParameterSet) -> None:
    """Write config + tensors (little-endian float32, enumeration order)."""
    with open(path, "wb") as f:
        write_model(f, cfg, params)


def load_model(path: str | Path) -> tuple[ModelConfig, ParameterSet]:
    with open(path, "rb") as f:
        return read_model(f)
