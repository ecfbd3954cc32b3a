"""Variable-length transformer regressor for cross-host bandwidth.

One token per involved host: (host-type index, selected-GPU count, exact
intra-host bandwidth of the host projection, host uplink). Three encoder
blocks without positional encoding feed a mean-pool and three dense layers,
so the output is invariant to token order. Forward and backward passes are
written out in numpy; ``gradient_check`` compares the analytic gradients
against central finite differences.
"""

from __future__ import annotations

import logging
import struct
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from .topology import ClusterTopology, host_type_index, mask_of, split_by_host

if TYPE_CHECKING:  # pragma: no cover
    from .dataspace import IntraHostTable

logger = logging.getLogger(__name__)

TOKEN_DIM = 4
ENCODER_LAYERS = 3
DENSE_LAYERS = 3
LN_EPS = 1e-5
MIN_BW_GBPS = 0.1
_MAGIC = b"GPBW"
_FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Raised for corrupt, truncated, or dimension-mismatched model files."""


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""


def _param_specs(token_dim: int, d: int, ff: int) -> list[tuple[str, tuple[int, ...]]]:
    specs: list[tuple[str, tuple[int, ...]]] = [("embed_w", (token_dim, d)), ("embed_b", (d,))]
    for i in range(ENCODER_LAYERS):
        p = f"enc{i}_"
        specs += [
            (p + "wq", (d, d)), (p + "bq", (d,)),
            (p + "wk", (d, d)), (p + "bk", (d,)),
            (p + "wv", (d, d)), (p + "bv", (d,)),
            (p + "wo", (d, d)), (p + "bo", (d,)),
            (p + "ln1_g", (d,)), (p + "ln1_b", (d,)),
            (p + "ff_w1", (d, ff)), (p + "ff_b1", (ff,)),
            (p + "ff_w2", (ff, d)), (p + "ff_b2", (d,)),
            (p + "ln2_g", (d,)), (p + "ln2_b", (d,)),
        ]
    specs += [
        ("fc0_w", (d, d)), ("fc0_b", (d,)),
        ("fc1_w", (d, d)), ("fc1_b", (d,)),
        ("fc2_w", (d, 1)), ("fc2_b", (1,)),
    ]
    return specs


def _param_count(token_dim: int, d: int, ff: int) -> int:
    return sum(int(np.prod(shape)) for _, shape in _param_specs(token_dim, d, ff))


@dataclass
class PredictorModel:
    """Regressor parameters plus the normalization stats baked at training."""

    token_dim: int = TOKEN_DIM
    model_dim: int = 32
    head_count: int = 4
    ff_dim: int = 64
    params: np.ndarray = field(default=None)  # type: ignore[assignment]
    feat_mean: np.ndarray = field(default=None)  # type: ignore[assignment]
    feat_scale: np.ndarray = field(default=None)  # type: ignore[assignment]
    target_mean: float = 0.0
    target_scale: float = 1.0

    def __post_init__(self):
        if self.model_dim % self.head_count != 0:
            raise ModelFormatError(
                f"model_dim {self.model_dim} not divisible by head_count {self.head_count}"
            )
        expected = _param_count(self.token_dim, self.model_dim, self.ff_dim)
        if self.params is None:
            self.params = np.zeros(expected)
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.params.shape != (expected,):
            raise ModelFormatError(
                f"parameter count {self.params.size} does not match dims (expected {expected})"
            )
        if self.feat_mean is None:
            self.feat_mean = np.zeros(self.token_dim)
        if self.feat_scale is None:
            self.feat_scale = np.ones(self.token_dim)
        self.feat_mean = np.asarray(self.feat_mean, dtype=np.float64)
        self.feat_scale = np.asarray(self.feat_scale, dtype=np.float64)
        if self.feat_mean.shape != (self.token_dim,) or self.feat_scale.shape != (self.token_dim,):
            raise ModelFormatError("normalization stats do not match token_dim")
        self._views: dict[str, np.ndarray] = {}
        offset = 0
        for name, shape in _param_specs(self.token_dim, self.model_dim, self.ff_dim):
            size = int(np.prod(shape))
            self._views[name] = self.params[offset:offset + size].reshape(shape)
            offset += size

    def view(self, name: str) -> np.ndarray:
        """Named slice of the flat parameter vector (shares memory)."""
        return self._views[name]

    @property
    def n_params(self) -> int:
        return self.params.size

    def clone(self) -> "PredictorModel":
        return PredictorModel(
            token_dim=self.token_dim,
            model_dim=self.model_dim,
            head_count=self.head_count,
            ff_dim=self.ff_dim,
            params=self.params.copy(),
            feat_mean=self.feat_mean.copy(),
            feat_scale=self.feat_scale.copy(),
            target_mean=self.target_mean,
            target_scale=self.target_scale,
        )

    def predict_set(self, topo: ClusterTopology, tables: Mapping[int, "IntraHostTable"], s) -> float:
        """Featurize a GPU set against (topo, tables) and predict its bandwidth."""
        return predict(self, featurize(topo, tables, s))

    def to_bytes(self) -> bytes:
        head = struct.pack(
            "<4sIIIIIII",
            _MAGIC, _FORMAT_VERSION,
            self.token_dim, self.model_dim, self.head_count, self.ff_dim,
            ENCODER_LAYERS, DENSE_LAYERS,
        )
        stats = np.concatenate(
            [self.feat_mean, self.feat_scale, [self.target_mean, self.target_scale]]
        ).astype("<f8").tobytes()
        count = struct.pack("<Q", self.params.size)
        return head + stats + count + self.params.astype("<f8").tobytes()


def save_model(model: PredictorModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model.to_bytes())


def model_from_bytes(blob: bytes) -> PredictorModel:
    head_size = struct.calcsize("<4sIIIIIII")
    if len(blob) < head_size:
        raise ModelFormatError("truncated model file (no header)")
    magic, version, token_dim, d, heads, ff, enc, dense = struct.unpack("<4sIIIIIII", blob[:head_size])
    if magic != _MAGIC:
        raise ModelFormatError("corrupt model header (bad magic)")
    if version != _FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    if enc != ENCODER_LAYERS or dense != DENSE_LAYERS:
        raise ModelFormatError(f"layer counts {enc}/{dense} do not match the fixed 3/3 architecture")
    stats_n = 2 * token_dim + 2
    stats_end = head_size + 8 * stats_n
    if len(blob) < stats_end + 8:
        raise ModelFormatError("truncated model file (stats)")
    stats = np.frombuffer(blob[head_size:stats_end], dtype="<f8")
    (n_params,) = struct.unpack("<Q", blob[stats_end:stats_end + 8])
    expected = _param_count(token_dim, d, ff)
    if n_params != expected:
        raise ModelFormatError(f"parameter count {n_params} does not match dims (expected {expected})")
    body = blob[stats_end + 8:]
    if len(body) != 8 * n_params:
        raise ModelFormatError("truncated model file (parameters)")
    params = np.frombuffer(body, dtype="<f8").copy()
    return PredictorModel(
        token_dim=token_dim, model_dim=d, head_count=heads, ff_dim=ff,
        params=params,
        feat_mean=stats[:token_dim].copy(),
        feat_scale=stats[token_dim:2 * token_dim].copy(),
        target_mean=float(stats[-2]),
        target_scale=float(stats[-1]),
    )


def load_model(path) -> PredictorModel:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())


def init_model(
    seed: int = 0,
    model_dim: int = 32,
    head_count: int = 4,
    ff_dim: int = 64,
    token_dim: int = TOKEN_DIM,
) -> PredictorModel:
    """Xavier-initialized model; layer-norm gains start at 1."""
    model = PredictorModel(token_dim=token_dim, model_dim=model_dim, head_count=head_count, ff_dim=ff_dim)
    rng = np.random.default_rng([seed, 0x1417])
    for name, shape in _param_specs(token_dim, model_dim, ff_dim):
        v = model.view(name)
        if name.endswith("_g"):
            v[...] = 1.0
        elif len(shape) == 2:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            v[...] = rng.uniform(-limit, limit, size=shape)
        # biases and layer-norm shifts stay zero
    return model


def featurize(
    topo: ClusterTopology,
    tables: Mapping[int, "IntraHostTable"],
    s,
) -> np.ndarray:
    """Raw per-host feature tokens for a GPU set, host id ascending.

    Columns: host-type index, selected count, intra-host table bandwidth of
    the host projection, host uplink (GB/s). Normalization happens inside
    ``predict`` using the model's stored stats.
    """
    parts = split_by_host(topo, frozenset(s))
    if not parts:
        raise ValueError("cannot featurize the empty set")
    rows = []
    for host_id, local in parts:
        host = topo.hosts[host_id]
        intra = tables[host_id].entries[mask_of(local)]
        rows.append([float(host_type_index(host.host_type)), float(len(local)), float(intra), host.uplink_gbps])
    return np.asarray(rows, dtype=np.float64)


# ---------------------------------------------------------------------------
# forward / backward


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    b, h, d = x.shape
    return x.reshape(b, h, heads, d // heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, nh, h, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, h, nh * dh)


def _layernorm(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def _layernorm_backward(dout: np.ndarray, cache, g: np.ndarray):
    xhat, inv = cache
    lead = tuple(range(dout.ndim - 1))
    dg = (dout * xhat).sum(axis=lead)
    db = dout.sum(axis=lead)
    dxhat = dout * g
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    return dx, dg, db


def forward(model: PredictorModel, x: np.ndarray, want_cache: bool = False):
    """Normalized-scale forward pass over a batch of equal-length sequences.

    ``x`` has shape (B, H, token_dim) in raw feature units. Returns
    ``(y_norm, cache)``; the cache stores every intermediate needed by
    ``backward`` plus the per-layer attention probabilities.
    """
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[-1] != model.token_dim:
        raise ModelFormatError(f"input shape {x.shape} incompatible with token_dim {model.token_dim}")
    v = model.view
    heads = model.head_count
    dh = model.model_dim // heads
    xn = (np.asarray(x, dtype=np.float64) - model.feat_mean) / model.feat_scale
    t = xn @ v("embed_w") + v("embed_b")
    layers = []
    for i in range(ENCODER_LAYERS):
        p = f"enc{i}_"
        t_in = t
        q = _split_heads(t_in @ v(p + "wq") + v(p + "bq"), heads)
        k = _split_heads(t_in @ v(p + "wk") + v(p + "bk"), heads)
        vv = _split_heads(t_in @ v(p + "wv") + v(p + "bv"), heads)
        scores = q @ k.transpose(0, 1, 3, 2) / np.sqrt(dh)
        scores = scores - scores.max(axis=-1, keepdims=True)
        e = np.exp(scores)
        attn = e / e.sum(axis=-1, keepdims=True)
        zh = attn @ vv
        z = _merge_heads(zh)
        o = z @ v(p + "wo") + v(p + "bo")
        t1, ln1_cache = _layernorm(t_in + o, v(p + "ln1_g"), v(p + "ln1_b"))
        a1 = np.tanh(t1 @ v(p + "ff_w1") + v(p + "ff_b1"))
        f = a1 @ v(p + "ff_w2") + v(p + "ff_b2")
        t, ln2_cache = _layernorm(t1 + f, v(p + "ln2_g"), v(p + "ln2_b"))
        layers.append({
            "t_in": t_in, "q": q, "k": k, "v": vv, "attn": attn, "z": z,
            "ln1": ln1_cache, "t1": t1, "a1": a1, "ln2": ln2_cache,
        })
    pooled = t.mean(axis=1)
    h0 = np.tanh(pooled @ v("fc0_w") + v("fc0_b"))
    h1 = np.tanh(h0 @ v("fc1_w") + v("fc1_b"))
    y = (h1 @ v("fc2_w") + v("fc2_b"))[:, 0]
    cache = None
    if want_cache:
        cache = {"xn": xn, "layers": layers, "t_final": t, "pooled": pooled, "h0": h0, "h1": h1}
    return y, cache


def attention_rows(model: PredictorModel, x: np.ndarray) -> list[np.ndarray]:
    """Per-layer attention probability tensors for one input (B,nh,H,H)."""
    _, cache = forward(model, x, want_cache=True)
    return [layer["attn"] for layer in cache["layers"]]


def backward(model: PredictorModel, cache: dict, dy: np.ndarray) -> np.ndarray:
    """Gradient of the cached forward pass w.r.t. every parameter.

    ``dy`` is dLoss/dy_norm per batch element; returns a flat array aligned
    with ``model.params``.
    """
    v = model.view
    heads = model.head_count
    dh = model.model_dim // heads
    grads = np.zeros_like(model.params)
    gview = PredictorModel(
        token_dim=model.token_dim, model_dim=model.model_dim,
        head_count=model.head_count, ff_dim=model.ff_dim, params=grads,
    )
    gv = gview.view
    grads = gview.params  # the buffer the named views alias

    h1, h0, pooled = cache["h1"], cache["h0"], cache["pooled"]
    dy = np.asarray(dy, dtype=np.float64)
    gv("fc2_w")[...] += h1.T @ dy[:, None]
    gv("fc2_b")[...] += dy.sum()
    dh1 = dy[:, None] * v("fc2_w")[:, 0]
    dh1 = dh1 * (1.0 - h1 * h1)
    gv("fc1_w")[...] += h0.T @ dh1
    gv("fc1_b")[...] += dh1.sum(axis=0)
    dh0 = dh1 @ v("fc1_w").T
    dh0 = dh0 * (1.0 - h0 * h0)
    gv("fc0_w")[...] += pooled.T @ dh0
    gv("fc0_b")[...] += dh0.sum(axis=0)
    dpooled = dh0 @ v("fc0_w").T

    t_final = cache["t_final"]
    n_tokens = t_final.shape[1]
    dt = np.repeat(dpooled[:, None, :], n_tokens, axis=1) / n_tokens

    for i in reversed(range(ENCODER_LAYERS)):
        p = f"enc{i}_"
        layer = cache["layers"][i]
        dr2, dg2, db2 = _layernorm_backward(dt, layer["ln2"], v(p + "ln2_g"))
        gv(p + "ln2_g")[...] += dg2
        gv(p + "ln2_b")[...] += db2
        dt1 = dr2.copy()
        df = dr2
        a1 = layer["a1"]
        gv(p + "ff_w2")[...] += np.einsum("bhf,bhd->fd", a1, df)
        gv(p + "ff_b2")[...] += df.sum(axis=(0, 1))
        da1 = df @ v(p + "ff_w2").T
        da1 = da1 * (1.0 - a1 * a1)
        t1 = layer["t1"]
        gv(p + "ff_w1")[...] += np.einsum("bhd,bhf->df", t1, da1)
        gv(p + "ff_b1")[...] += da1.sum(axis=(0, 1))
        dt1 += da1 @ v(p + "ff_w1").T
        dr1, dg1, db1 = _layernorm_backward(dt1, layer["ln1"], v(p + "ln1_g"))
        gv(p + "ln1_g")[...] += dg1
        gv(p + "ln1_b")[...] += db1
        dt_in = dr1.copy()
        do = dr1
        z = layer["z"]
        gv(p + "wo")[...] += np.einsum("bhd,bhe->de", z, do)
        gv(p + "bo")[...] += do.sum(axis=(0, 1))
        dz = _split_heads(do @ v(p + "wo").T, heads)
        attn, q, k, vv = layer["attn"], layer["q"], layer["k"], layer["v"]
        dattn = dz @ vv.transpose(0, 1, 3, 2)
        dvv = attn.transpose(0, 1, 3, 2) @ dz
        dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
        dscores /= np.sqrt(dh)
        dq = dscores @ k
        dk = dscores.transpose(0, 1, 3, 2) @ q
        t_in = layer["t_in"]
        for name, dheaded in (("wq", dq), ("wk", dk), ("wv", dvv)):
            dmerged = _merge_heads(dheaded)
            gv(p + name)[...] += np.einsum("bht,bhd->td", t_in, dmerged)
            gv(p + "b" + name[1])[...] += dmerged.sum(axis=(0, 1))
            dt_in += dmerged @ v(p + name).T
        dt = dt_in

    xn = cache["xn"]
    gv("embed_w")[...] += np.einsum("bht,bhd->td", xn, dt)
    gv("embed_b")[...] += dt.sum(axis=(0, 1))
    return grads


def predict(model: PredictorModel, seq: np.ndarray) -> float:
    """Bandwidth (GB/s) for one raw feature sequence, clamped positive."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2:
        raise ModelFormatError(f"expected a (tokens, {model.token_dim}) sequence, got shape {seq.shape}")
    y, _ = forward(model, seq[None])
    value = float(y[0]) * model.target_scale + model.target_mean
    return max(MIN_BW_GBPS, value)


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-3
    batch_size: int = 32
    max_epochs: int = 300
    patience: int = 25
    validation_fraction: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")


Sample = tuple[np.ndarray, float]


def _check_samples(samples: Sequence[Sample], token_dim: int) -> None:
    if len(samples) < 4:
        raise ValueError(f"need at least 4 samples to train, got {len(samples)}")
    if len(samples) < 50:
        warnings.warn(f"training on only {len(samples)} samples; expect poor generalization", stacklevel=3)
    for seq, label in samples:
        if label <= 0:
            raise ValueError(f"labels must be positive, got {label}")
        if np.asarray(seq).shape[-1] != token_dim:
            raise ValueError("sample feature width does not match model token_dim")


def predict_many(model: PredictorModel, seqs: Sequence[np.ndarray]) -> np.ndarray:
    """Vectorized :func:`predict` over sequences of mixed lengths."""
    out = np.empty(len(seqs))
    buckets: dict[int, list[int]] = {}
    for i, seq in enumerate(seqs):
        buckets.setdefault(len(seq), []).append(i)
    for length, idx in buckets.items():
        x = np.stack([np.asarray(seqs[i], dtype=np.float64) for i in idx])
        y, _ = forward(model, x)
        out[idx] = y * model.target_scale + model.target_mean
    return np.maximum(MIN_BW_GBPS, out)


def _mae_gbps(model: PredictorModel, samples: Sequence[Sample]) -> float:
    preds = predict_many(model, [seq for seq, _ in samples])
    labels = np.array([label for _, label in samples])
    return float(np.mean(np.abs(preds - labels)))


def _length_batches(indices: list[int], samples: Sequence[Sample], batch_size: int):
    buckets: dict[int, list[int]] = {}
    for idx in indices:
        buckets.setdefault(len(samples[idx][0]), []).append(idx)
    for length in sorted(buckets):
        bucket = buckets[length]
        for start in range(0, len(bucket), batch_size):
            yield bucket[start:start + batch_size]


class _RmsProp:
    """Momentum-free adaptive step: scale each gradient by its running RMS."""

    def __init__(self, n: int, lr: float, decay: float = 0.95, eps: float = 1e-8):
        self.cache = np.zeros(n)
        self.lr, self.decay, self.eps = lr, decay, eps

    def step(self, params: np.ndarray, grads: np.ndarray) -> None:
        self.cache = self.decay * self.cache + (1.0 - self.decay) * grads * grads
        params -= self.lr * grads / (np.sqrt(self.cache) + self.eps)


def _fit(
    model: PredictorModel,
    samples: Sequence[Sample],
    cfg: TrainConfig,
    refresh_stats: bool,
) -> tuple[PredictorModel, list[dict]]:
    _check_samples(samples, model.token_dim)
    out = model.clone()
    labels = np.array([label for _, label in samples], dtype=np.float64)
    if np.ptp(labels) == 0.0:
        warnings.warn("all training labels are identical; fitting the output bias only", stacklevel=3)
        out.target_mean = float(labels[0])
        out.target_scale = 1.0
        out.view("fc2_w")[...] = 0.0
        out.view("fc2_b")[...] = 0.0
        return out, [{"epoch": 0, "train_mae": 0.0, "val_mae": 0.0}]

    rng = np.random.default_rng([cfg.seed, 0x7EA1])
    order = rng.permutation(len(samples))
    n_val = max(1, int(round(cfg.validation_fraction * len(samples))))
    val_idx = [int(i) for i in order[:n_val]]
    train_idx = [int(i) for i in order[n_val:]]
    if not train_idx:
        raise ValueError("validation split leaves no training samples")

    if refresh_stats:
        feats = np.concatenate([np.asarray(samples[i][0], dtype=np.float64) for i in train_idx])
        out.feat_mean = feats.mean(axis=0)
        scale = feats.std(axis=0)
        out.feat_scale = np.where(scale > 1e-9, scale, 1.0)
        tr_labels = labels[train_idx]
        out.target_mean = float(tr_labels.mean())
        ts = float(tr_labels.std())
        out.target_scale = ts if ts > 1e-9 else 1.0

    val_samples = [samples[i] for i in val_idx]
    opt = _RmsProp(out.n_params, cfg.learning_rate)
    best_params = out.params.copy()
    best_val = _mae_gbps(out, val_samples)
    history = [{"epoch": 0, "train_mae": _mae_gbps(out, [samples[i] for i in train_idx]), "val_mae": best_val}]
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        perm = [train_idx[int(i)] for i in rng.permutation(len(train_idx))]
        epoch_abs, epoch_n = 0.0, 0
        for batch in _length_batches(perm, samples, cfg.batch_size):
            x = np.stack([np.asarray(samples[i][0], dtype=np.float64) for i in batch])
            t_norm = (labels[batch] - out.target_mean) / out.target_scale
            y, cache = forward(out, x, want_cache=True)
            resid = y - t_norm
            if not np.all(np.isfinite(resid)):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} (lr={cfg.learning_rate}, batch={len(batch)})"
                )
            epoch_abs += float(np.abs(resid).sum())
            epoch_n += len(batch)
            dy = np.sign(resid) / len(batch)
            grads = backward(out, cache, dy)
            opt.step(out.params, grads)
        train_mae = epoch_abs / epoch_n * out.target_scale
        val_mae = _mae_gbps(out, val_samples)
        history.append({"epoch": epoch, "train_mae": train_mae, "val_mae": val_mae})
        if val_mae < best_val - 1e-12:
            best_val = val_mae
            best_params = out.params.copy()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                logger.info("early stop at epoch %d (best val MAE %.4f GB/s)", epoch, best_val)
                break
    out.params[...] = best_params
    return out, history


def train_offline(
    model: PredictorModel,
    samples: Sequence[Sample],
    cfg: TrainConfig,
) -> tuple[PredictorModel, list[dict]]:
    """Fit on (feature sequence, bandwidth GB/s) pairs with early stopping.

    Normalization stats are re-derived from the training split. Returns a new
    model at its best validation checkpoint plus the per-epoch MAE history
    (GB/s); the input model is untouched.
    """
    return _fit(model, samples, cfg, refresh_stats=True)


def update_online(model: PredictorModel, buffer, cfg: TrainConfig) -> PredictorModel:
    """Continual update from a replay buffer, keeping normalization stats.

    Consumes the buffer's untrained samples mixed with a 4:1 replay of older
    ones; with nothing new pending, returns a parameter-identical clone.
    """
    if len(buffer) == 0:
        raise ValueError("cannot update from an empty sample buffer")
    fresh = buffer.pending_samples()
    if not fresh:
        return model.clone()
    rng = np.random.default_rng([cfg.seed, 0x0111])
    replay = buffer.sample_old(4 * len(fresh), rng)
    updated, _ = _fit(model, list(fresh) + list(replay), cfg, refresh_stats=False)
    buffer.mark_trained()
    return updated


def gradient_check(
    model: PredictorModel,
    seq: np.ndarray,
    label: float,
    n_params: int = 50,
    step: float = 1e-5,
    seed: int = 0,
    indices: Sequence[int] | None = None,
) -> float:
    """Max relative error of analytic vs central-difference gradients.

    The loss is the squared error on the normalized scale; gradients are
    compared on a random parameter sample (or explicit ``indices``).
    """
    seq = np.asarray(seq, dtype=np.float64)
    t_norm = (label - model.target_mean) / model.target_scale
    y, cache = forward(model, seq[None], want_cache=True)
    analytic = backward(model, cache, np.array([2.0 * (y[0] - t_norm)]))

    def loss_at(vec: np.ndarray) -> float:
        probe = model.clone()
        probe.params[...] = vec
        yy, _ = forward(probe, seq[None])
        return float((yy[0] - t_norm) ** 2)

    if indices is None:
        rng = np.random.default_rng([seed, 0x9C])
        count = min(n_params, model.n_params)
        indices = rng.choice(model.n_params, size=count, replace=False)
    worst = 0.0
    base = model.params.copy()
    for idx in indices:
        idx = int(idx)
        vec = base.copy()
        vec[idx] = base[idx] + step
        up = loss_at(vec)
        vec[idx] = base[idx] - step
        down = loss_at(vec)
        numeric = (up - down) / (2.0 * step)
        denom = max(abs(analytic[idx]), abs(numeric), 1e-6)
        worst = max(worst, abs(analytic[idx] - numeric) / denom)
    return worst
