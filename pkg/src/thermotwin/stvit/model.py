"""Three-stream spatiotemporal transformer: forward pass and hand-derived
gradients.

Layout conventions: cell tokens live in (B, T, HW, d) tensors; the spatial
stream attends over HW per timestep, the temporal-pixel stream over T per
cell, and the meteo stream over T meteo embeddings. Streams are pre-norm
blocks (LN -> attention -> residual, LN -> feed-forward -> residual), fused
additively, and read out per cell by one linear head over the flattened
(t_in * d) representation.

The backward pass recomputes nothing except attention probabilities (which
the kernels re-derive with identical arithmetic), so given fixed inputs the
gradients are exact for the computation the forward defines — verified
against central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _kernels
from .._kernels import attention_backward, attention_forward
from .config import StVitConfig

LN_EPS = 1e-5

#: fixed partial count for the deterministic layer-norm reductions
LN_CHUNKS = 64


class NonFiniteLossError(RuntimeError):
    def __init__(self, batch_indices):
        self.batch_indices = list(batch_indices)
        super().__init__(f"non-finite prediction for batch items {self.batch_indices}")


@dataclass
class ModelBatch:
    """Normalized tensors for a batch of windows; masked cells hold zeros.

    ``slice_keys`` (B, t_in) optionally identifies each (window, hour) pair
    by its absolute (hour, crop) coordinates. Overlapping sliding windows
    produce bitwise-identical spatial-stream slices for equal keys, so the
    forward runs that stream once per unique key (exact, not approximate).
    """
    spatial: np.ndarray   # (B, 4, H, W)
    utci_in: np.ndarray   # (B, t_in, H, W)
    meteo: np.ndarray     # (B, t_in, 7)
    target: np.ndarray    # (B, t_out, H, W)
    mask: np.ndarray      # (B, H, W) bool, True where UTCI is defined
    slice_keys: np.ndarray | None = None

    def __len__(self):
        return self.spatial.shape[0]

    def astype(self, dtype) -> "ModelBatch":
        return ModelBatch(*(np.ascontiguousarray(a, dtype=dtype)
                            for a in (self.spatial, self.utci_in, self.meteo,
                                      self.target)),
                          mask=np.ascontiguousarray(self.mask),
                          slice_keys=self.slice_keys)


def slice_keys_from_origins(origins, t_in: int) -> np.ndarray:
    """(B, t_in) int64 keys from window origins (row, col, t0)."""
    keys = np.empty((len(origins), t_in), np.int64)
    for b, (row, col, t0) in enumerate(origins):
        keys[b] = (np.arange(t0, t0 + t_in, dtype=np.int64) * 100_000_000
                   + row * 10_000 + col)
    return keys


def _layernorm(x, g, b):
    shape = x.shape
    out, xn, istd = _kernels.ln_fwd(
        np.ascontiguousarray(x).reshape(-1, shape[-1]), g, b, LN_EPS)
    return out.reshape(shape), xn, istd


def _layernorm_bwd(dout, xn, istd, g):
    shape = dout.shape
    dx, dg_part, db_part = _kernels.ln_bwd(
        np.ascontiguousarray(dout).reshape(-1, shape[-1]), xn, istd, g,
        LN_CHUNKS)
    return dx.reshape(shape), dg_part.sum(axis=0), db_part.sum(axis=0)


def _split_heads(x, num_heads):
    # (N, L, d) -> (N * heads, L, dh), contiguous for the kernels
    n, L, d = x.shape
    dh = d // num_heads
    return np.ascontiguousarray(
        x.reshape(n, L, num_heads, dh).transpose(0, 2, 1, 3)
    ).reshape(n * num_heads, L, dh)


def _merge_heads(x, num_heads):
    nh, L, dh = x.shape
    n = nh // num_heads
    return np.ascontiguousarray(
        x.reshape(n, num_heads, L, dh).transpose(0, 2, 1, 3)
    ).reshape(n, L, num_heads * dh)


def _linear(x, w, b):
    return x @ w + b


def _block_forward(params, prefix, x, config):
    """One pre-norm attention+FFN block over (N, L, d) tokens."""
    p = lambda s: params[prefix + s]
    nh = config.num_heads
    d = config.hidden_dim
    scale = 1.0 / np.sqrt(config.head_dim)

    ln1, xn1, istd1 = _layernorm(x, p("ln1_g"), p("ln1_b"))
    wqkv = np.concatenate([p("wq"), p("wk"), p("wv")], axis=1)
    bqkv = np.concatenate([p("bq"), p("bk"), p("bv")])
    qkv = ln1 @ wqkv + bqkv
    q = _split_heads(qkv[..., :d], nh)
    k = _split_heads(qkv[..., d:2 * d], nh)
    v = _split_heads(qkv[..., 2 * d:], nh)
    attn = _merge_heads(attention_forward(q, k, v, scale), nh)
    x1 = x + _linear(attn, p("wo"), p("bo"))

    ln2, xn2, istd2 = _layernorm(x1, p("ln2_g"), p("ln2_b"))
    hid = np.maximum(_linear(ln2, p("ff_w1"), p("ff_b1")), 0.0)
    out = x1 + _linear(hid, p("ff_w2"), p("ff_b2"))

    cache = {"xn1": xn1, "istd1": istd1, "q": q, "k": k, "v": v,
             "attn": attn, "x1": x1, "xn2": xn2, "istd2": istd2, "hid": hid}
    return out, cache


def _block_backward(params, prefix, dout, cache, config, grads):
    p = lambda s: params[prefix + s]
    g = lambda s: grads[prefix + s]
    nh = config.num_heads
    d = config.hidden_dim
    scale = 1.0 / np.sqrt(config.head_dim)

    xn1, istd1 = cache["xn1"], cache["istd1"]   # flat (rows, d) / (rows,)
    xn2, istd2 = cache["xn2"], cache["istd2"]
    x1, hid, attn = cache["x1"], cache["hid"], cache["attn"]

    flat = lambda a: a.reshape(-1, a.shape[-1])

    # feed-forward
    dx1 = dout.copy()
    dhid = dout @ p("ff_w2").T
    g("ff_w2")[...] += flat(hid).T @ flat(dout)
    g("ff_b2")[...] += flat(dout).sum(axis=0)
    dhid *= hid > 0
    ln2 = xn2 * p("ln2_g") + p("ln2_b")
    g("ff_w1")[...] += ln2.T @ flat(dhid)
    g("ff_b1")[...] += flat(dhid).sum(axis=0)
    dln2 = dhid @ p("ff_w1").T
    dx, dg2, db2 = _layernorm_bwd(dln2, xn2, istd2, p("ln2_g"))
    g("ln2_g")[...] += dg2
    g("ln2_b")[...] += db2
    dx1 += dx

    # attention projection
    dattn = dx1 @ p("wo").T
    g("wo")[...] += flat(attn).T @ flat(dx1)
    g("bo")[...] += flat(dx1).sum(axis=0)

    dq_h, dk_h, dv_h = attention_backward(
        cache["q"], cache["k"], cache["v"], _split_heads(dattn, nh), scale)
    dqkv = np.concatenate([_merge_heads(dq_h, nh), _merge_heads(dk_h, nh),
                           _merge_heads(dv_h, nh)], axis=-1)

    ln1 = xn1 * p("ln1_g") + p("ln1_b")
    dwqkv = ln1.T @ flat(dqkv)
    dbqkv = flat(dqkv).sum(axis=0)
    for i, name in enumerate(("wq", "wk", "wv")):
        g(name)[...] += dwqkv[:, i * d:(i + 1) * d]
        g("b" + name[1])[...] += dbqkv[i * d:(i + 1) * d]
    wqkv = np.concatenate([p("wq"), p("wk"), p("wv")], axis=1)
    dln1 = dqkv @ wqkv.T
    dx_ln, dg1, db1 = _layernorm_bwd(dln1, xn1, istd1, p("ln1_g"))
    g("ln1_g")[...] += dg1
    g("ln1_b")[...] += db1

    return dx1 + dx_ln  # residual + layernorm paths


def _stream_forward(params, stream, x, config):
    caches = []
    for layer in range(config.num_layers):
        x, cache = _block_forward(params, f"{stream}{layer}_", x, config)
        caches.append(cache)
    return x, caches


def _stream_backward(params, stream, dout, caches, config, grads):
    for layer in reversed(range(config.num_layers)):
        dout = _block_backward(params, f"{stream}{layer}_", dout,
                               caches[layer], config, grads)
    return dout


def forward(params, config: StVitConfig, spatial, utci_in, meteo,
            want_cache: bool = False, slice_keys=None):
    """Predict normalized UTCI for the next t_out hours.

    spatial (B,4,H,W), utci_in (B,t_in,H,W), meteo (B,t_in,7) ->
    (B, t_out, H, W). With want_cache=True also returns the activation
    cache consumed by :func:`backward`. ``slice_keys`` enables the exact
    spatial-stream deduplication for overlapping windows.
    """
    B, T, H, W = utci_in.shape
    if T != config.t_in:
        raise ValueError(f"expected t_in={config.t_in} input hours, got {T}")
    if spatial.shape != (B, 4, H, W):
        raise ValueError(f"spatial shape {spatial.shape} does not match input")
    if meteo.shape != (B, T, config.n_meteo_features):
        raise ValueError(f"meteo shape {meteo.shape} does not match input")
    HW = H * W
    d = config.hidden_dim
    dtype = spatial.dtype

    # per-cell features: 4 static channels broadcast over time + history
    feat = np.empty((B, T, HW, config.n_cell_features), dtype)
    feat[..., :4] = spatial.reshape(B, 1, 4, HW).transpose(0, 1, 3, 2)
    feat[..., 4] = utci_in.reshape(B, T, HW)
    x0 = feat @ params["embed_cell_w"] + params["embed_cell_b"]
    met0 = meteo @ params["embed_met_w"] + params["embed_met_b"]

    dedup = None
    x_sp = x0.reshape(B * T, HW, d)
    if slice_keys is not None:
        flat_keys = np.asarray(slice_keys).reshape(-1)
        uniq, rep_idx, inverse = np.unique(flat_keys, return_index=True,
                                           return_inverse=True)
        if len(uniq) < len(flat_keys):
            dedup = (rep_idx, inverse)
            x_sp = np.ascontiguousarray(x_sp[rep_idx])
    sp_u, sp_cache = _stream_forward(params, "sp", x_sp, config)
    sp_out = sp_u[dedup[1]] if dedup is not None else sp_u

    x0_t = np.ascontiguousarray(x0.transpose(0, 2, 1, 3))  # (B, HW, T, d)
    tp_out, tp_cache = _stream_forward(
        params, "tp", x0_t.reshape(B * HW, T, d), config)
    tm_out, tm_cache = _stream_forward(params, "tm", met0, config)

    fused = (sp_out.reshape(B, T, HW, d)
             + tp_out.reshape(B, HW, T, d).transpose(0, 2, 1, 3)
             + tm_out[:, :, None, :])
    z = np.ascontiguousarray(fused.transpose(0, 2, 1, 3)).reshape(B, HW, T * d)
    pred = (z @ params["head_w"] + params["head_b"]) \
        .transpose(0, 2, 1).reshape(B, config.t_out, H, W)
    if not want_cache:
        return pred
    cache = {"feat": feat, "meteo": meteo, "z": z, "shape": (B, T, H, W),
             "sp": sp_cache, "tp": tp_cache, "tm": tm_cache, "dedup": dedup}
    return pred, cache


def zero_grads(params) -> dict:
    return {k: np.zeros_like(v) for k, v in params.items()}


def backward(params, config: StVitConfig, dpred, cache, grads=None) -> dict:
    """Accumulate parameter gradients for d(loss)/d(pred) = dpred."""
    B, T, H, W = cache["shape"]
    HW = H * W
    d = config.hidden_dim
    if grads is None:
        grads = zero_grads(params)

    dz = dpred.reshape(B, config.t_out, HW).transpose(0, 2, 1) @ params["head_w"].T
    z2 = cache["z"].reshape(-1, T * d)
    grads["head_w"] += z2.T @ dpred.reshape(B, config.t_out, HW) \
        .transpose(0, 2, 1).reshape(-1, config.t_out)
    grads["head_b"] += dpred.sum(axis=(0, 2, 3))

    dfused = dz.reshape(B, HW, T, d).transpose(0, 2, 1, 3)  # (B, T, HW, d)

    dsp = np.ascontiguousarray(dfused).reshape(B * T, HW, d)
    dtp = np.ascontiguousarray(dfused.transpose(0, 2, 1, 3)).reshape(B * HW, T, d)
    dtm = dfused.sum(axis=2)

    dedup = cache.get("dedup")
    if dedup is not None:
        # duplicate slices share the forward point, so by linearity the
        # stream backward of the summed upstream gradient yields the summed
        # input gradient — exactly what the embedding weight grads need
        rep_idx, inverse = dedup
        dsp_u = np.zeros((len(rep_idx),) + dsp.shape[1:], dsp.dtype)
        for i, u in enumerate(inverse):
            dsp_u[u] += dsp[i]
        dsp = dsp_u
    dx0_sp = _stream_backward(params, "sp", dsp, cache["sp"], config, grads)
    dx0_tp = _stream_backward(params, "tp", dtp, cache["tp"], config, grads)
    dmet0 = _stream_backward(params, "tm", dtm, cache["tm"], config, grads)

    feat2 = cache["feat"].reshape(B * T, HW, config.n_cell_features)
    dx0_tp_slices = dx0_tp.reshape(B, HW, T, d).transpose(0, 2, 1, 3) \
        .reshape(B * T, HW, d)
    if dedup is not None:
        feat_sp = feat2[dedup[0]].reshape(-1, config.n_cell_features)
    else:
        feat_sp = feat2.reshape(-1, config.n_cell_features)
    dsp2 = dx0_sp.reshape(-1, d)
    dtp2 = np.ascontiguousarray(dx0_tp_slices).reshape(-1, d)
    grads["embed_cell_w"] += feat_sp.T @ dsp2
    grads["embed_cell_w"] += feat2.reshape(-1, config.n_cell_features).T @ dtp2
    grads["embed_cell_b"] += dsp2.sum(axis=0) + dtp2.sum(axis=0)
    met2 = cache["meteo"].reshape(-1, config.n_meteo_features)
    dmet2 = dmet0.reshape(-1, d)
    grads["embed_met_w"] += met2.T @ dmet2
    grads["embed_met_b"] += dmet2.sum(axis=0)
    return grads


def masked_mse(pred, target, mask):
    """Eq.-style MSE over unmasked cell-hours; also returns dloss/dpred."""
    t_out = pred.shape[1]
    m3 = mask[:, None, :, :]
    diff = (pred - target) * m3   # bool multiply keeps dtype
    m = int(mask.sum()) * t_out
    if m == 0:
        raise ValueError("no unmasked cells in batch")
    loss = float(np.vdot(diff, diff)) / m
    dpred = diff * (2.0 / m)
    return loss, dpred


def loss_and_grad(params, config: StVitConfig, batch: ModelBatch):
    """Masked MSE and exact parameter gradients for one batch."""
    pred, cache = forward(params, config, batch.spatial, batch.utci_in,
                          batch.meteo, want_cache=True,
                          slice_keys=batch.slice_keys)
    bad = ~np.isfinite(pred).all(axis=(1, 2, 3))
    if bad.any():
        raise NonFiniteLossError(np.nonzero(bad)[0])
    loss, dpred = masked_mse(pred, batch.target, batch.mask)
    grads = backward(params, config, dpred.astype(pred.dtype), cache)
    return loss, grads


def batch_loss(params, config: StVitConfig, batch: ModelBatch) -> float:
    pred = forward(params, config, batch.spatial, batch.utci_in, batch.meteo,
                   slice_keys=batch.slice_keys)
    loss, _ = masked_mse(pred, batch.target, batch.mask)
    return loss
