"""The dynamic intuition transformer.

Each block quantizes its input against a shared codebook, derives three
signals from the result, and runs masked multi-head attention:

* a sparse routing mask M_sparse = sigmoid(q_gate k_gateT + B_mask), built
  from projections of the quantized stream, multiplied into the
  post-softmax attention and renormalized;
* a confidence gate g = sigmoid(W_g x_first + b), one scalar per sample,
  computed from the position-0 vector entering the block;
* an enhancement x + g (z_q W_pT) that injects the quantized symbol back
  into the residual stream, scaled by the gate.

Blocks are pre-norm residual with a ReLU feed-forward.  With
``intuition_enabled=False`` the quantizer, router, gate, and enhancement are
all skipped and the block is a standard transformer block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import autodiff as ad
from .quantizer import Codebook, quantize, straight_through

NEG_INF = -1e9
ROW_FALLBACK_EPS = 1e-8


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 128
    num_heads: int = 4
    num_layers: int = 2
    sequence_length: int = 100
    codebook_size: int = 256
    num_classes: int = 4
    ffn_hidden: int = 0          # 0 means 4 * d_model
    intuition_enabled: bool = True
    pad_id: int = 0

    def __post_init__(self):
        if self.d_model % self.num_heads != 0:
            raise ValueError(
                f"d_model {self.d_model} not divisible by num_heads {self.num_heads}")
        if self.ffn_hidden == 0:
            self.ffn_hidden = 4 * self.d_model

    @property
    def head_dim(self) -> int:
        return self.d_model // self.num_heads


@dataclass
class LayerTrace:
    """Per-block introspection for one batch.

    ``symbol_index`` holds the position-0 quantization index per sample (the
    block's logged intuition symbol); ``all_indices`` the full per-position
    grid.  ``attention`` is the head-averaged post-renormalization matrix,
    filled only when tracing is requested.  All are plain arrays; the two
    losses stay differentiable.
    """

    symbol_index: Optional[np.ndarray]
    gate_score: Optional[np.ndarray]
    attention: Optional[np.ndarray]
    codebook_loss: Optional[ad.Tensor]
    commitment_loss: Optional[ad.Tensor]
    all_indices: Optional[np.ndarray] = None
    gate_tensor: Optional[ad.Tensor] = None            # (B,1,1), differentiable
    commitment_per_sample: Optional[ad.Tensor] = None  # (B,), differentiable


@dataclass
class ForwardResult:
    logits: ad.Tensor
    traces: List[LayerTrace]


@dataclass
class ReconResult:
    logits: ad.Tensor
    traces: List[LayerTrace]


def symbolic_route(z: ad.Tensor, router_wq: ad.Tensor, router_wk: ad.Tensor,
                   mask_bias: ad.Tensor) -> ad.Tensor:
    """sigmoid(q_gate k_gateT + B_mask) over the quantized stream."""
    q_gate = ad.matmul(z, router_wq)
    k_gate = ad.matmul(z, router_wk)
    logits = ad.add(ad.matmul(q_gate, ad.transpose_last_two(k_gate)), mask_bias)
    return ad.sigmoid(logits)


def intuition_gate(x_first: ad.Tensor, gate_w: ad.Tensor,
                   gate_b: ad.Tensor) -> ad.Tensor:
    """sigmoid(W_g x_first + b): one confidence scalar per sample, (B,1,1)."""
    return ad.sigmoid(ad.add(ad.matmul(x_first, gate_w), gate_b))


def enhance(x: ad.Tensor, g: ad.Tensor, z: ad.Tensor,
            sym_proj: ad.Tensor) -> ad.Tensor:
    """x + g (z W_pT): gated reinjection of the quantized symbol."""
    return ad.add(x, ad.mul(g, ad.matmul(z, ad.transpose_last_two(sym_proj))))


def masked_attention(x: ad.Tensor, m_sparse: Optional[ad.Tensor],
                     params: Dict[str, ad.Tensor], prefix: str,
                     num_heads: int, pad_additive: Optional[ad.Tensor] = None,
                     need_trace: bool = False,
                     probe: Optional[list] = None) -> Tuple[ad.Tensor, Optional[np.ndarray]]:
    """Multi-head attention with the sparse mask folded in post-softmax.

    Per head: A = softmax(QKT / sqrt(d_h) + pad bias); A' = A * M_sparse
    renormalized row-wise; rows whose masked sum underflows fall back to the
    unmasked row.  Head outputs are concatenated and projected.
    """
    head_dim = params[f"{prefix}attn_q0"].shape[1]
    inv_sqrt = 1.0 / math.sqrt(head_dim)
    outs = []
    attn_sum = None
    for h in range(num_heads):
        q = ad.matmul(x, params[f"{prefix}attn_q{h}"])
        k = ad.matmul(x, params[f"{prefix}attn_k{h}"])
        v = ad.matmul(x, params[f"{prefix}attn_v{h}"])
        scores = ad.scale(ad.matmul(q, ad.transpose_last_two(k)), inv_sqrt)
        if pad_additive is not None:
            scores = ad.add(scores, pad_additive)
        attn = ad.softmax(scores)
        if m_sparse is not None:
            masked = ad.mul(attn, m_sparse)
            rowsum = ad.sum(masked, axis=-1, keepdims=True)
            inv = ad.exp(ad.scale(ad.log(ad.add(rowsum, 1e-9)), -1.0))
            renorm = ad.mul(masked, inv)
            dead = (rowsum.data < ROW_FALLBACK_EPS).astype(rowsum.data.dtype)
            if probe is not None:
                probe.append(dead.tobytes())
            if dead.any():
                keep = ad.Tensor(dead)
                attn = ad.add(ad.mul(attn, keep), ad.mul(renorm, ad.sub(1.0, keep)))
            else:
                attn = renorm
        outs.append(ad.matmul(attn, v))
        if need_trace:
            attn_sum = attn.data if attn_sum is None else attn_sum + attn.data
    out = ad.matmul(ad.concat(outs, axis=-1), params[f"{prefix}attn_out"])
    avg = None if attn_sum is None else (attn_sum / num_heads)
    return out, avg


def _affine_norm(x: ad.Tensor, gain: ad.Tensor, bias: ad.Tensor) -> ad.Tensor:
    return ad.add(ad.mul(ad.layer_norm(x), gain), bias)


def _ffn(x: ad.Tensor, params: Dict[str, ad.Tensor], prefix: str,
         probe: Optional[list] = None) -> ad.Tensor:
    pre = ad.add(ad.matmul(x, params[f"{prefix}ffn_w1"]), params[f"{prefix}ffn_b1"])
    if probe is not None:
        probe.append((pre.data > 0).tobytes())
    return ad.add(ad.matmul(ad.relu(pre), params[f"{prefix}ffn_w2"]),
                  params[f"{prefix}ffn_b2"])


def block_forward(x: ad.Tensor, params: Dict[str, ad.Tensor], prefix: str,
                  codebook: Codebook, config: ModelConfig,
                  pad_additive: Optional[ad.Tensor] = None,
                  need_trace: bool = False,
                  probe: Optional[list] = None,
                  detach_gate: bool = False,
                  frozen_offset: Optional[np.ndarray] = None,
                  offset_capture: Optional[list] = None) -> Tuple[ad.Tensor, LayerTrace]:
    """One dynamic block: quantize, route, gate, enhance, attend, feed forward.

    ``detach_gate`` freezes the gate path (early fine-tuning stage): the gate
    value still scales the enhancement but receives no gradient.

    ``frozen_offset`` replaces quantization by the fixed map x -> x + offset
    through the same straight-through op.  Used by the gradient checker: the
    frozen forward agrees with the real one at the capture point and is
    differentiable, so finite differences measure exactly what the
    straight-through backward claims.
    """
    if config.intuition_enabled:
        if frozen_offset is not None:
            z = straight_through(x, ad.Tensor(x.data + frozen_offset))
            res = None
        else:
            res = quantize(x, codebook)
            if probe is not None:
                probe.append(res.indices.tobytes())
            if offset_capture is not None:
                offset_capture.append(res.z_q.data - x.data)
            z = straight_through(x, res.z_q)
        m_sparse = symbolic_route(z, params[f"{prefix}router_wq"],
                                  params[f"{prefix}router_wk"],
                                  params[f"{prefix}mask_bias"])
        x_first = ad.slice_axis(x, 1, 0, 1)
        g = intuition_gate(x_first, params[f"{prefix}gate_w"],
                           params[f"{prefix}gate_b"])
        g_used = ad.stop_gradient(g) if detach_gate else g
        h = enhance(x, g_used, z, params[f"{prefix}sym_proj"])
        if res is not None:
            trace_sym = res.indices[:, 0].copy()
            cb_loss, cm_loss = res.codebook_loss, res.commitment_loss
            all_idx = res.indices
            cm_per_sample = res.commitment_per_sample
        else:
            trace_sym = all_idx = None
            cb_loss = cm_loss = cm_per_sample = None
        trace_gate = g.data.reshape(-1).copy()
        gate_tensor = g
    else:
        m_sparse = None
        h = x
        trace_sym = trace_gate = all_idx = None
        cb_loss = cm_loss = gate_tensor = cm_per_sample = None
    attn_out, attn_avg = masked_attention(
        _affine_norm(h, params[f"{prefix}ln1_g"], params[f"{prefix}ln1_b"]),
        m_sparse, params, prefix, config.num_heads, pad_additive,
        need_trace, probe)
    mid = ad.add(h, attn_out)
    y = ad.add(mid, _ffn(
        _affine_norm(mid, params[f"{prefix}ln2_g"], params[f"{prefix}ln2_b"]),
        params, prefix, probe))
    trace = LayerTrace(symbol_index=trace_sym, gate_score=trace_gate,
                       attention=attn_avg, codebook_loss=cb_loss,
                       commitment_loss=cm_loss, all_indices=all_idx,
                       gate_tensor=gate_tensor, commitment_per_sample=cm_per_sample)
    return y, trace


def init_params(config: ModelConfig, seed: int = 42) -> Tuple[Dict[str, ad.Tensor], Codebook]:
    """All learnable tensors, drawn in a fixed order for reproducibility."""
    rng = np.random.default_rng(seed)
    params: Dict[str, ad.Tensor] = {}

    def normal(name, shape, std):
        params[name] = ad.Tensor(
            rng.normal(0.0, std, size=shape).astype(np.float32), requires_grad=True)

    def const(name, shape, value):
        params[name] = ad.Tensor(
            np.full(shape, value, dtype=np.float32), requires_grad=True)

    d, L = config.d_model, config.sequence_length
    inv_d = 1.0 / math.sqrt(d)
    normal("tok_emb", (config.vocab_size, d), 0.02)
    normal("pos_emb", (L, d), 0.02)
    for i in range(config.num_layers):
        p = f"b{i}."
        normal(p + "router_wq", (d, d), inv_d)
        normal(p + "router_wk", (d, d), inv_d)
        const(p + "mask_bias", (L, L), 0.0)
        normal(p + "gate_w", (d, 1), inv_d)
        const(p + "gate_b", (1,), 0.0)
        normal(p + "sym_proj", (d, d), inv_d)
        for h in range(config.num_heads):
            normal(p + f"attn_q{h}", (d, config.head_dim), inv_d)
            normal(p + f"attn_k{h}", (d, config.head_dim), inv_d)
            normal(p + f"attn_v{h}", (d, config.head_dim), inv_d)
        normal(p + "attn_out", (d, d), inv_d)
        normal(p + "ffn_w1", (d, config.ffn_hidden), inv_d)
        const(p + "ffn_b1", (config.ffn_hidden,), 0.0)
        normal(p + "ffn_w2", (config.ffn_hidden, d), 1.0 / math.sqrt(config.ffn_hidden))
        const(p + "ffn_b2", (d,), 0.0)
        const(p + "ln1_g", (d,), 1.0)
        const(p + "ln1_b", (d,), 0.0)
        const(p + "ln2_g", (d,), 1.0)
        const(p + "ln2_b", (d,), 0.0)
    normal("cls_w", (d, config.num_classes), inv_d)
    const("cls_b", (config.num_classes,), 0.0)
    normal("rec_w", (d, config.vocab_size), inv_d)
    const("rec_b", (config.vocab_size,), 0.0)
    bound = 1.0 / config.codebook_size
    code = rng.uniform(-bound, bound,
                       size=(config.codebook_size, d)).astype(np.float32)
    params["codebook"] = ad.Tensor(code, requires_grad=True)
    return params, Codebook(params["codebook"])


class Model:
    """Parameter bundle plus the forward passes.

    ``params["codebook"]`` and ``codebook.vectors`` are the same Tensor; the
    optimizer mutates tensor data in place so the alias never breaks.
    """

    def __init__(self, config: ModelConfig, seed: int = 42):
        self.config = config
        self.params, self.codebook = init_params(config, seed)

    def set_param(self, name: str, tensor: ad.Tensor) -> None:
        self.params[name] = tensor
        if name == "codebook":
            self.codebook.vectors = tensor

    def _embed(self, ids: np.ndarray) -> Tuple[ad.Tensor, Optional[ad.Tensor]]:
        ids = np.asarray(ids)
        if ids.ndim == 1:
            ids = ids[None, :]
        x = ad.add(ad.embedding_gather(self.params["tok_emb"], ids),
                   self.params["pos_emb"])
        pad_rows = ids == self.config.pad_id
        if pad_rows.any():
            bias = np.where(pad_rows[:, None, :], NEG_INF, 0.0).astype(np.float32)
            pad_additive = ad.Tensor(bias)
        else:
            pad_additive = None
        return x, pad_additive

    def forward(self, ids: np.ndarray, need_trace: bool = False,
                probe: Optional[list] = None,
                detach_gate: bool = False,
                frozen_offsets: Optional[List[np.ndarray]] = None,
                offset_capture: Optional[list] = None) -> ForwardResult:
        """ids (B, L) or (L,) -> class logits (B, C) plus per-layer traces."""
        x, pad_additive = self._embed(ids)
        traces = []
        for i in range(self.config.num_layers):
            x, trace = block_forward(x, self.params, f"b{i}.", self.codebook,
                                     self.config, pad_additive, need_trace,
                                     probe, detach_gate,
                                     None if frozen_offsets is None else frozen_offsets[i],
                                     offset_capture)
            traces.append(trace)
        pooled = ad.slice_axis(x, 1, 0, 1)
        logits = ad.add(ad.matmul(pooled, self.params["cls_w"]), self.params["cls_b"])
        return ForwardResult(logits=ad.sum(logits, axis=1), traces=traces)

    def reconstruct(self, ids: np.ndarray, full_stack: bool = False,
                    probe: Optional[list] = None) -> ReconResult:
        """Per-position vocabulary logits from the quantized stream.

        By default only the first block runs; the stack can be included for
        experiments but the pretraining objective reads block 1.
        """
        x, pad_additive = self._embed(ids)
        depth = self.config.num_layers if full_stack else 1
        traces = []
        for i in range(depth):
            x, trace = block_forward(x, self.params, f"b{i}.", self.codebook,
                                     self.config, pad_additive, False, probe)
            traces.append(trace)
        logits = ad.add(ad.matmul(x, self.params["rec_w"]), self.params["rec_b"])
        return ReconResult(logits=logits, traces=traces)

    def zero_grads(self) -> None:
        for t in self.params.values():
            t.grad = None
